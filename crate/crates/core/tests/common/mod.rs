//! Randomized checks shared by the property suite and the acceptance run.
//! Each check drives a deterministic proptest runner and returns the
//! number of cases executed or the first failure.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use progmap::corpus::{tokenize, DataTable, EntityRecord, GroundTruth};
use progmap::evaluation::{mrr, MethodVariant, SimulatedUser};
use progmap::protocol::{Feedback, Session, SessionConfig};
use progmap::retrieval::{Bm25Params, InvertedIndex, RankedList};
use progmap::strategy::{LearnerConfig, Policy, StrategyMatrix};

pub const CASES: u32 = 1000;

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    runner(cases)
        .run(&strategy, test)
        .map(|()| cases)
        .map_err(|e| e.to_string())
}

/// A row of 1..=24 weights with at least one positive cell; about a
/// quarter of the cells are zero.
fn row_weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.001f64..100.0], 1..=24)
        .prop_filter("needs positive mass", |w| w.iter().any(|&x| x > 0.0))
}

fn matrix_from(weights: &[f64]) -> StrategyMatrix<u32, u32> {
    let mut m = StrategyMatrix::new();
    m.insert_row(0, weights.iter().enumerate().map(|(i, &w)| (i as u32, w)))
        .expect("positive mass");
    m
}

/// (action, reward, alpha) triples over a row of `width` actions.
fn reinforcement_log(width: usize, len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(u32, f64, f64)>> {
    prop::collection::vec(
        (0..width as u32, prop_oneof![1 => Just(0.0), 3 => 0.0f64..=1.0], 0.01f64..50.0),
        len,
    )
}

/// Every row sums to one and every probability lies in [0, 1], before and
/// after arbitrary reinforcement.
pub fn normalization(cases: u32) -> Result<u32, String> {
    let strategy = row_weights().prop_flat_map(|w| {
        let width = w.len();
        (Just(w), reinforcement_log(width, 0..40))
    });
    run(cases, strategy, |(weights, log)| {
        let mut m = matrix_from(&weights);
        for step in 0..=log.len() {
            let probabilities = m.row(&0).unwrap().probabilities();
            let sum: f64 = probabilities.iter().map(|(_, p)| p).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9, "sum {sum}");
            prop_assert!(probabilities.iter().all(|(_, p)| (0.0..=1.0).contains(p)));
            if let Some(&(action, reward, alpha)) = log.get(step) {
                m.reinforce(&0, &action, reward, alpha).unwrap();
            }
        }
        Ok(())
    })
}

/// A positive reward raises the selected action's probability and lowers
/// every other positive-mass action's probability.
pub fn monotone_reinforcement(cases: u32) -> Result<u32, String> {
    let strategy = row_weights().prop_flat_map(|w| {
        let width = w.len() as u32;
        (Just(w), 0..width, 0.001f64..=1.0, 0.01f64..50.0)
    });
    run(cases, strategy, |(weights, action, reward, alpha)| {
        let mut m = matrix_from(&weights);
        let before = m.row(&0).unwrap().probabilities();
        m.reinforce(&0, &action, reward, alpha).unwrap();
        let after: HashMap<u32, f64> = m.row(&0).unwrap().probabilities().into_iter().collect();
        for (a, p) in before {
            let q = after[&a];
            if a == action {
                // A sole positive cell already has probability one.
                if p < 1.0 {
                    prop_assert!(q > p, "selected {a}: {p} -> {q}");
                }
            } else if p > 0.0 {
                prop_assert!(q < p, "other {a}: {p} -> {q}");
            } else {
                prop_assert_eq!(q, 0.0);
            }
        }
        Ok(())
    })
}

/// Sampling without replacement never returns zero-mass actions, never
/// repeats an action and stops at the support size.
pub fn zero_mass_exclusion(cases: u32) -> Result<u32, String> {
    let strategy = (row_weights(), 1usize..30, any::<u64>());
    run(cases, strategy, |(weights, count, seed)| {
        let m = matrix_from(&weights);
        let row = m.row(&0).unwrap();
        let support = weights.iter().filter(|&&w| w > 0.0).count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..8 {
            let drawn = row.sample_distinct(count, &mut rng);
            prop_assert_eq!(drawn.len(), count.min(support));
            let distinct: BTreeSet<u32> = drawn.iter().copied().collect();
            prop_assert_eq!(distinct.len(), drawn.len());
            prop_assert!(drawn.iter().all(|&a| weights[a as usize] > 0.0));
        }
        Ok(())
    })
}

const VOCAB: &[&str] = &["pop", "soda", "drinks", "beef", "meat", "kroger", "cola", "juice", "7", "11"];

fn doc_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB), 1..6).prop_map(|w| w.join(" "))
}

fn table(source: &'static str, prefix: &'static str, docs: Vec<String>) -> DataTable {
    let records = docs
        .iter()
        .enumerate()
        .map(|(i, text)| EntityRecord::new(source, &format!("{prefix}{i}"), &[("name", text.as_str())]))
        .collect();
    DataTable::from_records(source, &["name"], records)
}

/// Feedback that only names entities of source 0 never changes the
/// learners kept for source 1.
pub fn source_isolation(cases: u32) -> Result<u32, String> {
    let docs = || prop::collection::vec(doc_text(), 1..7);
    let strategy = (docs(), docs(), docs(), any::<u64>(), prop::collection::vec(any::<prop::sample::Index>(), 1..5));
    run(cases, strategy, |(local, a, b, seed, picks)| {
        let local = table("local", "s", local);
        let config = LearnerConfig {
            policy: Policy::RothErev,
            external_policy: Policy::RothErev,
            rng_seed: seed,
            ..LearnerConfig::default()
        };
        let session_config = SessionConfig {
            expansion_enabled: true,
            ..SessionConfig::default()
        };
        let queries: Vec<String> = picks
            .iter()
            .map(|pick| {
                let record = pick.get(&local.records);
                tokenize(&record.attributes[0].1)[0].clone()
            })
            .collect();
        let mut session = Session::from_tables(local, vec![table("a", "r", a), table("b", "t", b)], config, session_config);
        for query in queries {
            let mut record = session.run_interaction(&query).unwrap();
            let mut feedback = Feedback::new();
            for entry in record.entries.iter().filter(|e| e.source == 0) {
                if let Some(first) = entry.ranked.ids().next() {
                    feedback.insert(0, &entry.intent, first);
                }
            }
            let before = &session.learners()[1];
            let (local_b, external_b) = (before.local.snapshot_string(), before.external.snapshot_string());
            session.apply_feedback(&mut record, &feedback).unwrap();
            let after = &session.learners()[1];
            prop_assert_eq!(local_b, after.local.snapshot_string());
            prop_assert_eq!(external_b, after.external.snapshot_string());
        }
        Ok(())
    })
}

fn ranked_and_relevant() -> impl Strategy<Value = (Vec<u32>, BTreeSet<u32>)> {
    (
        prop::collection::vec(0u32..40, 0..25).prop_map(|ids| {
            let mut seen = BTreeSet::new();
            ids.into_iter().filter(|i| seen.insert(*i)).collect::<Vec<_>>()
        }),
        prop::collection::btree_set(0u32..40, 0..6),
    )
}

fn as_list(ids: &[u32]) -> RankedList {
    RankedList::from_draw_order(ids.iter().map(|i| format!("e{i}")).collect())
}

fn as_set(ids: &BTreeSet<u32>) -> BTreeSet<String> {
    ids.iter().map(|i| format!("e{i}")).collect()
}

/// MRR is always 0 or 1/p for a positive integer p.
pub fn mrr_value_set(cases: u32) -> Result<u32, String> {
    run(cases, ranked_and_relevant(), |(ids, relevant)| {
        let value = mrr(&as_list(&ids), &as_set(&relevant));
        if value != 0.0 {
            let p = 1.0 / value;
            prop_assert!((p - p.round()).abs() < 1e-9 && p.round() >= 1.0, "mrr {value}");
            prop_assert!(p.round() as usize <= ids.len());
        }
        Ok(())
    })
}

/// MRR equals a positional scan for the first relevant entry.
pub fn mrr_brute_force(cases: u32) -> Result<u32, String> {
    run(cases, ranked_and_relevant(), |(ids, relevant)| {
        let mut expected = 0.0;
        for (i, id) in ids.iter().enumerate() {
            if relevant.contains(id) {
                expected = 1.0 / (i + 1) as f64;
                break;
            }
        }
        prop_assert_eq!(mrr(&as_list(&ids), &as_set(&relevant)), expected);
        Ok(())
    })
}

/// Okapi BM25 straight from token lists, for comparison with the index.
/// Repeated query terms count once per occurrence.
pub fn brute_force_bm25(docs: &[Vec<String>], query: &[String], params: Bm25Params) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    docs.iter()
        .map(|doc| {
            query
                .iter()
                .map(|term| {
                    let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
                    let tf = doc.iter().filter(|t| *t == term).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    let norm = params.k1 * (1.0 - params.b + params.b * doc.len() as f64 / avg);
                    idf * tf * (params.k1 + 1.0) / (tf + norm)
                })
                .sum()
        })
        .collect()
}

/// Top-k from the index equals a full scan on corpora of up to 50
/// records: same ids in the same order, scores within 1e-9.
pub fn bm25_top_k(cases: u32) -> Result<u32, String> {
    let strategy = (
        prop::collection::vec(doc_text(), 1..=50),
        prop::collection::vec(prop::sample::select(VOCAB), 1..5),
        1usize..30,
    );
    run(cases, strategy, |(docs, query, k)| {
        let table = table("ext", "d", docs);
        let index = InvertedIndex::build(&table, Bm25Params::default());
        let tokens: Vec<Vec<String>> = table.records.iter().map(EntityRecord::tokens).collect();
        let query: Vec<String> = query.iter().map(|t| (*t).to_owned()).collect();
        let scores = brute_force_bm25(&tokens, &query, Bm25Params::default());
        let mut expected: Vec<(&str, f64)> = table
            .records
            .iter()
            .zip(&scores)
            .filter(|(_, &s)| s > 0.0)
            .map(|(r, &s)| (r.entity_id.as_str(), s))
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        expected.truncate(k);

        let answer = index.answer_deterministic(&query, k);
        prop_assert_eq!(answer.len(), expected.len());
        for (got, (id, score)) in answer.entries().iter().zip(&expected) {
            // Near-equal scores may legitimately swap; compare ids only
            // when the gap is unambiguous.
            prop_assert!((got.score - score).abs() <= 1e-9, "{} {} vs {id} {score}", got.entity_id, got.score);
            if got.entity_id != *id {
                let theirs = scores[table.position(&got.entity_id).unwrap()];
                prop_assert!((theirs - score).abs() <= 1e-9, "rank disagreement at {id}");
            }
        }
        Ok(())
    })
}

/// Final S equals the initial row plus the reinforcement log summed per
/// cell, exactly.
pub fn reinforcement_replay(cases: u32) -> Result<u32, String> {
    let strategy = row_weights().prop_flat_map(|w| {
        let width = w.len();
        (Just(w), reinforcement_log(width, 0..1000))
    });
    run(cases, strategy, |(weights, log)| {
        let mut m = matrix_from(&weights);
        let mut expected = weights.clone();
        for &(action, reward, alpha) in &log {
            m.reinforce(&0, &action, reward, alpha).unwrap();
        }
        for &(action, reward, alpha) in &log {
            expected[action as usize] += alpha * reward;
        }
        let row = m.row(&0).unwrap();
        for (i, &s) in expected.iter().enumerate() {
            prop_assert_eq!(row.get(&(i as u32)), Some(s));
        }
        Ok(())
    })
}

/// Products (local) and Sellers (external) from the running example.
pub fn example_tables() -> (DataTable, DataTable) {
    let products = DataTable::from_records(
        "products",
        &["Name", "Category"],
        vec![
            EntityRecord::new("products", "s1", &[("Name", "Soda"), ("Category", "Drinks")]),
            EntityRecord::new("products", "s2", &[("Name", "Beef"), ("Category", "Meat")]),
        ],
    );
    let sellers = DataTable::from_records(
        "sellers",
        &["P_Name", "P_Category", "P_Seller", "P_Price"],
        vec![
            EntityRecord::new(
                "sellers",
                "r1",
                &[("P_Name", "Pop"), ("P_Category", "Drinks"), ("P_Seller", "Kroger"), ("P_Price", "1")],
            ),
            EntityRecord::new(
                "sellers",
                "r2",
                &[("P_Name", "Hamburger"), ("P_Category", "Sandwich"), ("P_Seller", "7/11"), ("P_Price", "4")],
            ),
        ],
    );
    (products, sellers)
}

pub fn example_truth() -> GroundTruth {
    let mut truth = GroundTruth::new();
    truth.insert("s1", "sellers", "r1");
    truth.insert("s2", "sellers", "r2");
    truth
}

/// Outcome of one seeded session on the running example.
#[derive(Debug, Clone, Copy)]
pub struct ExampleTrial {
    /// Interaction at which each intent first scored MRR 1.
    pub first_hit: [Option<usize>; 2],
    /// MRR of each intent in its last interaction.
    pub last: [f64; 2],
}

impl ExampleTrial {
    pub fn both_hit(&self) -> bool {
        self.first_hit.iter().all(Option::is_some)
    }
}

/// `interactions` user rounds of a variant, alternating the queries
/// "soda" and "beef", judged by a simulated user.
pub fn example_trial(variant: MethodVariant, seed: u64, interactions: usize) -> ExampleTrial {
    let (products, sellers) = example_tables();
    let base = LearnerConfig {
        rng_seed: seed,
        ..LearnerConfig::default()
    };
    let (learner, session_config) = variant.configure(&base, &SessionConfig::default());
    let mut session = Session::from_tables(products, vec![sellers], learner, session_config);
    let user = SimulatedUser::new(Arc::new(example_truth()));
    let mut trial = ExampleTrial {
        first_hit: [None; 2],
        last: [0.0; 2],
    };
    for round in 1..=interactions {
        let which = (round - 1) % 2;
        let query = ["soda", "beef"][which];
        let mut record = session.run_interaction(query).unwrap();
        let feedback = user.feedback(&record, session.externals());
        session.apply_feedback(&mut record, &feedback).unwrap();
        let value = record.entries.first().map_or(0.0, |e| e.mrr);
        trial.last[which] = value;
        if value == 1.0 && trial.first_hit[which].is_none() {
            trial.first_hit[which] = Some(round);
        }
        session.autonomous_replay(&record, &feedback).unwrap();
    }
    trial
}
