//! Simulated user, reciprocal-rank metric and the experiment runner that
//! produces learning curves for each method variant.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{DataTable, GroundTruth};
use crate::protocol::{ExternalSource, Feedback, InteractionRecord, LocalMatcher, Session, SessionConfig};
use crate::retrieval::RankedList;
use crate::strategy::{Intent, LearnerConfig, Policy, StrategyError};

/// Reciprocal of the 1-based position of the first relevant entity, or 0
/// when none is present.
pub fn mrr(ranked: &RankedList, relevant: &BTreeSet<String>) -> f64 {
    ranked
        .ids()
        .position(|id| relevant.contains(id))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Judges answers from ground truth in place of a human.
#[derive(Debug, Clone)]
pub struct SimulatedUser {
    truth: Arc<GroundTruth>,
}

impl SimulatedUser {
    pub fn new(truth: Arc<GroundTruth>) -> Self {
        Self { truth }
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// 1-based positions of returned entities that match the intent's
    /// local entity.
    pub fn judge(&self, intent: &Intent, source_id: &str, ranked: &RankedList) -> Vec<usize> {
        ranked
            .ids()
            .enumerate()
            .filter(|(_, id)| self.truth.is_match(&intent.entity_id, source_id, id))
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Judges every entry of a round.
    pub fn feedback(&self, record: &InteractionRecord, externals: &[Arc<ExternalSource>]) -> Feedback {
        let mut feedback = Feedback::new();
        for entry in &record.entries {
            feedback.judged(entry.source, &entry.intent);
            let source_id = externals[entry.source].source_id();
            for pos in self.judge(&entry.intent, source_id, &entry.ranked) {
                feedback.insert(entry.source, &entry.intent, &entry.ranked.entries()[pos - 1].entity_id);
            }
        }
        feedback
    }
}

/// The five compared methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodVariant {
    /// Send every keyword; external answers with BM25.
    Baseline,
    /// UCB-1 local strategy; external answers with BM25.
    Ucb1,
    ReNoExtLearning,
    ReExtLearning,
    /// Both sides learn, with autonomous replay and query expansion.
    ReAutoExpansion,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 5] = [
        MethodVariant::Baseline,
        MethodVariant::Ucb1,
        MethodVariant::ReNoExtLearning,
        MethodVariant::ReExtLearning,
        MethodVariant::ReAutoExpansion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodVariant::Baseline => "baseline",
            MethodVariant::Ucb1 => "ucb1",
            MethodVariant::ReNoExtLearning => "re-no-ext-learning",
            MethodVariant::ReExtLearning => "re-ext-learning",
            MethodVariant::ReAutoExpansion => "re-auto-expansion",
        }
    }

    pub fn learns(self) -> bool {
        self != MethodVariant::Baseline
    }

    /// Overrides the policy and optimization flags of the base settings.
    pub fn configure(self, base: &LearnerConfig, session: &SessionConfig) -> (LearnerConfig, SessionConfig) {
        let (policy, external_policy, auto, expansion) = match self {
            MethodVariant::Baseline => (Policy::DeterministicBm25, Policy::DeterministicBm25, false, false),
            MethodVariant::Ucb1 => (Policy::Ucb1, Policy::DeterministicBm25, false, false),
            MethodVariant::ReNoExtLearning => (Policy::RothErev, Policy::DeterministicBm25, false, false),
            MethodVariant::ReExtLearning => (Policy::RothErev, Policy::RothErev, false, false),
            MethodVariant::ReAutoExpansion => (Policy::RothErev, Policy::RothErev, true, true),
        };
        let learner = LearnerConfig {
            policy,
            external_policy,
            ..base.clone()
        };
        let session = SessionConfig {
            auto_enabled: auto,
            expansion_enabled: expansion,
            ..session.clone()
        };
        (learner, session)
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown variant `{0}`")]
pub struct ParseVariantError(pub String);

impl FromStr for MethodVariant {
    type Err = ParseVariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ParseVariantError(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub round: usize,
    /// Moving average of per-round MRR over the trailing window.
    pub mrr_avg: f64,
    pub variant: MethodVariant,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("dataset mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

/// Loaded tables, indexes and ground truth shared by all experiment cells.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub local: Arc<DataTable>,
    pub matcher: Arc<LocalMatcher>,
    pub externals: Vec<Arc<ExternalSource>>,
    pub truth: Arc<GroundTruth>,
}

impl Datasets {
    pub fn new(local: DataTable, externals: Vec<DataTable>, truth: GroundTruth, config: &LearnerConfig) -> Self {
        let matcher = Arc::new(LocalMatcher::build(&local));
        Self {
            local: Arc::new(local),
            matcher,
            externals: externals
                .into_iter()
                .map(|t| Arc::new(ExternalSource::new(t, config)))
                .collect(),
            truth: Arc::new(truth),
        }
    }

    /// Local entities with at least one ground-truth partner, in table order.
    pub fn targets(&self) -> Vec<usize> {
        self.local
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                self.externals
                    .iter()
                    .any(|e| self.truth.matches(&r.entity_id, e.source_id()).is_some())
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.externals.is_empty() {
            return Err(ExperimentError::Mismatch("no external sources".into()));
        }
        for (local, source, external) in self.truth.pairs() {
            let Some(ext) = self.externals.iter().find(|e| e.source_id() == source) else {
                return Err(ExperimentError::Mismatch(format!("ground truth names unknown source `{source}`")));
            };
            if !self.local.contains(local) || !ext.table.contains(external) {
                return Err(ExperimentError::Mismatch(format!(
                    "ground-truth pair ({local}, {external}) not in loaded tables"
                )));
            }
        }
        if self.targets().is_empty() {
            return Err(ExperimentError::Mismatch("no local entity has a ground-truth partner".into()));
        }
        Ok(())
    }
}

/// Up to this many candidate token subsets are drawn per target; the most
/// selective one becomes the user's query.
const QUERY_CANDIDATES: usize = 8;
const MAX_QUERY_TOKENS: usize = 3;

/// User-query stream. Targets are local entities with partners, drawn
/// with Zipf weights `1 / rank^skew` over a per-seed popularity order
/// (`skew = 0` is uniform). Each target has one fixed query per seed, a
/// subset of 1 to 3 of its own tokens that matches it locally.
#[derive(Debug, Clone)]
pub struct Workload {
    targets: Vec<usize>,
    popularity: WeightedIndex<f64>,
    seed: u64,
    rng: ChaCha8Rng,
    queries: HashMap<usize, String>,
}

impl Workload {
    pub fn new(datasets: &Datasets, seed: u64, skew: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut targets = datasets.targets();
        targets.shuffle(&mut rng);
        let weights = (1..=targets.len()).map(|rank| (rank as f64).powf(-skew));
        let popularity = WeightedIndex::new(weights).expect("at least one target");
        Self {
            targets,
            popularity,
            seed,
            rng,
            queries: HashMap::new(),
        }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Next (target position, user query).
    pub fn next(&mut self, datasets: &Datasets) -> (usize, String) {
        let target = self.targets[self.popularity.sample(&mut self.rng)];
        let seed = self.seed;
        let query = self
            .queries
            .entry(target)
            .or_insert_with(|| make_query(datasets, target, seed))
            .clone();
        (target, query)
    }
}

/// Deterministic in (seed, target) alone, independent of draw order.
fn make_query(datasets: &Datasets, target: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 + target as u64);
    let mut tokens = datasets.local.records[target].tokens();
    let mut seen = BTreeSet::new();
    tokens.retain(|t| seen.insert(t.clone()));
    let mut best: Option<(usize, String)> = None;
    for _ in 0..QUERY_CANDIDATES {
        let size = rng.gen_range(1..=MAX_QUERY_TOKENS).min(tokens.len());
        let mut picks = sample(&mut rng, tokens.len(), size).into_vec();
        picks.sort_unstable();
        let query = picks.iter().map(|&i| tokens[i].as_str()).collect::<Vec<_>>().join(" ");
        let hits = datasets.matcher.matches(&query).len();
        if best.as_ref().is_none_or(|(h, _)| hits < *h) {
            best = Some((hits, query));
        }
    }
    best.expect("at least one candidate").1
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub learner: LearnerConfig,
    pub session: SessionConfig,
    pub window: usize,
    /// Zipf exponent of target popularity in the workload.
    pub workload_skew: f64,
    pub snapshot_rounds: Vec<usize>,
    pub keep_log: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            learner: LearnerConfig::default(),
            session: SessionConfig::default(),
            window: 100,
            workload_skew: 0.0,
            snapshot_rounds: Vec::new(),
            keep_log: false,
        }
    }
}

/// Strategy tables captured after a round, per external source.
#[derive(Debug, Clone)]
pub struct StrategySnapshot {
    pub round: usize,
    pub source_id: String,
    pub local: String,
    pub external: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub variant: MethodVariant,
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    /// Unsmoothed MRR of each user round.
    pub round_mrr: Vec<f64>,
    pub replays: Vec<usize>,
    pub log: Vec<String>,
    pub snapshots: Vec<StrategySnapshot>,
}

impl ExperimentResult {
    pub fn final_mrr(&self) -> Option<f64> {
        self.curve.last().map(|p| p.mrr_avg)
    }

    pub fn mrr_at(&self, round: usize) -> Option<f64> {
        self.curve.get(round.checked_sub(1)?).map(|p| p.mrr_avg)
    }
}

/// MRR of a judged round over the entries whose local entity has a
/// ground-truth partner in that entry's source.
pub fn round_mrr(record: &InteractionRecord, truth: &GroundTruth, externals: &[Arc<ExternalSource>]) -> f64 {
    let judgeable: Vec<f64> = record
        .entries
        .iter()
        .filter(|e| {
            truth
                .matches(&e.intent.entity_id, externals[e.source].source_id())
                .is_some()
        })
        .map(|e| e.mrr)
        .collect();
    if judgeable.is_empty() {
        0.0
    } else {
        judgeable.iter().sum::<f64>() / judgeable.len() as f64
    }
}

/// Trailing moving average; early points average what exists so far.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let slice = &values[(i + 1).saturating_sub(window)..=i];
            (slice.iter().sum::<f64>() / slice.len() as f64).clamp(0.0, 1.0)
        })
        .collect()
}

/// Runs `rounds` user interactions of one variant and seed.
pub fn run_experiment(
    variant: MethodVariant,
    datasets: &Datasets,
    rounds: usize,
    seed: u64,
    options: &ExperimentOptions,
) -> Result<ExperimentResult, ExperimentError> {
    datasets.validate()?;
    let base = LearnerConfig {
        rng_seed: seed,
        ..options.learner.clone()
    };
    let (learner, session_config) = variant.configure(&base, &options.session);
    let mut session = Session::new(
        datasets.local.clone(),
        datasets.matcher.clone(),
        datasets.externals.clone(),
        learner,
        session_config,
    );
    let user = SimulatedUser::new(datasets.truth.clone());
    let mut workload = Workload::new(datasets, seed, options.workload_skew);

    let mut round_values = Vec::with_capacity(rounds);
    let mut replays = Vec::with_capacity(rounds);
    let mut log = Vec::new();
    let mut snapshots = Vec::new();
    for round in 1..=rounds {
        let (_, query) = workload.next(datasets);
        let mut record = session.run_interaction(&query)?;
        let feedback = user.feedback(&record, &datasets.externals);
        session.apply_feedback(&mut record, &feedback)?;
        round_values.push(round_mrr(&record, &datasets.truth, &datasets.externals));
        let replayed = session.autonomous_replay(&record, &feedback)?;
        replays.push(replayed);
        if options.keep_log {
            log.push(record.log_line(variant.name(), seed, replayed, &datasets.externals));
        }
        if options.snapshot_rounds.contains(&round) {
            for (learners, external) in session.learners().iter().zip(&datasets.externals) {
                snapshots.push(StrategySnapshot {
                    round,
                    source_id: external.source_id().to_owned(),
                    local: learners.local.snapshot_string(),
                    external: learners.external.snapshot_string(),
                });
            }
        }
    }
    let curve = moving_average(&round_values, options.window)
        .into_iter()
        .enumerate()
        .map(|(i, mrr_avg)| CurvePoint {
            round: i + 1,
            mrr_avg,
            variant,
            seed,
        })
        .collect();
    Ok(ExperimentResult {
        variant,
        seed,
        curve,
        round_mrr: round_values,
        replays,
        log,
        snapshots,
    })
}
