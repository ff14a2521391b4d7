//! Stochastic querying and answering strategies.
//!
//! Both sides store accumulated rewards in a [`StrategyMatrix`]. The local
//! side maps an [`Intent`] to n-gram features that are flattened into a
//! keyword query; an external side maps a canonical [`QueryKey`] to its own
//! entity ids. Probabilities are always `S / row total`, and rewards only
//! ever add mass (Roth–Erev). [`UcbState`] is the static-environment
//! alternative for the local side.

mod matrix;
mod ucb;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{extract_features, query_features, tokenize, EntityRecord, Feature};
use crate::retrieval::{Bm25Params, InvertedIndex, RankedList};

pub use matrix::{read_snapshot, Row, SnapshotError, SnapshotMatrix, StrategyMatrix};
pub use ucb::{ArmStats, UcbState};

/// Weight given to vocabulary added after a row was initialized.
pub const BASE_WEIGHT: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("unknown context `{0}`")]
    UnknownContext(String),
    #[error("unknown action `{action}` in context `{context}`")]
    UnknownAction { context: String, action: String },
    #[error("row `{0}` already exists")]
    RowExists(String),
    #[error("row `{0}` has no positive mass")]
    EmptyRow(String),
    #[error("invalid weight {weight} in row `{context}`")]
    InvalidWeight { context: String, weight: f64 },
    #[error("reward must be finite and non-negative, got {0}")]
    InvalidReward(f64),
    #[error("entity `{0}` has no features")]
    NoFeatures(String),
}

/// Canonical keyword-query key: sorted, de-duplicated unigram tokens
/// joined by single spaces. Word order and repeats do not matter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryKey(String);

impl QueryKey {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut terms: Vec<String> = terms.into_iter().map(Into::into).collect();
        terms.sort();
        terms.dedup();
        QueryKey(terms.join(" "))
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_terms(tokenize(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn terms(&self) -> Vec<&str> {
        self.0.split(' ').filter(|t| !t.is_empty()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for QueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A (user query, matched local entity) pair. Rendered `query@entity`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Intent {
    pub query_key: QueryKey,
    pub entity_id: String,
}

impl Intent {
    pub fn new(query_text: &str, entity_id: &str) -> Self {
        Self {
            query_key: QueryKey::from_text(query_text),
            entity_id: entity_id.to_owned(),
        }
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.query_key, self.entity_id)
    }
}

pub type LocalStrategy = StrategyMatrix<Intent, Feature>;
pub type ExternalStrategy = StrategyMatrix<QueryKey, String>;
pub type LocalUcb = UcbState<Intent, Feature>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    RothErev,
    Ucb1,
    /// Local side: send every keyword of the intent. External side: answer
    /// with the BM25 top-k.
    DeterministicBm25,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::RothErev => "roth-erev",
            Policy::Ucb1 => "ucb1",
            Policy::DeterministicBm25 => "deterministic-bm25",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown policy `{0}` (expected roth-erev, ucb1 or deterministic-bm25)")]
pub struct ParsePolicyError(pub String);

impl FromStr for Policy {
    type Err = ParsePolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "roth-erev" => Ok(Policy::RothErev),
            "ucb1" => Ok(Policy::Ucb1),
            "deterministic-bm25" => Ok(Policy::DeterministicBm25),
            other => Err(ParsePolicyError(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Roth–Erev learning rate.
    pub alpha: f64,
    /// Answers returned per external query.
    pub k_results: usize,
    /// Features drawn per external query.
    pub m_terms: usize,
    pub n_max: usize,
    /// Local querying policy.
    pub policy: Policy,
    /// External answering policy; `Ucb1` is not supported here.
    pub external_policy: Policy,
    pub ucb_c: f64,
    /// Initial mass of an intent's own features.
    pub init_boost: f64,
    pub rng_seed: u64,
    pub bm25: Bm25Params,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            k_results: 20,
            m_terms: 3,
            n_max: 2,
            policy: Policy::RothErev,
            external_policy: Policy::DeterministicBm25,
            ucb_c: std::f64::consts::SQRT_2,
            init_boost: 2.0,
            rng_seed: 0,
            bm25: Bm25Params::default(),
        }
    }
}

/// Candidate features of an intent: the entity's prefixed n-grams, then
/// query n-grams whose tokens the entity features do not already cover.
pub fn intent_features(entity: &EntityRecord, query_text: &str, n_max: usize) -> Vec<Feature> {
    let mut features = extract_features(entity, n_max);
    let covered: HashSet<Vec<String>> = features.iter().map(|f| f.tokens.clone()).collect();
    features.extend(
        query_features(query_text, n_max)
            .into_iter()
            .filter(|f| !covered.contains(&f.tokens)),
    );
    features
}

/// Seeds the local row of `intent`: every intent feature starts at
/// `init_boost`.
pub fn init_local_row(
    matrix: &mut LocalStrategy,
    intent: &Intent,
    entity: &EntityRecord,
    query_text: &str,
    config: &LearnerConfig,
) -> Result<(), StrategyError> {
    if matrix.contains_row(intent) {
        return Err(StrategyError::RowExists(intent.to_string()));
    }
    let features = intent_features(entity, query_text, config.n_max);
    if features.is_empty() {
        return Err(StrategyError::NoFeatures(entity.entity_id.clone()));
    }
    matrix.insert_row(
        intent.clone(),
        features.into_iter().map(|f| (f, config.init_boost)),
    )
}

/// A keyword query as sent to an external source, together with the
/// local actions it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentQuery {
    pub actions: Vec<Feature>,
    pub key: QueryKey,
}

impl SentQuery {
    pub fn from_actions(actions: Vec<Feature>) -> Self {
        let key = QueryKey::from_terms(actions.iter().flat_map(|f| f.tokens.iter().cloned()));
        Self { actions, key }
    }

    pub fn terms(&self) -> Vec<&str> {
        self.key.terms()
    }
}

/// Baseline query: every keyword of the entity and of the user query.
pub fn all_keywords(entity: &EntityRecord, query_text: &str) -> SentQuery {
    let terms = entity.tokens().into_iter().chain(tokenize(query_text));
    SentQuery {
        actions: Vec::new(),
        key: QueryKey::from_terms(terms),
    }
}

/// Draws `m_terms` distinct features of the intent's row (fewer when the
/// row's support is smaller) and flattens them into keywords.
pub fn sample_external_query<R: Rng + ?Sized>(
    matrix: &LocalStrategy,
    intent: &Intent,
    m_terms: usize,
    rng: &mut R,
) -> Result<SentQuery, StrategyError> {
    let row = matrix
        .row(intent)
        .ok_or_else(|| StrategyError::UnknownContext(intent.to_string()))?;
    Ok(SentQuery::from_actions(row.sample_distinct(m_terms, rng)))
}

/// UCB-1 counterpart of [`sample_external_query`]: `m_terms` successive
/// selections over the row's actions, each excluding those already chosen.
pub fn ucb_external_query(
    matrix: &LocalStrategy,
    state: &LocalUcb,
    intent: &Intent,
    m_terms: usize,
    exploration: f64,
) -> Result<SentQuery, StrategyError> {
    let row = matrix
        .row(intent)
        .ok_or_else(|| StrategyError::UnknownContext(intent.to_string()))?;
    let mut candidates: Vec<&Feature> = row.actions().collect();
    let mut chosen = Vec::with_capacity(m_terms);
    while chosen.len() < m_terms {
        let Some(pick) = state.select(intent, candidates.iter().copied(), exploration) else {
            break;
        };
        candidates.retain(|f| **f != pick);
        chosen.push(pick);
    }
    Ok(SentQuery::from_actions(chosen))
}

/// Creates the answering row for an unseen query. The row is seeded with
/// BM25 scores of the top `k` entities; when nothing scores, with uniform
/// mass over a random sample of `min(k, doc_count)` entities. Returns
/// whether a row was created.
pub fn ensure_external_row<R: Rng + ?Sized>(
    matrix: &mut ExternalStrategy,
    query_key: &QueryKey,
    index: &InvertedIndex,
    k: usize,
    rng: &mut R,
) -> Result<bool, StrategyError> {
    if matrix.contains_row(query_key) || index.doc_count() == 0 || k == 0 {
        return Ok(false);
    }
    let ranked = index.answer_deterministic(&query_key.terms(), k);
    if ranked.is_empty() {
        let ids = index.entity_ids();
        let picks = rand::seq::index::sample(rng, ids.len(), k.min(ids.len()));
        matrix.insert_row(
            query_key.clone(),
            picks.into_iter().map(|i| (ids[i].clone(), BASE_WEIGHT)),
        )?;
    } else {
        matrix.insert_row(
            query_key.clone(),
            ranked
                .entries()
                .iter()
                .map(|e| (e.entity_id.clone(), e.score)),
        )?;
    }
    Ok(true)
}

/// Draws up to `k` distinct entities; rank order is draw order. A missing
/// row answers with an empty list.
pub fn sample_external_answers<R: Rng + ?Sized>(
    matrix: &ExternalStrategy,
    query_key: &QueryKey,
    k: usize,
    rng: &mut R,
) -> RankedList {
    match matrix.row(query_key) {
        Some(row) => RankedList::from_draw_order(row.sample_distinct(k, rng)),
        None => RankedList::new(),
    }
}

/// Adds every feature of a confirmed external match that the intent's row
/// lacks, at [`BASE_WEIGHT`]. Existing cells are untouched. Returns the
/// number of actions added.
pub fn expand_row(
    matrix: &mut LocalStrategy,
    intent: &Intent,
    matched: &EntityRecord,
    n_max: usize,
) -> Result<usize, StrategyError> {
    let mut added = 0;
    for feature in extract_features(matched, n_max) {
        if matrix.add_action(intent, feature, BASE_WEIGHT)? {
            added += 1;
        }
    }
    Ok(added)
}
