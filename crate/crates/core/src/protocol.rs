//! One interaction round end to end: local matching, external querying,
//! feedback with propagation to external sources, query expansion, and
//! autonomous replay of a judged round.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{tokenize, DataTable};
use crate::evaluation::mrr;
use crate::retrieval::{InvertedIndex, RankedList};
use crate::strategy::{
    all_keywords, ensure_external_row, expand_row, init_local_row, sample_external_answers,
    sample_external_query, ucb_external_query, ExternalStrategy, Intent, LearnerConfig,
    LocalStrategy, LocalUcb, Policy, SentQuery, StrategyError,
};

/// An external data source: its table and keyword index.
#[derive(Debug)]
pub struct ExternalSource {
    pub table: DataTable,
    pub index: InvertedIndex,
}

impl ExternalSource {
    pub fn new(table: DataTable, config: &LearnerConfig) -> Self {
        let index = InvertedIndex::build(&table, config.bm25);
        Self { table, index }
    }

    pub fn source_id(&self) -> &str {
        &self.table.source_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionConfig {
    /// User rounds completed before autonomous replay starts.
    pub min_interactions_before_auto: usize,
    pub auto_max_rounds: usize,
    pub expansion_enabled: bool,
    pub auto_enabled: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            min_interactions_before_auto: 1,
            auto_max_rounds: 10,
            expansion_enabled: false,
            auto_enabled: false,
        }
    }
}

/// Conjunctive keyword matching over the local table: token -> sorted
/// record positions.
#[derive(Debug, Clone)]
pub struct LocalMatcher {
    postings: HashMap<String, Vec<usize>>,
}

impl LocalMatcher {
    pub fn build(table: &DataTable) -> Self {
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, record) in table.records.iter().enumerate() {
            let mut tokens = record.tokens();
            tokens.sort();
            tokens.dedup();
            for token in tokens {
                postings.entry(token).or_default().push(i);
            }
        }
        Self { postings }
    }

    /// Positions of records containing every query token, in table order.
    pub fn matches(&self, query: &str) -> Vec<usize> {
        let mut tokens = tokenize(query);
        tokens.sort();
        tokens.dedup();
        let mut lists = Vec::with_capacity(tokens.len());
        for token in &tokens {
            match self.postings.get(token) {
                Some(list) => lists.push(list),
                None => return Vec::new(),
            }
        }
        lists.sort_by_key(|l| l.len());
        let Some((first, rest)) = lists.split_first() else {
            return Vec::new();
        };
        first
            .iter()
            .copied()
            .filter(|pos| rest.iter().all(|l| l.binary_search(pos).is_ok()))
            .collect()
    }
}

/// One intent per local record that contains every query token. An empty
/// query matches nothing.
pub fn form_intents(user_query: &str, local: &DataTable) -> Vec<Intent> {
    let wanted: BTreeSet<String> = tokenize(user_query).into_iter().collect();
    if wanted.is_empty() {
        return Vec::new();
    }
    local
        .records
        .iter()
        .filter(|record| {
            let have: BTreeSet<String> = record.tokens().into_iter().collect();
            wanted.is_subset(&have)
        })
        .map(|record| Intent::new(user_query, &record.entity_id))
        .collect()
}

/// Result for one (intent, external source) pair within a round.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentEntry {
    pub intent: Intent,
    pub source: usize,
    pub sent: SentQuery,
    pub ranked: RankedList,
    /// 1-based positions judged relevant; empty until feedback is applied.
    pub relevant_positions: Vec<usize>,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub round: usize,
    pub user_query: String,
    pub intents: Vec<Intent>,
    pub entries: Vec<IntentEntry>,
    pub judged: bool,
}

impl InteractionRecord {
    /// Mean per-entry MRR; 0 for a round without entries.
    pub fn mean_mrr(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.entries.iter().map(|e| e.mrr).sum::<f64>() / self.entries.len() as f64
        }
    }

    /// Presentation view: each local entity followed by the external ids
    /// returned for it, per source, in rank order.
    pub fn combined(&self) -> Vec<CombinedRow<'_>> {
        let mut out: Vec<CombinedRow<'_>> = Vec::new();
        for entry in &self.entries {
            let ids = entry.ranked.ids().collect();
            match out.last_mut() {
                Some((local, per_source)) if *local == entry.intent.entity_id => {
                    per_source.push((entry.source, ids))
                }
                _ => out.push((&entry.intent.entity_id, vec![(entry.source, ids)])),
            }
        }
        out
    }
}

/// A local entity id with the ids each source returned for it.
pub type CombinedRow<'a> = (&'a str, Vec<(usize, Vec<&'a str>)>);

/// Relevant external entities per (source, intent), as confirmed by the
/// user. Stored feedback drives autonomous replay.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Feedback {
    relevant: BTreeMap<(usize, Intent), BTreeSet<String>>,
}

impl Feedback {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source: usize, intent: &Intent, entity_id: &str) {
        self.relevant
            .entry((source, intent.clone()))
            .or_default()
            .insert(entity_id.to_owned());
    }

    /// Ensures an (empty) entry exists, recording that the pair was judged.
    pub fn judged(&mut self, source: usize, intent: &Intent) {
        self.relevant.entry((source, intent.clone())).or_default();
    }

    pub fn relevant(&self, source: usize, intent: &Intent) -> Option<&BTreeSet<String>> {
        self.relevant.get(&(source, intent.clone()))
    }

    pub fn has_known_relevant(&self) -> bool {
        self.relevant.values().any(|set| !set.is_empty())
    }
}

/// Per-source learner state. The local strategy is kept separately for
/// every external source.
#[derive(Debug, Clone, Default)]
pub struct SourceLearners {
    pub local: LocalStrategy,
    pub ucb: LocalUcb,
    pub external: ExternalStrategy,
}

/// All mutable state of one local data source talking to its external
/// sources.
pub struct Session {
    local: Arc<DataTable>,
    matcher: Arc<LocalMatcher>,
    externals: Vec<Arc<ExternalSource>>,
    config: LearnerConfig,
    session: SessionConfig,
    learners: Vec<SourceLearners>,
    rng: ChaCha8Rng,
    user_rounds: usize,
    replay_rounds: usize,
}

impl Session {
    pub fn new(
        local: Arc<DataTable>,
        matcher: Arc<LocalMatcher>,
        externals: Vec<Arc<ExternalSource>>,
        config: LearnerConfig,
        session: SessionConfig,
    ) -> Self {
        let learners = vec![SourceLearners::default(); externals.len()];
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Self {
            local,
            matcher,
            externals,
            config,
            session,
            learners,
            rng,
            user_rounds: 0,
            replay_rounds: 0,
        }
    }

    /// Convenience constructor that builds the matcher and indexes.
    pub fn from_tables(
        local: DataTable,
        externals: Vec<DataTable>,
        config: LearnerConfig,
        session: SessionConfig,
    ) -> Self {
        let matcher = Arc::new(LocalMatcher::build(&local));
        let externals = externals
            .into_iter()
            .map(|t| Arc::new(ExternalSource::new(t, &config)))
            .collect();
        Self::new(Arc::new(local), matcher, externals, config, session)
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn session_config(&self) -> &SessionConfig {
        &self.session
    }

    pub fn local_table(&self) -> &DataTable {
        &self.local
    }

    pub fn externals(&self) -> &[Arc<ExternalSource>] {
        &self.externals
    }

    pub fn learners(&self) -> &[SourceLearners] {
        &self.learners
    }

    pub fn user_rounds(&self) -> usize {
        self.user_rounds
    }

    pub fn replay_rounds(&self) -> usize {
        self.replay_rounds
    }

    pub fn intents(&self, user_query: &str) -> Vec<Intent> {
        self.matcher
            .matches(user_query)
            .into_iter()
            .map(|pos| Intent::new(user_query, &self.local.records[pos].entity_id))
            .collect()
    }

    /// Runs one user round: intents, external queries and answers. No
    /// learning happens until [`Session::apply_feedback`].
    pub fn run_interaction(&mut self, user_query: &str) -> Result<InteractionRecord, StrategyError> {
        self.user_rounds += 1;
        self.interact(user_query, self.user_rounds)
    }

    fn interact(&mut self, user_query: &str, round: usize) -> Result<InteractionRecord, StrategyError> {
        let intents = self.intents(user_query);
        let mut entries = Vec::with_capacity(intents.len() * self.externals.len());
        for intent in &intents {
            for source in 0..self.externals.len() {
                let sent = self.build_query(source, intent, user_query)?;
                let ranked = self.answer(source, &sent)?;
                entries.push(IntentEntry {
                    intent: intent.clone(),
                    source,
                    sent,
                    ranked,
                    relevant_positions: Vec::new(),
                    mrr: 0.0,
                });
            }
        }
        Ok(InteractionRecord {
            round,
            user_query: user_query.to_owned(),
            intents,
            entries,
            judged: false,
        })
    }

    fn build_query(&mut self, source: usize, intent: &Intent, user_query: &str) -> Result<SentQuery, StrategyError> {
        let entity = self
            .local
            .get(&intent.entity_id)
            .expect("intents come from the local table");
        let learners = &mut self.learners[source];
        match self.config.policy {
            Policy::DeterministicBm25 => Ok(all_keywords(entity, user_query)),
            Policy::RothErev => {
                if !learners.local.contains_row(intent) {
                    init_local_row(&mut learners.local, intent, entity, user_query, &self.config)?;
                }
                sample_external_query(&learners.local, intent, self.config.m_terms, &mut self.rng)
            }
            Policy::Ucb1 => {
                if !learners.local.contains_row(intent) {
                    init_local_row(&mut learners.local, intent, entity, user_query, &self.config)?;
                }
                ucb_external_query(
                    &learners.local,
                    &learners.ucb,
                    intent,
                    self.config.m_terms,
                    self.config.ucb_c,
                )
            }
        }
    }

    fn answer(&mut self, source: usize, sent: &SentQuery) -> Result<RankedList, StrategyError> {
        let external = &self.externals[source];
        let k = self.config.k_results;
        if sent.key.is_empty() {
            return Ok(RankedList::new());
        }
        match self.config.external_policy {
            Policy::RothErev => {
                let learners = &mut self.learners[source];
                ensure_external_row(&mut learners.external, &sent.key, &external.index, k, &mut self.rng)?;
                Ok(sample_external_answers(&learners.external, &sent.key, k, &mut self.rng))
            }
            _ => Ok(external.index.answer_deterministic(&sent.terms(), k)),
        }
    }

    /// Scores every entry against `feedback` and learns from it: the local
    /// row is reinforced at the sent query's features with `r = mrr`; a
    /// learning external source is reinforced at every relevant returned
    /// entity; confirmed matches optionally expand the local row.
    pub fn apply_feedback(&mut self, record: &mut InteractionRecord, feedback: &Feedback) -> Result<(), StrategyError> {
        let empty = BTreeSet::new();
        for entry in &mut record.entries {
            let relevant = feedback.relevant(entry.source, &entry.intent).unwrap_or(&empty);
            entry.relevant_positions = entry
                .ranked
                .ids()
                .enumerate()
                .filter(|(_, id)| relevant.contains(*id))
                .map(|(i, _)| i + 1)
                .collect();
            entry.mrr = mrr(&entry.ranked, relevant);
            let reward = entry.mrr;
            let alpha = self.config.alpha;
            let learners = &mut self.learners[entry.source];

            match self.config.policy {
                Policy::RothErev if reward > 0.0 => {
                    for action in &entry.sent.actions {
                        learners.local.reinforce(&entry.intent, action, reward, alpha)?;
                    }
                }
                Policy::Ucb1 => {
                    for action in &entry.sent.actions {
                        learners.ucb.record(&entry.intent, action, reward);
                    }
                }
                _ => {}
            }
            if self.config.external_policy == Policy::RothErev && reward > 0.0 {
                for &pos in &entry.relevant_positions {
                    let id = &entry.ranked.entries()[pos - 1].entity_id;
                    learners.external.reinforce(&entry.sent.key, id, reward, alpha)?;
                }
            }
            if self.session.expansion_enabled && learners.local.contains_row(&entry.intent) {
                let external = &self.externals[entry.source];
                for &pos in &entry.relevant_positions {
                    let id = &entry.ranked.entries()[pos - 1].entity_id;
                    let matched = external.table.get(id).expect("answers come from the index");
                    expand_row(&mut learners.local, &entry.intent, matched, self.config.n_max)?;
                }
            }
        }
        record.judged = true;
        Ok(())
    }

    /// Replays a judged round against the stored feedback, learning from
    /// each replay, until the mean MRR stops improving on the best seen so
    /// far or `auto_max_rounds` is reached. Returns the replays executed.
    pub fn autonomous_replay(&mut self, record: &InteractionRecord, feedback: &Feedback) -> Result<usize, StrategyError> {
        if !self.session.auto_enabled
            || record.round < self.session.min_interactions_before_auto
            || !feedback.has_known_relevant()
        {
            return Ok(0);
        }
        let mut best = record.mean_mrr();
        let mut executed = 0;
        for _ in 0..self.session.auto_max_rounds {
            let mut replay = self.interact(&record.user_query, record.round)?;
            self.apply_feedback(&mut replay, feedback)?;
            executed += 1;
            self.replay_rounds += 1;
            let score = replay.mean_mrr();
            if score <= best {
                break;
            }
            best = score;
        }
        Ok(executed)
    }
}

#[derive(Debug, Serialize)]
struct LogEntry<'a> {
    intent: String,
    source: &'a str,
    sent: &'a str,
    returned: Vec<&'a str>,
    relevant: Vec<&'a str>,
    mrr: f64,
}

#[derive(Debug, Serialize)]
struct LogLine<'a> {
    variant: &'a str,
    seed: u64,
    round: usize,
    query: &'a str,
    replays: usize,
    intents: Vec<LogEntry<'a>>,
}

impl InteractionRecord {
    /// One JSON line for the interaction log.
    pub fn log_line(&self, variant: &str, seed: u64, replays: usize, externals: &[Arc<ExternalSource>]) -> String {
        let intents = self
            .entries
            .iter()
            .map(|e| LogEntry {
                intent: e.intent.to_string(),
                source: externals[e.source].source_id(),
                sent: e.sent.key.as_str(),
                returned: e.ranked.ids().collect(),
                relevant: e
                    .relevant_positions
                    .iter()
                    .map(|&p| e.ranked.entries()[p - 1].entity_id.as_str())
                    .collect(),
                mrr: e.mrr,
            })
            .collect();
        let line = LogLine {
            variant,
            seed,
            round: self.round,
            query: &self.user_query,
            replays,
            intents,
        };
        serde_json::to_string(&line).expect("log lines serialize")
    }
}
