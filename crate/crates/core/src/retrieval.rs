//! In-memory inverted index with Okapi BM25 scoring. This is also the
//! fixed answering strategy of an external source that does not learn.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::corpus::DataTable;

/// Okapi BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub entity_id: String,
    pub score: f64,
}

/// Ranked answer list, best first. Entity ids are distinct and scores never
/// increase down the list. Sampled answers carry `1 / draw position` as
/// their score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedList {
    entries: Vec<Ranked>,
}

impl RankedList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a list from entries already in rank order.
    ///
    /// Panics if ids repeat or scores increase.
    pub fn from_ranked(entries: Vec<Ranked>) -> Self {
        for pair in entries.windows(2) {
            assert!(pair[0].score >= pair[1].score, "scores must not increase");
        }
        let mut seen = std::collections::HashSet::new();
        for entry in &entries {
            assert!(seen.insert(entry.entity_id.as_str()), "duplicate entity in ranked list");
        }
        Self { entries }
    }

    /// A list whose order is the draw order of `ids`.
    pub fn from_draw_order(ids: Vec<String>) -> Self {
        let entries = ids
            .into_iter()
            .enumerate()
            .map(|(i, entity_id)| Ranked {
                entity_id,
                score: 1.0 / (i + 1) as f64,
            })
            .collect();
        Self::from_ranked(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Ranked] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.entity_id.as_str())
    }

    /// 1-based position of `entity_id`.
    pub fn position(&self, entity_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.entity_id == entity_id)
            .map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    doc: u32,
    tf: u32,
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    params: Bm25Params,
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_positions: HashMap<String, u32>,
    doc_length: Vec<u32>,
    avg_doc_length: f64,
}

impl InvertedIndex {
    /// Indexes the unigram tokens of all attribute values of every record,
    /// treating a record as one concatenated document.
    pub fn build(table: &DataTable, params: Bm25Params) -> Self {
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_ids = Vec::with_capacity(table.len());
        let mut doc_positions = HashMap::with_capacity(table.len());
        let mut doc_length = Vec::with_capacity(table.len());
        for (doc, record) in table.records.iter().enumerate() {
            let doc = doc as u32;
            let tokens = record.tokens();
            doc_length.push(tokens.len() as u32);
            let mut counts: HashMap<String, u32> = HashMap::new();
            for token in tokens {
                *counts.entry(token).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
            doc_positions.insert(record.entity_id.clone(), doc);
            doc_ids.push(record.entity_id.clone());
        }
        let total: u64 = doc_length.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = if doc_length.is_empty() {
            0.0
        } else {
            total as f64 / doc_length.len() as f64
        };
        Self {
            params,
            postings,
            doc_ids,
            doc_positions,
            doc_length,
            avg_doc_length,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn doc_length(&self, entity_id: &str) -> Option<usize> {
        let doc = *self.doc_positions.get(entity_id)?;
        Some(self.doc_length[doc as usize] as usize)
    }

    pub fn term_frequency(&self, term: &str, entity_id: &str) -> u32 {
        let Some(&doc) = self.doc_positions.get(entity_id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|list| {
                list.binary_search_by_key(&doc, |p| p.doc)
                    .ok()
                    .map(|i| list[i].tf)
            })
            .unwrap_or(0)
    }

    /// Entity ids in indexing (table) order.
    pub fn entity_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn contains(&self, entity_id: &str) -> bool {
        self.doc_positions.contains_key(entity_id)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let dl = f64::from(self.doc_length[doc as usize]);
        let norm = 1.0 - b + b * dl / self.avg_doc_length;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Okapi BM25 of one entity for a bag of query terms. Unknown terms
    /// and unknown entities contribute nothing.
    pub fn bm25_score<S: AsRef<str>>(&self, query_terms: &[S], entity_id: &str) -> f64 {
        let Some(&doc) = self.doc_positions.get(entity_id) else {
            return 0.0;
        };
        let mut score = 0.0;
        for term in query_terms {
            let Some(list) = self.postings.get(term.as_ref()) else {
                continue;
            };
            if let Ok(i) = list.binary_search_by_key(&doc, |p| p.doc) {
                score += self.term_weight(self.idf(list.len()), list[i].tf, doc);
            }
        }
        score
    }

    /// Scores of every entity sharing at least one term with the query,
    /// keyed by document position.
    fn accumulate<S: AsRef<str>>(&self, query_terms: &[S]) -> HashMap<u32, f64> {
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in query_terms {
            let Some(list) = self.postings.get(term.as_ref()) else {
                continue;
            };
            let idf = self.idf(list.len());
            for posting in list {
                *scores.entry(posting.doc).or_insert(0.0) +=
                    self.term_weight(idf, posting.tf, posting.doc);
            }
        }
        scores
    }

    /// Top-`k` entities by BM25, ties by ascending entity id. Entities with
    /// a zero score are left out, so the list may be shorter than `k`.
    pub fn answer_deterministic<S: AsRef<str>>(&self, query_terms: &[S], k: usize) -> RankedList {
        let mut scored: Vec<(u32, f64)> = self
            .accumulate(query_terms)
            .into_iter()
            .filter(|&(_, score)| score > 0.0)
            .collect();
        let by_rank = |a: &(u32, f64), b: &(u32, f64)| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.doc_ids[a.0 as usize].cmp(&self.doc_ids[b.0 as usize]))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        RankedList::from_ranked(
            scored
                .into_iter()
                .map(|(doc, score)| Ranked {
                    entity_id: self.doc_ids[doc as usize].clone(),
                    score,
                })
                .collect(),
        )
    }
}
