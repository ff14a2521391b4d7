//! Single-table data sources, ground-truth match files, tokenization and
//! schema-prefixed n-gram features.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: id column `{column}` not found in header")]
    MissingIdColumn { path: PathBuf, column: String },
    #[error("{path}: value column `{column}` not found in header")]
    MissingValueColumn { path: PathBuf, column: String },
    #[error("{path}: duplicate entity id `{id}`")]
    DuplicateId { path: PathBuf, id: String },
    #[error("{path}: ground-truth file needs at least two columns")]
    GroundTruthShape { path: PathBuf },
}

/// Lowercases and splits on Unicode whitespace and ASCII punctuation.
/// Empty pieces are dropped, order is preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .filter(|piece| !piece.is_empty())
        .map(|piece| piece.to_lowercase())
        .collect()
}

/// A contiguous n-gram of normalized terms, optionally tagged with the
/// attribute it came from.
///
/// Rendered as `attr:tok tok` (or `tok tok` without a prefix). Tokens never
/// contain ASCII punctuation, so the last `:` always separates the prefix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Feature {
    pub prefix: Option<String>,
    pub tokens: Vec<String>,
}

impl Feature {
    pub fn new(prefix: Option<&str>, tokens: Vec<String>) -> Self {
        Self {
            prefix: prefix.map(str::to_owned),
            tokens,
        }
    }

    pub fn unprefixed(tokens: Vec<String>) -> Self {
        Self::new(None, tokens)
    }

    pub fn order(&self) -> usize {
        self.tokens.len()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(prefix) = &self.prefix {
            write!(f, "{prefix}:")?;
        }
        write!(f, "{}", self.tokens.join(" "))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid feature key `{0}`")]
pub struct ParseFeatureError(pub String);

impl FromStr for Feature {
    type Err = ParseFeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (prefix, body) = match s.rfind(':') {
            Some(pos) => (Some(&s[..pos]), &s[pos + 1..]),
            None => (None, s),
        };
        let tokens: Vec<String> = body.split(' ').map(str::to_owned).collect();
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(ParseFeatureError(s.to_owned()));
        }
        Ok(Feature::new(prefix, tokens))
    }
}

fn ngrams_into(out: &mut Vec<Feature>, prefix: Option<&str>, tokens: &[String], n_max: usize) {
    for n in 1..=n_max.min(tokens.len()) {
        for window in tokens.windows(n) {
            out.push(Feature::new(prefix, window.to_vec()));
        }
    }
}

/// One tuple of a single-table data source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRecord {
    pub source_id: String,
    pub entity_id: String,
    pub attributes: Vec<(String, String)>,
}

impl EntityRecord {
    pub fn new(source_id: &str, entity_id: &str, attributes: &[(&str, &str)]) -> Self {
        Self {
            source_id: source_id.to_owned(),
            entity_id: entity_id.to_owned(),
            attributes: attributes
                .iter()
                .map(|(name, value)| ((*name).to_owned(), (*value).to_owned()))
                .collect(),
        }
    }

    /// Unigram tokens of every attribute value, in attribute order.
    pub fn tokens(&self) -> Vec<String> {
        self.attributes
            .iter()
            .flat_map(|(_, value)| tokenize(value))
            .collect()
    }

    pub fn has_content(&self) -> bool {
        self.attributes
            .iter()
            .any(|(_, value)| !tokenize(value).is_empty())
    }
}

/// All contiguous n-grams (1..=n_max) per attribute, prefixed with the
/// attribute name. N-grams never cross attribute boundaries.
pub fn extract_features(record: &EntityRecord, n_max: usize) -> Vec<Feature> {
    let mut out = Vec::new();
    for (name, value) in &record.attributes {
        ngrams_into(&mut out, Some(name), &tokenize(value), n_max);
    }
    out
}

/// N-grams of a free-text query; these carry no attribute prefix.
pub fn query_features(query_text: &str, n_max: usize) -> Vec<Feature> {
    let mut out = Vec::new();
    ngrams_into(&mut out, None, &tokenize(query_text), n_max);
    out
}

/// Column mapping for one CSV-backed table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSpec {
    pub source_id: String,
    pub id_column: String,
    /// Empty means every non-id column, in header order.
    pub value_columns: Vec<String>,
}

impl TableSpec {
    pub fn new(source_id: &str, id_column: &str, value_columns: &[&str]) -> Self {
        Self {
            source_id: source_id.to_owned(),
            id_column: id_column.to_owned(),
            value_columns: value_columns.iter().map(|c| (*c).to_owned()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DataTable {
    pub source_id: String,
    pub schema: Vec<String>,
    pub records: Vec<EntityRecord>,
    positions: HashMap<String, usize>,
}

impl DataTable {
    /// Builds a table from in-memory records. Panics on duplicate ids or on
    /// attributes outside the schema; use [`load_table`] for untrusted input.
    pub fn from_records(source_id: &str, schema: &[&str], records: Vec<EntityRecord>) -> Self {
        assert!(!schema.is_empty(), "schema must not be empty");
        let schema: Vec<String> = schema.iter().map(|s| (*s).to_owned()).collect();
        let mut positions = HashMap::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            for (name, _) in &record.attributes {
                assert!(schema.contains(name), "attribute {name} outside schema");
            }
            let previous = positions.insert(record.entity_id.clone(), i);
            assert!(previous.is_none(), "duplicate entity id {}", record.entity_id);
        }
        Self {
            source_id: source_id.to_owned(),
            schema,
            records,
            positions,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, entity_id: &str) -> Option<&EntityRecord> {
        self.positions.get(entity_id).map(|&i| &self.records[i])
    }

    pub fn position(&self, entity_id: &str) -> Option<usize> {
        self.positions.get(entity_id).copied()
    }

    pub fn contains(&self, entity_id: &str) -> bool {
        self.positions.contains_key(entity_id)
    }
}

/// Counts reported alongside a loaded table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: usize,
    /// Rows whose values tokenize to nothing; they cannot be matched.
    pub skipped_empty: usize,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(file))
}

fn field(record: &csv::ByteRecord, index: usize) -> String {
    record
        .get(index)
        .map(|bytes| String::from_utf8_lossy(bytes).trim().to_owned())
        .unwrap_or_default()
}

/// Loads a header-first CSV file. Cells missing from short rows become
/// empty values.
pub fn load_table(path: &Path, spec: &TableSpec) -> Result<(DataTable, LoadReport), CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv_reader(path)?;
    let header: Vec<String> = reader
        .byte_headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| String::from_utf8_lossy(h).trim().to_owned())
        .collect();
    let column = |name: &str| header.iter().position(|h| h == name);

    let id_index = column(&spec.id_column).ok_or_else(|| CorpusError::MissingIdColumn {
        path: path.to_owned(),
        column: spec.id_column.clone(),
    })?;
    let value_columns: Vec<(String, usize)> = if spec.value_columns.is_empty() {
        header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != id_index)
            .map(|(i, h)| (h.clone(), i))
            .collect()
    } else {
        spec.value_columns
            .iter()
            .map(|name| {
                column(name)
                    .map(|i| (name.clone(), i))
                    .ok_or_else(|| CorpusError::MissingValueColumn {
                        path: path.to_owned(),
                        column: name.clone(),
                    })
            })
            .collect::<Result<_, _>>()?
    };

    let mut report = LoadReport::default();
    let mut records = Vec::new();
    let mut positions = HashMap::new();
    let mut row = csv::ByteRecord::new();
    while reader.read_byte_record(&mut row).map_err(csv_err)? {
        report.rows += 1;
        let entity_id = field(&row, id_index);
        let record = EntityRecord {
            source_id: spec.source_id.clone(),
            entity_id: entity_id.clone(),
            attributes: value_columns
                .iter()
                .map(|(name, i)| (name.clone(), field(&row, *i)))
                .collect(),
        };
        if positions.contains_key(&entity_id) {
            return Err(CorpusError::DuplicateId {
                path: path.to_owned(),
                id: entity_id,
            });
        }
        if !record.has_content() {
            report.skipped_empty += 1;
            continue;
        }
        positions.insert(entity_id, records.len());
        records.push(record);
    }
    log::info!(
        "loaded {} rows from {} ({} empty rows skipped)",
        report.rows,
        path.display(),
        report.skipped_empty
    );

    let table = DataTable {
        source_id: spec.source_id.clone(),
        schema: value_columns.into_iter().map(|(name, _)| name).collect(),
        records,
        positions,
    };
    Ok((table, report))
}

/// Known matches between local entities and entities of external sources.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pairs: BTreeSet<(String, String, String)>,
    by_local: BTreeMap<String, BTreeMap<String, BTreeSet<String>>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, local_id: &str, source_id: &str, external_id: &str) -> bool {
        let fresh = self.pairs.insert((
            local_id.to_owned(),
            source_id.to_owned(),
            external_id.to_owned(),
        ));
        if fresh {
            self.by_local
                .entry(local_id.to_owned())
                .or_default()
                .entry(source_id.to_owned())
                .or_default()
                .insert(external_id.to_owned());
        }
        fresh
    }

    pub fn extend(&mut self, other: &GroundTruth) {
        for (local, source, external) in &other.pairs {
            self.insert(local, source, external);
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.pairs
            .iter()
            .map(|(l, s, e)| (l.as_str(), s.as_str(), e.as_str()))
    }

    /// External entities of `source_id` that match `local_id`.
    pub fn matches(&self, local_id: &str, source_id: &str) -> Option<&BTreeSet<String>> {
        self.by_local.get(local_id)?.get(source_id)
    }

    pub fn is_match(&self, local_id: &str, source_id: &str, external_id: &str) -> bool {
        self.matches(local_id, source_id)
            .is_some_and(|set| set.contains(external_id))
    }

    /// Local entity ids with at least one partner, in id order.
    pub fn local_ids(&self) -> impl Iterator<Item = &str> {
        self.by_local.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroundTruthReport {
    pub rows: usize,
    pub dropped_unknown: usize,
}

/// Reads a header-first mapping file whose first two columns are the local
/// id and the external id. Rows naming ids absent from the loaded tables
/// are dropped and counted.
pub fn load_ground_truth(
    path: &Path,
    local: &DataTable,
    external: &DataTable,
) -> Result<(GroundTruth, GroundTruthReport), CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv_reader(path)?;
    let width = reader.byte_headers().map_err(csv_err)?.len();
    if width < 2 {
        return Err(CorpusError::GroundTruthShape {
            path: path.to_owned(),
        });
    }
    let mut truth = GroundTruth::new();
    let mut report = GroundTruthReport::default();
    let mut row = csv::ByteRecord::new();
    while reader.read_byte_record(&mut row).map_err(csv_err)? {
        report.rows += 1;
        let local_id = field(&row, 0);
        let external_id = field(&row, 1);
        if local.contains(&local_id) && external.contains(&external_id) {
            truth.insert(&local_id, &external.source_id, &external_id);
        } else {
            report.dropped_unknown += 1;
        }
    }
    if report.dropped_unknown > 0 {
        log::warn!(
            "{}: dropped {} pairs referencing unknown ids",
            path.display(),
            report.dropped_unknown
        );
    }
    Ok((truth, report))
}
