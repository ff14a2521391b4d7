//! Experiment configuration: a flat `key = value` file with `[section]`
//! headers.
//!
//! ```text
//! [experiment]
//! variants = baseline, re-auto-expansion
//! seeds = 1, 2, 3
//! rounds = 2000
//!
//! [local]
//! path = local.csv
//!
//! [external shop]
//! path = external.csv
//! ground_truth = mapping.csv
//! ```
//!
//! Relative paths resolve against the config file's directory. Unknown
//! sections and keys are errors, as are non-positive numbers.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::TableSpec;
use crate::evaluation::{ExperimentOptions, MethodVariant};
use crate::protocol::SessionConfig;
use crate::strategy::LearnerConfig;

pub const DEFAULT_ROUNDS: usize = 2000;
pub const DEFAULT_SNAPSHOT_ROUNDS: [usize; 4] = [100, 500, 1000, 2000];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section `[{section}]`")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: duplicate key `{key}` in [{section}]")]
    DuplicateKey { line: usize, section: String, key: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    Invalid { line: usize, key: String, message: String },
    #[error("missing required setting: {0}")]
    Missing(String),
    #[error("`{key}` points to a missing file: {}", path.display())]
    MissingPath { key: String, path: PathBuf },
}

/// A data table and how to read it.
#[derive(Debug, Clone, PartialEq)]
pub struct TableConfig {
    pub path: PathBuf,
    pub spec: TableSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalConfig {
    pub table: TableConfig,
    pub ground_truth: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub local: TableConfig,
    pub externals: Vec<ExternalConfig>,
    pub variants: Vec<MethodVariant>,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub window: usize,
    pub workload_skew: f64,
    pub snapshot_rounds: Vec<usize>,
    pub output: PathBuf,
    pub learner: LearnerConfig,
    pub session: SessionConfig,
}

impl ExperimentConfig {
    pub fn options(&self) -> ExperimentOptions {
        ExperimentOptions {
            learner: self.learner.clone(),
            session: self.session.clone(),
            window: self.window,
            workload_skew: self.workload_skew,
            snapshot_rounds: self.snapshot_rounds.clone(),
            keep_log: true,
        }
    }

    /// Fully defaulted settings in the config syntax, with absolute paths.
    /// Parsing the result yields an equal config.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let list = |items: Vec<String>| items.join(", ");
        let _ = writeln!(out, "[experiment]");
        let _ = writeln!(out, "variants = {}", list(self.variants.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(out, "seeds = {}", list(self.seeds.iter().map(|s| s.to_string()).collect()));
        let _ = writeln!(out, "rounds = {}", self.rounds);
        let _ = writeln!(out, "window = {}", self.window);
        let _ = writeln!(out, "workload_skew = {}", self.workload_skew);
        let _ = writeln!(
            out,
            "snapshot_rounds = {}",
            list(self.snapshot_rounds.iter().map(|s| s.to_string()).collect())
        );
        let _ = writeln!(out, "output = {}", self.output.display());
        let table = |out: &mut String, t: &TableConfig| {
            let _ = writeln!(out, "path = {}", t.path.display());
            let _ = writeln!(out, "id_column = {}", t.spec.id_column);
            let _ = writeln!(out, "columns = {}", t.spec.value_columns.join(", "));
        };
        let _ = writeln!(out, "\n[local]");
        let _ = writeln!(out, "source_id = {}", self.local.spec.source_id);
        table(&mut out, &self.local);
        for external in &self.externals {
            let _ = writeln!(out, "\n[external {}]", external.table.spec.source_id);
            table(&mut out, &external.table);
            let _ = writeln!(out, "ground_truth = {}", external.ground_truth.display());
        }
        let l = &self.learner;
        let _ = writeln!(out, "\n[learner]");
        let _ = writeln!(out, "alpha = {}", l.alpha);
        let _ = writeln!(out, "k_results = {}", l.k_results);
        let _ = writeln!(out, "m_terms = {}", l.m_terms);
        let _ = writeln!(out, "n_max = {}", l.n_max);
        let _ = writeln!(out, "ucb_c = {}", l.ucb_c);
        let _ = writeln!(out, "init_boost = {}", l.init_boost);
        let _ = writeln!(out, "bm25_k1 = {}", l.bm25.k1);
        let _ = writeln!(out, "bm25_b = {}", l.bm25.b);
        let _ = writeln!(out, "\n[session]");
        let _ = writeln!(out, "min_interactions_before_auto = {}", self.session.min_interactions_before_auto);
        let _ = writeln!(out, "auto_max_rounds = {}", self.session.auto_max_rounds);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Section {
    Experiment,
    Local,
    External(String),
    Learner,
    Session,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Section::Experiment => f.write_str("experiment"),
            Section::Local => f.write_str("local"),
            Section::External(name) => write!(f, "external {name}"),
            Section::Learner => f.write_str("learner"),
            Section::Session => f.write_str("session"),
        }
    }
}

impl Section {
    fn keys(&self) -> &'static [&'static str] {
        match self {
            Section::Experiment => &["variants", "seeds", "rounds", "window", "workload_skew", "snapshot_rounds", "output"],
            Section::Local => &["path", "source_id", "id_column", "columns"],
            Section::External(_) => &["path", "id_column", "columns", "ground_truth"],
            Section::Learner => &["alpha", "k_results", "m_terms", "n_max", "ucb_c", "init_boost", "bm25_k1", "bm25_b"],
            Section::Session => &["min_interactions_before_auto", "auto_max_rounds"],
        }
    }
}

#[derive(Debug, Default)]
struct TableBuilder {
    path: Option<(usize, String)>,
    source_id: Option<String>,
    id_column: Option<String>,
    columns: Vec<String>,
    ground_truth: Option<(usize, String)>,
}

/// Reads and validates a config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_config(&text, base)
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut learner = LearnerConfig::default();
    let mut session = SessionConfig::default();
    let mut variants: Option<Vec<MethodVariant>> = None;
    let mut seeds: Option<Vec<u64>> = None;
    let mut rounds = DEFAULT_ROUNDS;
    let mut window = ExperimentOptions::default().window;
    let mut workload_skew = 0.0;
    let mut snapshot_rounds = DEFAULT_SNAPSHOT_ROUNDS.to_vec();
    let mut output = base.join("out");
    let mut local = TableBuilder::default();
    let mut local_seen = false;
    let mut externals: Vec<(String, TableBuilder)> = Vec::new();

    let mut section: Option<Section> = None;
    let mut seen_keys: BTreeSet<(String, String)> = BTreeSet::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let Some(header) = header.strip_suffix(']') else {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("unterminated section header `{content}`"),
                });
            };
            let mut parts = header.split_whitespace();
            let next = match (parts.next(), parts.next(), parts.next()) {
                (Some("experiment"), None, _) => Section::Experiment,
                (Some("local"), None, _) => {
                    local_seen = true;
                    Section::Local
                }
                (Some("learner"), None, _) => Section::Learner,
                (Some("session"), None, _) => Section::Session,
                (Some("external"), Some(name), None) => {
                    if externals.iter().any(|(n, _)| n == name) {
                        return Err(ConfigError::Syntax {
                            line,
                            message: format!("duplicate section `[external {name}]`"),
                        });
                    }
                    externals.push((name.to_owned(), TableBuilder::default()));
                    Section::External(name.to_owned())
                }
                _ => {
                    return Err(ConfigError::UnknownSection {
                        line,
                        section: header.trim().to_owned(),
                    })
                }
            };
            section = Some(next);
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        let Some(current) = &section else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("`{key}` appears before any section header"),
            });
        };
        if !current.keys().contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                section: current.to_string(),
                key: key.to_owned(),
            });
        }
        if !seen_keys.insert((current.to_string(), key.to_owned())) {
            return Err(ConfigError::DuplicateKey {
                line,
                section: current.to_string(),
                key: key.to_owned(),
            });
        }
        let invalid = |message: String| ConfigError::Invalid {
            line,
            key: key.to_owned(),
            message,
        };
        match current {
            Section::Experiment => match key {
                "variants" => {
                    let parsed = list(value)
                        .map(|v| v.parse::<MethodVariant>().map_err(|e| invalid(e.to_string())))
                        .collect::<Result<Vec<_>, _>>()?;
                    variants = Some(non_empty(parsed, &invalid)?);
                }
                "seeds" => {
                    let parsed = list(value)
                        .map(|s| s.parse::<u64>().map_err(|e| invalid(format!("`{s}`: {e}"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    seeds = Some(non_empty(parsed, &invalid)?);
                }
                "rounds" => rounds = positive_int(value, &invalid)?,
                "window" => window = positive_int(value, &invalid)?,
                "workload_skew" => {
                    workload_skew = number(value, &invalid)?;
                    if workload_skew < 0.0 {
                        return Err(invalid("must be zero (uniform) or positive".into()));
                    }
                }
                "snapshot_rounds" => {
                    snapshot_rounds = list(value)
                        .map(|s| positive_int(s, &invalid))
                        .collect::<Result<Vec<_>, _>>()?;
                }
                "output" => output = resolve(base, non_blank(value, &invalid)?),
                _ => unreachable!(),
            },
            Section::Local | Section::External(_) => {
                let builder = match current {
                    Section::Local => &mut local,
                    _ => &mut externals.last_mut().expect("section pushed").1,
                };
                match key {
                    "path" => builder.path = Some((line, non_blank(value, &invalid)?.to_owned())),
                    "source_id" => builder.source_id = Some(non_blank(value, &invalid)?.to_owned()),
                    "id_column" => builder.id_column = Some(non_blank(value, &invalid)?.to_owned()),
                    "columns" => builder.columns = list(value).map(str::to_owned).collect(),
                    "ground_truth" => builder.ground_truth = Some((line, non_blank(value, &invalid)?.to_owned())),
                    _ => unreachable!(),
                }
            }
            Section::Learner => match key {
                "alpha" => learner.alpha = positive(value, &invalid)?,
                "k_results" => learner.k_results = positive_int(value, &invalid)?,
                "m_terms" => learner.m_terms = positive_int(value, &invalid)?,
                "n_max" => learner.n_max = positive_int(value, &invalid)?,
                "ucb_c" => learner.ucb_c = positive(value, &invalid)?,
                "init_boost" => learner.init_boost = positive(value, &invalid)?,
                "bm25_k1" => learner.bm25.k1 = positive(value, &invalid)?,
                "bm25_b" => learner.bm25.b = positive(value, &invalid)?,
                _ => unreachable!(),
            },
            Section::Session => match key {
                "min_interactions_before_auto" => session.min_interactions_before_auto = positive_int(value, &invalid)?,
                "auto_max_rounds" => session.auto_max_rounds = positive_int(value, &invalid)?,
                _ => unreachable!(),
            },
        }
    }

    if !local_seen || local.path.is_none() {
        return Err(ConfigError::Missing("[local] path".into()));
    }
    if externals.is_empty() {
        return Err(ConfigError::Missing("at least one [external NAME] section".into()));
    }
    if learner.bm25.b > 1.0 {
        return Err(ConfigError::Invalid {
            line: 0,
            key: "bm25_b".into(),
            message: "must lie in (0, 1]".into(),
        });
    }
    let local_id = local.source_id.clone().unwrap_or_else(|| "local".to_owned());
    let local = finish_table(base, "[local] path", local_id.clone(), local)?;
    let externals = externals
        .into_iter()
        .map(|(name, mut builder)| {
            if name == local_id {
                return Err(ConfigError::Syntax {
                    line: 0,
                    message: format!("external source `{name}` reuses the local source id"),
                });
            }
            let truth_key = format!("[external {name}] ground_truth");
            let (_, truth) = builder.ground_truth.take().ok_or_else(|| ConfigError::Missing(truth_key.clone()))?;
            let ground_truth = existing(base, &truth_key, &truth)?;
            let table = finish_table(base, &format!("[external {name}] path"), name, builder)?;
            Ok(ExternalConfig { table, ground_truth })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ExperimentConfig {
        local,
        externals,
        variants: variants.unwrap_or_else(|| MethodVariant::ALL.to_vec()),
        seeds: seeds.unwrap_or_else(|| vec![1]),
        rounds,
        window,
        workload_skew,
        snapshot_rounds,
        output,
        learner,
        session,
    })
}

fn finish_table(base: &Path, key: &str, source_id: String, builder: TableBuilder) -> Result<TableConfig, ConfigError> {
    let (_, raw) = builder.path.ok_or_else(|| ConfigError::Missing(key.to_owned()))?;
    let path = existing(base, key, &raw)?;
    let columns: Vec<&str> = builder.columns.iter().map(String::as_str).collect();
    Ok(TableConfig {
        path,
        spec: TableSpec::new(&source_id, builder.id_column.as_deref().unwrap_or("id"), &columns),
    })
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let path = Path::new(raw);
    if path.is_absolute() {
        path.to_owned()
    } else {
        base.join(path)
    }
}

fn existing(base: &Path, key: &str, raw: &str) -> Result<PathBuf, ConfigError> {
    let path = resolve(base, raw);
    if path.is_file() {
        Ok(path)
    } else {
        Err(ConfigError::MissingPath {
            key: key.to_owned(),
            path,
        })
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn non_empty<T>(items: Vec<T>, invalid: &impl Fn(String) -> ConfigError) -> Result<Vec<T>, ConfigError> {
    if items.is_empty() {
        Err(invalid("needs at least one entry".into()))
    } else {
        Ok(items)
    }
}

fn non_blank<'a>(value: &'a str, invalid: &impl Fn(String) -> ConfigError) -> Result<&'a str, ConfigError> {
    if value.is_empty() {
        Err(invalid("must not be empty".into()))
    } else {
        Ok(value)
    }
}

fn number(value: &str, invalid: &impl Fn(String) -> ConfigError) -> Result<f64, ConfigError> {
    match f64::from_str(value) {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(invalid(format!("`{value}` is not a number"))),
    }
}

fn positive(value: &str, invalid: &impl Fn(String) -> ConfigError) -> Result<f64, ConfigError> {
    let x = number(value, invalid)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(format!("`{value}` must be positive")))
    }
}

fn positive_int(value: &str, invalid: &impl Fn(String) -> ConfigError) -> Result<usize, ConfigError> {
    match i64::from_str(value) {
        Ok(x) if x > 0 => Ok(x as usize),
        Ok(_) => Err(invalid(format!("`{value}` must be positive"))),
        Err(_) => Err(invalid(format!("`{value}` is not an integer"))),
    }
}
