//! Commands behind the `progmap` binary: running configured experiments,
//! inspecting strategy snapshots and generating synthetic datasets.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::corpus::{load_ground_truth, load_table, CorpusError, GroundTruth};
use crate::evaluation::{run_experiment, Datasets, ExperimentError, ExperimentResult, MethodVariant};
use crate::strategy::{read_snapshot, SnapshotError};
use crate::synth::{self, Domain, SynthParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dataset(ExperimentError),
    #[error("{variant} seed {seed}: {source}")]
    Cell {
        variant: MethodVariant,
        seed: u64,
        #[source]
        source: ExperimentError,
    },
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Command-line overrides for `run`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Parallel experiment cells; `None` uses every core.
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed_override: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub variant: MethodVariant,
    pub seed: u64,
    pub final_mrr: f64,
    pub replays: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output: PathBuf,
    pub cells: Vec<CellSummary>,
}

/// Loads the configured tables and ground truth.
pub fn load_datasets(config: &ExperimentConfig) -> Result<(Datasets, String), RunError> {
    let mut report = String::new();
    let (local, local_report) = load_table(&config.local.path, &config.local.spec)?;
    let _ = writeln!(
        report,
        "{}: {} records ({} rows, {} empty skipped)",
        local.source_id,
        local.len(),
        local_report.rows,
        local_report.skipped_empty
    );
    let mut truth = GroundTruth::new();
    let mut externals = Vec::with_capacity(config.externals.len());
    for external in &config.externals {
        let (table, table_report) = load_table(&external.table.path, &external.table.spec)?;
        let (pairs, truth_report) = load_ground_truth(&external.ground_truth, &local, &table)?;
        let _ = writeln!(
            report,
            "{}: {} records ({} rows, {} empty skipped); ground truth {} pairs ({} rows, {} dropped)",
            table.source_id,
            table.len(),
            table_report.rows,
            table_report.skipped_empty,
            pairs.len(),
            truth_report.rows,
            truth_report.dropped_unknown
        );
        truth.extend(&pairs);
        externals.push(table);
    }
    Ok((Datasets::new(local, externals, truth, &config.learner), report))
}

/// Runs every (variant, seed) cell and writes `curves.csv`,
/// `interactions.log`, `strategies/` and `manifest.txt` to the output
/// directory. Output bytes depend only on the config and the data.
pub fn cmd_run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunSummary, RunError> {
    let mut config = config.clone();
    if let Some(seed) = options.seed_override {
        config.seeds = vec![seed];
    }
    if let Some(out) = &options.out {
        config.output = out.clone();
    }
    let (datasets, report) = load_datasets(&config)?;
    // Surface dataset problems once rather than per cell.
    run_experiment(config.variants[0], &datasets, 0, config.seeds[0], &config.options()).map_err(RunError::Dataset)?;

    let cells: Vec<(MethodVariant, u64)> = config
        .variants
        .iter()
        .flat_map(|&v| config.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let experiment_options = config.options();
    let results: Vec<ExperimentResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(variant, seed)| {
                log::info!("running {variant} seed {seed}");
                run_experiment(variant, &datasets, config.rounds, seed, &experiment_options)
                    .map_err(|source| RunError::Cell { variant, seed, source })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    write_outputs(&config, &report, &results)?;
    let cells = results
        .iter()
        .map(|r| CellSummary {
            variant: r.variant,
            seed: r.seed,
            final_mrr: r.final_mrr().unwrap_or(0.0),
            replays: r.replays.iter().sum(),
        })
        .collect();
    Ok(RunSummary {
        output: config.output.clone(),
        cells,
    })
}

fn write_outputs(config: &ExperimentConfig, report: &str, results: &[ExperimentResult]) -> Result<(), RunError> {
    let out = &config.output;
    let io_err = |path: &Path| {
        let path = path.to_owned();
        move |source| RunError::Io { path, source }
    };
    let strategies = out.join("strategies");
    fs::create_dir_all(&strategies).map_err(io_err(&strategies))?;

    let curves = out.join("curves.csv");
    write_file(&curves, |w| write_curves(w, results)).map_err(io_err(&curves))?;

    let log_path = out.join("interactions.log");
    write_file(&log_path, |w| {
        for result in results {
            for line in &result.log {
                w.write_all(line.as_bytes())?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    })
    .map_err(io_err(&log_path))?;

    for result in results {
        for snapshot in &result.snapshots {
            let stem = format!(
                "{}-seed{}-round{}-{}",
                result.variant, result.seed, snapshot.round, snapshot.source_id
            );
            for (side, body) in [("local", &snapshot.local), ("external", &snapshot.external)] {
                let path = strategies.join(format!("{stem}.{side}.tsv"));
                fs::write(&path, body).map_err(io_err(&path))?;
            }
        }
    }

    let manifest = out.join("manifest.txt");
    let mut text = format!("# progmap {VERSION}\n# cells: {}\n", results.len());
    for line in report.lines() {
        let _ = writeln!(text, "# {line}");
    }
    text.push('\n');
    text.push_str(&config.echo());
    fs::write(&manifest, text).map_err(io_err(&manifest))?;
    Ok(())
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    body(&mut writer)?;
    writer.flush()
}

/// `variant,seed,round,mrr_avg` rows in cell order, LF line endings.
pub fn write_curves<W: Write>(out: &mut W, results: &[ExperimentResult]) -> io::Result<()> {
    out.write_all(b"variant,seed,round,mrr_avg\n")?;
    for result in results {
        for point in &result.curve {
            writeln!(out, "{},{},{},{:.6}", point.variant, point.seed, point.round, point.mrr_avg)?;
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum InspectError {
    #[error("cannot read snapshot {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("unknown context `{0}`")]
    UnknownContext(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectRow {
    pub action: String,
    pub weight: f64,
    pub probability: f64,
}

/// The row of `context` in a snapshot file, most probable action first
/// (ties by action key), zero-mass actions omitted.
pub fn cmd_inspect(snapshot: &Path, context: &str) -> Result<Vec<InspectRow>, InspectError> {
    let file = File::open(snapshot).map_err(|source| InspectError::Io {
        path: snapshot.to_owned(),
        source,
    })?;
    let matrix = read_snapshot(BufReader::new(file))?;
    let row = matrix
        .row(&context.to_owned())
        .ok_or_else(|| InspectError::UnknownContext(context.to_owned()))?;
    let mut rows: Vec<InspectRow> = row
        .cells()
        .filter(|(_, s)| *s > 0.0)
        .map(|(action, weight)| InspectRow {
            action: action.clone(),
            weight,
            probability: weight / row.total(),
        })
        .collect();
    rows.sort_by(|a, b| b.probability.total_cmp(&a.probability).then_with(|| a.action.cmp(&b.action)));
    Ok(rows)
}

/// Learner settings written into generated configs.
const LEARNER_SETTINGS: &str = "\
[learner]
alpha = 10000
m_terms = 5
";

/// Writes a synthetic dataset plus a ready-to-run `experiment.conf`.
pub fn cmd_generate(params: &SynthParams, dir: &Path) -> io::Result<PathBuf> {
    let files = synth::generate_to(params, dir)?;
    let name = |p: &Path| p.file_name().expect("file path").to_string_lossy().into_owned();
    let rounds = match params.domain {
        Domain::Products => 2000,
        Domain::Movies => 1000,
    };
    let config = format!(
        "# {domain} data generated with seed {seed}\n\
         [experiment]\n\
         variants = baseline, ucb1, re-no-ext-learning, re-ext-learning, re-auto-expansion\n\
         seeds = 1, 2, 3, 4, 5\n\
         rounds = {rounds}\n\
         workload_skew = 1.0\n\
         output = out\n\n\
         [local]\n\
         path = {local}\n\n\
         [external external]\n\
         path = {external}\n\
         ground_truth = {mapping}\n\n\
         {LEARNER_SETTINGS}",
        domain = params.domain,
        seed = params.seed,
        local = name(&files.local),
        external = name(&files.external),
        mapping = name(&files.mapping),
    );
    let path = dir.join("experiment.conf");
    fs::write(&path, config)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate_config;

    fn small_params() -> SynthParams {
        SynthParams {
            domain: Domain::Products,
            local_size: 60,
            external_size: 80,
            matches: 30,
            seed: 7,
        }
    }

    #[test]
    fn generated_config_validates_and_runs() {
        let dir = tempfile::tempdir().unwrap();
        let conf = cmd_generate(&small_params(), dir.path()).unwrap();
        let mut config = validate_config(&conf).unwrap();
        config.rounds = 30;
        config.seeds = vec![1, 2];
        config.variants = vec![MethodVariant::Baseline, MethodVariant::ReAutoExpansion];
        config.snapshot_rounds = vec![10];
        let summary = cmd_run(&config, &RunOptions::default()).unwrap();
        assert_eq!(summary.cells.len(), 4);

        let curves = fs::read_to_string(dir.path().join("out/curves.csv")).unwrap();
        assert!(curves.starts_with("variant,seed,round,mrr_avg\n"));
        assert_eq!(curves.lines().count(), 1 + 4 * 30);
        assert!(!curves.contains('\r'));
        let log = fs::read_to_string(dir.path().join("out/interactions.log")).unwrap();
        assert_eq!(log.lines().count(), 4 * 30);
        let manifest = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
        assert!(manifest.contains("rounds = 30"));
        let snapshot = dir.path().join("out/strategies/re-auto-expansion-seed1-round10-external.local.tsv");
        assert!(snapshot.is_file());
    }

    #[test]
    fn seed_override_and_out_dir() {
        let dir = tempfile::tempdir().unwrap();
        let conf = cmd_generate(&small_params(), dir.path()).unwrap();
        let mut config = validate_config(&conf).unwrap();
        config.rounds = 5;
        config.variants = vec![MethodVariant::Baseline];
        let other = dir.path().join("elsewhere");
        let summary = cmd_run(
            &config,
            &RunOptions {
                jobs: Some(1),
                out: Some(other.clone()),
                seed_override: Some(42),
            },
        )
        .unwrap();
        assert_eq!(summary.cells.len(), 1);
        assert_eq!(summary.cells[0].seed, 42);
        assert!(other.join("curves.csv").is_file());
    }

    #[test]
    fn inspect_sorts_and_drops_zero_mass() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tsv");
        fs::write(&path, "s1\tg1\t0.4\ns1\tg2\t0.1\ns1\tg3\t0.5\ns1\tg4\t0\n").unwrap();
        let rows = cmd_inspect(&path, "s1").unwrap();
        let actions: Vec<&str> = rows.iter().map(|r| r.action.as_str()).collect();
        assert_eq!(actions, ["g3", "g1", "g2"]);
        let probabilities: Vec<f64> = rows.iter().map(|r| r.probability).collect();
        for (p, expected) in probabilities.iter().zip([0.5, 0.4, 0.1]) {
            assert!((p - expected).abs() < 1e-12);
        }
        assert!((probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(matches!(cmd_inspect(&path, "s9"), Err(InspectError::UnknownContext(_))));
    }

    #[test]
    fn inspect_empty_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        fs::write(&path, "").unwrap();
        assert!(matches!(cmd_inspect(&path, "s1"), Err(InspectError::UnknownContext(_))));
        assert!(matches!(cmd_inspect(&dir.path().join("none"), "s1"), Err(InspectError::Io { .. })));
    }
}
