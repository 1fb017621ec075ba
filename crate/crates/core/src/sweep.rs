//! Grid of runs over addition onsets and seeds, with an aggregate table and
//! seed-averaged overlays.

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{json_config_error, RunConfig};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, RunSummary};
use crate::figures::{render_sweep_figures, Figure};

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Settings shared by every run; its `output_dir` is the sweep root.
    pub base: RunConfig,
    pub onsets: Vec<u64>,
    pub seeds: Vec<u64>,
    /// Concurrent runs; `None` uses every logical core.
    pub parallelism: Option<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            base: RunConfig {
                output_dir: PathBuf::from("runs/sweep"),
                ..RunConfig::default()
            },
            onsets: vec![0, 5_000, 10_000, 20_000],
            seeds: (1..=5).collect(),
            parallelism: None,
        }
    }
}

impl SweepSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text).map_err(json_config_error)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.onsets.is_empty() {
            return Err(Error::config("onsets", "need at least one onset"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.parallelism == Some(0) {
            return Err(Error::config("parallelism", "must be at least 1"));
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.base.output_dir
    }

    /// Every (onset, seed) pair, onsets outermost.
    pub fn grid(&self) -> Vec<(u64, u64)> {
        self.onsets
            .iter()
            .flat_map(|&o| self.seeds.iter().map(move |&s| (o, s)))
            .collect()
    }

    /// The config for one grid cell.
    pub fn run_config(&self, onset: u64, seed: u64) -> RunConfig {
        RunConfig {
            seed: derive_seed(self.base.seed, onset, seed),
            add_onset: onset,
            output_dir: self.root().join(run_dir_name(onset, seed)),
            ..self.base.clone()
        }
    }
}

pub fn run_dir_name(onset: u64, seed: u64) -> String {
    format!("onset{onset}_seed{seed}")
}

/// Seed for one grid cell, fixed by its coordinates alone so results do not
/// depend on scheduling order.
pub fn derive_seed(base_seed: u64, onset: u64, seed: u64) -> u64 {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([base_seed, onset, seed]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key).next_u64()
}

/// One row of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub onset: u64,
    pub seed: u64,
    pub run_seed: u64,
    pub status: String,
    pub accuracy_change_point: Option<usize>,
    pub usage_peak_window: Option<usize>,
    pub usage_peak: Option<f64>,
    pub final_add_accuracy: Option<f64>,
    pub early_post_onset_accuracy: Option<f64>,
    pub final_count_accuracy: Option<f64>,
    pub late_usage: Option<f64>,
    pub error: String,
}

impl AggregateRow {
    fn new(onset: u64, seed: u64, run_seed: u64, outcome: &Result<RunSummary>) -> Self {
        let s = outcome.as_ref().ok();
        AggregateRow {
            onset,
            seed,
            run_seed,
            status: if s.is_some() { "ok" } else { "failed" }.into(),
            accuracy_change_point: s.and_then(|s| s.accuracy_change_point),
            usage_peak_window: s.and_then(|s| s.peak_usage_window),
            usage_peak: s.and_then(|s| s.peak_usage),
            final_add_accuracy: s.map(|s| s.final_add_accuracy),
            early_post_onset_accuracy: s.and_then(|s| s.early_post_onset_accuracy),
            final_count_accuracy: s.map(|s| s.final_count_accuracy),
            late_usage: s.and_then(|s| s.late_usage),
            error: outcome.as_ref().err().map(|e| e.to_string()).unwrap_or_default(),
        }
    }
}

#[derive(Debug)]
pub struct SweepRun {
    pub onset: u64,
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: Result<RunSummary>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub root: PathBuf,
    pub runs: Vec<SweepRun>,
    pub aggregate: PathBuf,
    pub figures: Vec<PathBuf>,
}

impl SweepReport {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRun> {
        self.runs.iter().filter(|r| r.outcome.is_err())
    }
}

/// Runs the whole grid. Individual run failures are collected in the report
/// rather than aborting the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let root = spec.root().to_path_buf();
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let spec_path = root.join(SWEEP_FILE);
    let text = serde_json::to_string_pretty(spec)?;
    std::fs::write(&spec_path, text + "\n").map_err(|e| Error::io(&spec_path, e))?;

    let threads = spec
        .parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;

    let runs: Vec<SweepRun> = pool.install(|| {
        spec.grid()
            .into_par_iter()
            .map(|(onset, seed)| {
                let config = spec.run_config(onset, seed);
                let outcome = run_experiment(&config).map(|a| a.summary);
                SweepRun {
                    onset,
                    seed,
                    dir: config.output_dir,
                    outcome,
                }
            })
            .collect()
    });

    let aggregate = root.join(AGGREGATE_FILE);
    write_aggregate(&aggregate, spec, &runs)?;
    let figures = if runs.iter().any(|r| r.outcome.is_ok()) {
        render_sweep_figures(&root, Figure::All)?
    } else {
        Vec::new()
    };
    Ok(SweepReport {
        root,
        runs,
        aggregate,
        figures,
    })
}

fn write_aggregate(path: &Path, spec: &SweepSpec, runs: &[SweepRun]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Input(format!("writing {}: {e}", path.display()));
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    for run in runs {
        let run_seed = derive_seed(spec.base.seed, run.onset, run.seed);
        writer
            .serialize(AggregateRow::new(run.onset, run.seed, run_seed, &run.outcome))
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let csv_err = |e: csv::Error| Error::Input(format!("reading {}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, 0, 1), derive_seed(1, 0, 1));
        assert_ne!(derive_seed(1, 0, 1), derive_seed(1, 0, 2));
        assert_ne!(derive_seed(1, 0, 1), derive_seed(1, 10, 1));
        assert_ne!(derive_seed(1, 0, 1), derive_seed(2, 0, 1));
    }

    #[test]
    fn grid_covers_every_pair() {
        let spec = SweepSpec {
            onsets: vec![0, 10_000, 20_000],
            ..Default::default()
        };
        let grid = spec.grid();
        assert_eq!(grid.len(), 15);
        assert_eq!(grid[0], (0, 1));
        assert_eq!(grid[14], (20_000, 5));
        let c = spec.run_config(10_000, 3);
        assert_eq!(c.add_onset, 10_000);
        assert!(c.output_dir.ends_with("onset10000_seed3"));
    }

    #[test]
    fn spec_validation_names_keys() {
        let key = |text: &str| match SweepSpec::from_json(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(key(r#"{"onsets": []}"#), "onsets");
        assert_eq!(key(r#"{"seeds": []}"#), "seeds");
        assert_eq!(key(r#"{"parallelism": 0}"#), "parallelism");
        assert_eq!(key(r#"{"onset": [1]}"#), "onset");
        assert_eq!(key(r#"{"base": {"sigma": -1}}"#), "sigma");
        assert_eq!(key(r#"{"base": {"sigmaa": 1}}"#), "sigmaa");
    }
}
