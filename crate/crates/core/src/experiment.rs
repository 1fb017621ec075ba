//! Single-run orchestration: artifact directory, run loop, summary.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, SCHEMA_VERSION};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::problem::Operator;
use crate::strategies::StrategyKind;
use crate::telemetry::{
    change_point, peak, MetricsRow, RunTelemetry, TelemetrySink, TrialEvent, METRICS_FILE,
    SNAPSHOTS_FILE, TRIALS_FILE,
};
use crate::trainer::{evaluate_model, RunState, Trainer, TrialRecord};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const META_FILE: &str = "meta.json";
pub const ERROR_FILE: &str = "error.json";

/// Trials after the addition onset that count as "early".
pub const EARLY_SPAN: u64 = 2_000;
/// Trials at the end of a run that count as "late".
pub const LATE_SPAN: u64 = 2_000;
/// Trials at the end of a run used for the oracle fallback rate.
pub const ORACLE_SPAN: u64 = 1_000;
/// Level a behavioral accuracy series must persistently reach.
pub const ACCURACY_LEVEL: f64 = 0.5;

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub total_steps: u64,
    pub add_onset: u64,
    /// Argmax retrieval over all 25 addition items at the end of the run.
    pub final_add_accuracy: f64,
    /// Argmax retrieval over all 9 count-up items at the end of the run.
    pub final_count_accuracy: f64,
    pub peak_usage: Option<f64>,
    pub peak_usage_window: Option<usize>,
    /// Finger-counting usage in the last window holding addition trials.
    pub final_usage: Option<f64>,
    /// Highest window usage among windows overlapping the early span.
    pub early_usage_peak: Option<f64>,
    /// Finger-counting share of addition trials in the late span.
    pub late_usage: Option<f64>,
    /// Behavioral addition accuracy over trials in the early span.
    pub early_post_onset_accuracy: Option<f64>,
    /// First window where behavioral addition accuracy persistently reaches 0.5.
    pub accuracy_change_point: Option<usize>,
    /// Oracle share of count-up trials in the last `ORACLE_SPAN` trials.
    pub final_oracle_rate: Option<f64>,
    pub window: u64,
}

fn share<'a>(records: impl Iterator<Item = &'a TrialRecord>, hit: impl Fn(&TrialRecord) -> bool) -> Option<f64> {
    let (mut n, mut k) = (0u64, 0u64);
    for r in records {
        n += 1;
        k += hit(r) as u64;
    }
    (n > 0).then(|| k as f64 / n as f64)
}

impl RunSummary {
    /// Derives the summary from a run's trial log and metrics rows, plus the
    /// final retrieval accuracies.
    pub fn from_log(
        config: &RunConfig,
        records: &[TrialRecord],
        rows: &[MetricsRow],
        final_add_accuracy: f64,
        final_count_accuracy: f64,
    ) -> Self {
        let total = records.len() as u64;
        let onset = config.add_onset;
        let w = config.metrics_window;
        let usage: Vec<Option<f64>> = rows.iter().map(|r| r.finger_usage).collect();
        let accuracy: Vec<Option<f64>> = rows.iter().map(|r| r.add_accuracy).collect();
        let peak_usage = peak(&usage);

        let early_usage: Vec<Option<f64>> = rows
            .iter()
            .filter(|r| {
                let start = r.window * w;
                start + w > onset && start < onset + EARLY_SPAN
            })
            .map(|r| r.finger_usage)
            .collect();

        let adds = || records.iter().filter(|r| r.is_addition());
        let late_start = total.saturating_sub(LATE_SPAN);
        let oracle_start = total.saturating_sub(ORACLE_SPAN);

        RunSummary {
            seed: config.seed,
            total_steps: total,
            add_onset: onset,
            final_add_accuracy,
            final_count_accuracy,
            peak_usage: peak_usage.map(|(_, v)| v),
            peak_usage_window: peak_usage.map(|(i, _)| i),
            final_usage: usage.iter().rev().find_map(|v| *v),
            early_usage_peak: peak(&early_usage).map(|(_, v)| v),
            late_usage: share(adds().filter(|r| r.step >= late_start), |r| {
                r.strategy == StrategyKind::FingerCount
            }),
            early_post_onset_accuracy: share(
                adds().filter(|r| r.step >= onset && r.step < onset + EARLY_SPAN),
                |r| r.correct,
            ),
            accuracy_change_point: change_point(&accuracy, ACCURACY_LEVEL),
            final_oracle_rate: share(
                records
                    .iter()
                    .filter(|r| !r.is_addition() && r.step >= oracle_start),
                |r| r.strategy == StrategyKind::OracleCount,
            ),
            window: w,
        }
    }
}

/// Paths written by a successful run, plus its summary.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub trials: PathBuf,
    pub metrics: PathBuf,
    pub snapshots: PathBuf,
    pub checkpoint: PathBuf,
    pub summary_path: PathBuf,
    pub meta: PathBuf,
    pub summary: RunSummary,
}

impl RunArtifacts {
    pub fn paths(&self) -> [&Path; 7] {
        [
            &self.config,
            &self.trials,
            &self.metrics,
            &self.snapshots,
            &self.checkpoint,
            &self.summary_path,
            &self.meta,
        ]
    }
}

struct Recorder {
    telemetry: RunTelemetry,
    records: Vec<TrialRecord>,
}

impl TelemetrySink for Recorder {
    fn on_trial(&mut self, event: &TrialEvent<'_>) -> Result<()> {
        self.telemetry.on_trial(event)?;
        self.records.push(event.record.clone());
        Ok(())
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs one experiment into `config.output_dir`.
pub fn run_experiment(config: &RunConfig) -> Result<RunArtifacts> {
    let trainer = Trainer::new(config)?;
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let started = unix_seconds();

    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, config.to_json_pretty() + "\n")
        .map_err(|e| Error::io(&config_path, e))?;

    let mut state = RunState::new(config)?;
    let mut recorder = Recorder {
        telemetry: RunTelemetry::create(
            &dir,
            config.metrics_window,
            &config.probe_problems()?,
            config.snapshot_every_k,
        )?,
        records: Vec::with_capacity(config.total_steps as usize),
    };

    if let Err(err) = trainer.run_to_end(&mut state, &mut recorder) {
        let _ = recorder.telemetry.flush();
        let marker = serde_json::json!({ "error": err.to_string(), "step": state.step });
        let _ = write_json(&dir.join(ERROR_FILE), &marker);
        return Err(err);
    }
    let rows = recorder.telemetry.finish(&state.params, &state.stats)?;

    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    checkpoint::save(&state, &checkpoint_path)?;

    let summary = RunSummary::from_log(
        config,
        &recorder.records,
        &rows,
        evaluate_model(&state.params, Operator::Add),
        evaluate_model(&state.params, Operator::CountUp),
    );
    let summary_path = dir.join(SUMMARY_FILE);
    write_json(&summary_path, &summary)?;

    let meta_path = dir.join(META_FILE);
    write_json(
        &meta_path,
        &serde_json::json!({
            "started_unix": started,
            "finished_unix": unix_seconds(),
            "crate_version": env!("CARGO_PKG_VERSION"),
            "checkpoint_schema_version": SCHEMA_VERSION,
        }),
    )?;

    Ok(RunArtifacts {
        config: config_path,
        trials: dir.join(TRIALS_FILE),
        metrics: dir.join(METRICS_FILE),
        snapshots: dir.join(SNAPSHOTS_FILE),
        checkpoint: checkpoint_path,
        summary_path,
        meta: meta_path,
        dir,
        summary,
    })
}
