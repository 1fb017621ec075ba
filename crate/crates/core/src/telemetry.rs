//! Per-trial telemetry: the JSONL trial log, windowed metrics, probe
//! snapshots, and readers for all three.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{AnswerDistribution, ModelParams};
use crate::problem::{Operator, Problem, NUM_TOKENS};
use crate::strategies::{StrategyKind, StrategyStats};
use crate::trainer::{evaluate_model, TrialRecord};

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";

/// What the trainer reports after each trial.
pub struct TrialEvent<'a> {
    pub record: &'a TrialRecord,
    /// Retrieval distribution on the trial's problem, before its update.
    pub distribution: &'a AnswerDistribution,
    /// Parameters after the trial's update.
    pub params: &'a ModelParams,
    pub stats: &'a StrategyStats,
}

pub trait TelemetrySink {
    fn on_trial(&mut self, event: &TrialEvent<'_>) -> Result<()>;
}

impl TelemetrySink for () {
    fn on_trial(&mut self, _: &TrialEvent<'_>) -> Result<()> {
        Ok(())
    }
}

impl TelemetrySink for Vec<TrialRecord> {
    fn on_trial(&mut self, event: &TrialEvent<'_>) -> Result<()> {
        self.push(event.record.clone());
        Ok(())
    }
}

/// One row of `metrics.csv`. Columns from `add_trials` through `oracle_rate`
/// are derived from the trial log alone; the remaining ones sample the model
/// at the window's end. Rates over an empty set are left blank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub window: u64,
    /// One past the last step of the window.
    pub step_end: u64,
    pub add_trials: u64,
    pub add_accuracy: Option<f64>,
    pub finger_usage: Option<f64>,
    pub add_confidence: Option<f64>,
    pub count_trials: u64,
    pub count_accuracy: Option<f64>,
    pub oracle_rate: Option<f64>,
    pub retrieval_add_accuracy: Option<f64>,
    pub retrieval_count_accuracy: Option<f64>,
    pub w_retrieval_add: Option<f64>,
    pub w_finger: Option<f64>,
}

impl MetricsRow {
    /// Copy with the model-sampled columns blanked.
    pub fn log_derived(&self) -> MetricsRow {
        MetricsRow {
            retrieval_add_accuracy: None,
            retrieval_count_accuracy: None,
            w_retrieval_add: None,
            w_finger: None,
            ..self.clone()
        }
    }
}

/// Model state sampled at a window boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowProbe {
    pub retrieval_add_accuracy: f64,
    pub retrieval_count_accuracy: f64,
    pub w_retrieval_add: f64,
    pub w_finger: f64,
}

impl WindowProbe {
    pub fn sample(params: &ModelParams, stats: &StrategyStats) -> Self {
        WindowProbe {
            retrieval_add_accuracy: evaluate_model(params, Operator::Add),
            retrieval_count_accuracy: evaluate_model(params, Operator::CountUp),
            w_retrieval_add: stats.w_retrieval_add,
            w_finger: stats.w_finger,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accumulates trial records into fixed-size windows.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    window: u64,
    index: u64,
    last_step: Option<u64>,
    add_trials: u64,
    add_correct: u64,
    finger_trials: u64,
    add_confidence: f64,
    count_trials: u64,
    count_correct: u64,
    oracle_trials: u64,
}

impl MetricsAccumulator {
    pub fn new(window: u64) -> Self {
        assert!(window >= 1, "window must be positive");
        MetricsAccumulator {
            window,
            index: 0,
            last_step: None,
            add_trials: 0,
            add_correct: 0,
            finger_trials: 0,
            add_confidence: 0.0,
            count_trials: 0,
            count_correct: 0,
            oracle_trials: 0,
        }
    }

    /// Adds a record; returns true when it closes a window.
    pub fn push(&mut self, record: &TrialRecord) -> bool {
        if record.is_addition() {
            self.add_trials += 1;
            self.add_correct += record.correct as u64;
            self.finger_trials += (record.strategy == StrategyKind::FingerCount) as u64;
            self.add_confidence += record.confidence;
        } else {
            self.count_trials += 1;
            self.count_correct += record.correct as u64;
            self.oracle_trials += (record.strategy == StrategyKind::OracleCount) as u64;
        }
        self.last_step = Some(record.step);
        (record.step + 1).is_multiple_of(self.window)
    }

    pub fn has_pending(&self) -> bool {
        self.add_trials + self.count_trials > 0
    }

    /// Emits the current window and starts the next one.
    pub fn close(&mut self, probe: Option<WindowProbe>) -> MetricsRow {
        let row = MetricsRow {
            window: self.index,
            step_end: self.last_step.map_or(0, |s| s + 1),
            add_trials: self.add_trials,
            add_accuracy: ratio(self.add_correct, self.add_trials),
            finger_usage: ratio(self.finger_trials, self.add_trials),
            add_confidence: (self.add_trials > 0)
                .then(|| self.add_confidence / self.add_trials as f64),
            count_trials: self.count_trials,
            count_accuracy: ratio(self.count_correct, self.count_trials),
            oracle_rate: ratio(self.oracle_trials, self.count_trials),
            retrieval_add_accuracy: probe.map(|p| p.retrieval_add_accuracy),
            retrieval_count_accuracy: probe.map(|p| p.retrieval_count_accuracy),
            w_retrieval_add: probe.map(|p| p.w_retrieval_add),
            w_finger: probe.map(|p| p.w_finger),
        };
        *self = MetricsAccumulator {
            index: self.index + 1,
            last_step: self.last_step,
            ..MetricsAccumulator::new(self.window)
        };
        row
    }
}

/// Recomputes the log-derived metric columns from a trial log.
pub fn metrics_from_log(records: &[TrialRecord], window: u64) -> Vec<MetricsRow> {
    let mut acc = MetricsAccumulator::new(window);
    let mut rows = Vec::new();
    for r in records {
        if acc.push(r) {
            rows.push(acc.close(None));
        }
    }
    if acc.has_pending() {
        rows.push(acc.close(None));
    }
    rows
}

/// A stored probe distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub problem: Problem,
    /// 1-based count of this probe's appearances in the trial stream.
    pub occurrence: u64,
    pub distribution: AnswerDistribution,
}

/// Keeps every k-th occurrence of each probe problem.
#[derive(Debug, Clone)]
pub struct SnapshotTaker {
    every_k: u64,
    probes: Vec<(Problem, u64)>,
}

impl SnapshotTaker {
    pub fn new(probes: &[Problem], every_k: u64) -> Self {
        assert!(every_k >= 1, "k must be positive");
        SnapshotTaker {
            every_k,
            probes: probes.iter().map(|p| (*p, 0)).collect(),
        }
    }

    pub fn observe(
        &mut self,
        step: u64,
        problem: &Problem,
        dist: &AnswerDistribution,
    ) -> Option<Snapshot> {
        let every_k = self.every_k;
        let (probe, count) = self.probes.iter_mut().find(|(p, _)| p == problem)?;
        *count += 1;
        (*count % every_k == 0).then(|| Snapshot {
            step,
            problem: *probe,
            occurrence: *count,
            distribution: dist.clone(),
        })
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{}: {other:?}", path.display())),
    }
}

fn snapshot_header() -> Vec<String> {
    let mut h = vec!["step".to_string(), "probe".into(), "occurrence".into()];
    h.extend((1..=NUM_TOKENS).map(|i| format!("p{i}")));
    h
}

/// Streams a run's trial log, metrics and snapshots to a directory.
pub struct RunTelemetry {
    dir: PathBuf,
    trials: BufWriter<File>,
    metrics: csv::Writer<BufWriter<File>>,
    snapshots: csv::Writer<BufWriter<File>>,
    accumulator: MetricsAccumulator,
    taker: SnapshotTaker,
    rows: Vec<MetricsRow>,
}

impl RunTelemetry {
    pub fn create(dir: &Path, window: u64, probes: &[Problem], every_k: u64) -> Result<Self> {
        let trials_path = dir.join(TRIALS_FILE);
        let trials = File::create(&trials_path).map_err(|e| Error::io(&trials_path, e))?;
        let mut metrics = csv_writer(&dir.join(METRICS_FILE))?;
        // Header written explicitly so an empty run still has one.
        metrics
            .write_record(METRICS_COLUMNS)
            .map_err(|e| csv_error(&dir.join(METRICS_FILE), e))?;
        let mut snapshots = csv_writer(&dir.join(SNAPSHOTS_FILE))?;
        snapshots
            .write_record(snapshot_header())
            .map_err(|e| csv_error(&dir.join(SNAPSHOTS_FILE), e))?;
        Ok(RunTelemetry {
            dir: dir.to_path_buf(),
            trials: BufWriter::new(trials),
            metrics,
            snapshots,
            accumulator: MetricsAccumulator::new(window),
            taker: SnapshotTaker::new(probes, every_k),
            rows: Vec::new(),
        })
    }

    fn write_row(&mut self, row: MetricsRow) -> Result<()> {
        let path = self.dir.join(METRICS_FILE);
        self.metrics
            .serialize(MetricsCsvRow::from(&row))
            .map_err(|e| csv_error(&path, e))?;
        self.rows.push(row);
        Ok(())
    }

    /// Closes any partial window against the final model, flushes all
    /// writers and returns every metrics row.
    pub fn finish(mut self, params: &ModelParams, stats: &StrategyStats) -> Result<Vec<MetricsRow>> {
        if self.accumulator.has_pending() {
            let row = self.accumulator.close(Some(WindowProbe::sample(params, stats)));
            self.write_row(row)?;
        }
        self.flush()?;
        Ok(self.rows)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.trials
            .flush()
            .map_err(|e| Error::io(self.dir.join(TRIALS_FILE), e))?;
        self.metrics
            .flush()
            .map_err(|e| Error::io(self.dir.join(METRICS_FILE), e))?;
        self.snapshots
            .flush()
            .map_err(|e| Error::io(self.dir.join(SNAPSHOTS_FILE), e))
    }
}

impl TelemetrySink for RunTelemetry {
    fn on_trial(&mut self, event: &TrialEvent<'_>) -> Result<()> {
        let record = event.record;
        serde_json::to_writer(&mut self.trials, record)?;
        self.trials
            .write_all(b"\n")
            .map_err(|e| Error::io(self.dir.join(TRIALS_FILE), e))?;

        if let Some(snap) = self
            .taker
            .observe(record.step, &record.problem(), event.distribution)
        {
            let mut row = vec![
                snap.step.to_string(),
                snap.problem.to_string(),
                snap.occurrence.to_string(),
            ];
            row.extend(snap.distribution.probs().iter().map(f64::to_string));
            let path = self.dir.join(SNAPSHOTS_FILE);
            self.snapshots
                .write_record(&row)
                .map_err(|e| csv_error(&path, e))?;
        }

        if self.accumulator.push(record) {
            let probe = WindowProbe::sample(event.params, event.stats);
            let row = self.accumulator.close(Some(probe));
            self.write_row(row)?;
        }
        Ok(())
    }
}

const METRICS_COLUMNS: [&str; 13] = [
    "window",
    "step_end",
    "add_trials",
    "add_accuracy",
    "finger_usage",
    "add_confidence",
    "count_trials",
    "count_accuracy",
    "oracle_rate",
    "retrieval_add_accuracy",
    "retrieval_count_accuracy",
    "w_retrieval_add",
    "w_finger",
];

/// Serialization shape of [`MetricsRow`] without a header (written once).
#[derive(Serialize)]
struct MetricsCsvRow<'a>(
    u64,
    u64,
    u64,
    &'a Option<f64>,
    &'a Option<f64>,
    &'a Option<f64>,
    u64,
    &'a Option<f64>,
    &'a Option<f64>,
    &'a Option<f64>,
    &'a Option<f64>,
    &'a Option<f64>,
    &'a Option<f64>,
);

impl<'a> From<&'a MetricsRow> for MetricsCsvRow<'a> {
    fn from(r: &'a MetricsRow) -> Self {
        MetricsCsvRow(
            r.window,
            r.step_end,
            r.add_trials,
            &r.add_accuracy,
            &r.finger_usage,
            &r.add_confidence,
            r.count_trials,
            &r.count_accuracy,
            &r.oracle_rate,
            &r.retrieval_add_accuracy,
            &r.retrieval_count_accuracy,
            &r.w_retrieval_add,
            &r.w_finger,
        )
    }
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| Error::io(path, e))?;
            Ok(serde_json::from_str(&line)?)
        })
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

pub fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let bad = || Error::Input(format!("malformed snapshot row in {}", path.display()));
        if record.len() != 3 + NUM_TOKENS {
            return Err(bad());
        }
        let mut probs = [0.0; NUM_TOKENS];
        for (i, p) in probs.iter_mut().enumerate() {
            *p = record[3 + i].parse().map_err(|_| bad())?;
        }
        out.push(Snapshot {
            step: record[0].parse().map_err(|_| bad())?,
            problem: record[1].parse()?,
            occurrence: record[2].parse().map_err(|_| bad())?,
            distribution: AnswerDistribution::new(probs)?,
        });
    }
    Ok(out)
}

/// First index where the series reaches `level` and stays there for three
/// consecutive entries. Missing entries count as below the level.
pub fn change_point(series: &[Option<f64>], level: f64) -> Option<usize> {
    const PERSISTENCE: usize = 3;
    series.windows(PERSISTENCE).position(|w| {
        w.iter()
            .all(|v| v.is_some_and(|x| x >= level))
    })
}

/// Index and value of the series maximum (first on ties); `None` if empty.
pub fn peak(series: &[Option<f64>]) -> Option<(usize, f64)> {
    series
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|x| (i, x)))
        .fold(None, |best, (i, x)| match best {
            Some((_, b)) if b >= x => best,
            _ => Some((i, x)),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Number;

    fn record(step: u64, op: Operator, strategy: StrategyKind, correct: bool) -> TrialRecord {
        let n = |v| Number::new(v).unwrap();
        TrialRecord {
            step,
            a: n(2),
            b: n(3),
            op,
            strategy,
            answer: n(5),
            truth: n(if correct { 5 } else { 4 }),
            correct,
            confidence: 0.5,
            target: n(5),
            loss: 1.0,
        }
    }

    #[test]
    fn windows_tile_the_log() {
        let log: Vec<_> = (0..1000)
            .map(|s| record(s, Operator::Add, StrategyKind::RetrievalAdd, true))
            .collect();
        let rows = metrics_from_log(&log, 500);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].step_end, 500);
        assert_eq!(rows[1].step_end, 1000);
        assert_eq!(rows[1].add_accuracy, Some(1.0));
        assert_eq!(rows[0].finger_usage, Some(0.0));

        let partial = metrics_from_log(&log[..750], 500);
        assert_eq!(partial.len(), 2);
        assert_eq!(partial[1].add_trials, 250);
    }

    #[test]
    fn empty_addition_windows_stay_blank() {
        let log: Vec<_> = (0..10)
            .map(|s| record(s, Operator::CountUp, StrategyKind::OracleCount, true))
            .collect();
        let rows = metrics_from_log(&log, 10);
        assert_eq!(rows[0].add_accuracy, None);
        assert_eq!(rows[0].finger_usage, None);
        assert_eq!(rows[0].oracle_rate, Some(1.0));
        assert_eq!(rows[0].count_accuracy, Some(1.0));
    }

    #[test]
    fn usage_is_finger_share_of_additions() {
        let mut log = Vec::new();
        for s in 0..8 {
            let strategy = if s < 2 {
                StrategyKind::FingerCount
            } else {
                StrategyKind::RetrievalAdd
            };
            log.push(record(s, Operator::Add, strategy, s % 2 == 0));
        }
        log.push(record(8, Operator::CountUp, StrategyKind::RetrievalCount, true));
        log.push(record(9, Operator::CountUp, StrategyKind::OracleCount, true));
        let row = &metrics_from_log(&log, 10)[0];
        assert_eq!(row.finger_usage, Some(0.25));
        assert_eq!(row.add_accuracy, Some(0.5));
        assert_eq!(row.oracle_rate, Some(0.5));
    }

    #[test]
    fn snapshots_keep_every_kth_occurrence() {
        let probe = Problem::add(3, 4).unwrap();
        let other = Problem::add(2, 4).unwrap();
        let dist = AnswerDistribution::uniform();

        let mut taker = SnapshotTaker::new(&[probe], 10);
        let mut kept = Vec::new();
        for step in 0..95 {
            assert!(taker.observe(1000 + step, &other, &dist).is_none());
            if let Some(s) = taker.observe(step, &probe, &dist) {
                kept.push(s.occurrence);
            }
        }
        assert_eq!(kept, vec![10, 20, 30, 40, 50, 60, 70, 80, 90]);

        let mut every = SnapshotTaker::new(&[probe], 1);
        assert_eq!(
            (0..5)
                .filter_map(|s| every.observe(s, &probe, &dist))
                .count(),
            5
        );
    }

    #[test]
    fn change_point_needs_persistence() {
        let s = |v: &[f64]| v.iter().map(|x| Some(*x)).collect::<Vec<_>>();
        assert_eq!(change_point(&s(&[0.0, 0.0, 0.6, 0.7, 0.8, 0.9]), 0.5), Some(2));
        assert_eq!(change_point(&s(&[0.0; 8]), 0.5), None);
        assert_eq!(change_point(&s(&[0.0, 0.5, 0.0, 0.0, 0.0]), 0.5), None);
        assert_eq!(change_point(&[None, Some(0.9), None, Some(0.9)], 0.5), None);
        assert_eq!(change_point(&s(&[0.5, 0.5, 0.5]), 0.5), Some(0));
    }

    #[test]
    fn peak_takes_first_maximum() {
        assert_eq!(peak(&[None, Some(0.2), Some(0.9), Some(0.9)]), Some((2, 0.9)));
        assert_eq!(peak(&[None, None]), None);
    }
}
