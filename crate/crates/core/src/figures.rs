//! Figures rendered from run artifacts alone: accuracy and finger-counting
//! usage over training, and the probe's answer distributions by quarter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::chart::{render_distribution_quarters, render_line_chart, ChartSpec, Series};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::CONFIG_FILE;
use crate::telemetry::{read_metrics, read_snapshots, MetricsRow, METRICS_FILE, SNAPSHOTS_FILE};

pub const FIG1A_FILE: &str = "fig1a_accuracy.svg";
pub const FIG1B_FILE: &str = "fig1b_usage.svg";
pub const FIG2_FILE: &str = "fig2_quarters.svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1a,
    Fig1b,
    Fig2,
    All,
}

impl Figure {
    fn includes(self, other: Figure) -> bool {
        self == Figure::All || self == other
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1a" => Ok(Figure::Fig1a),
            "fig1b" => Ok(Figure::Fig1b),
            "fig2" => Ok(Figure::Fig2),
            "all" => Ok(Figure::All),
            other => Err(Error::Input(format!(
                "unknown figure `{other}` (expected fig1a, fig1b, fig2 or all)"
            ))),
        }
    }
}

fn accuracy_spec(title: &str) -> ChartSpec {
    ChartSpec::rate(title, "training step", "addition accuracy")
}

fn usage_spec(title: &str) -> ChartSpec {
    ChartSpec::rate(title, "training step", "finger-counting usage")
}

fn series_of(rows: &[MetricsRow], pick: impl Fn(&MetricsRow) -> Option<f64>) -> Vec<(f64, f64)> {
    rows.iter()
        .filter_map(|r| pick(r).map(|v| (r.step_end as f64, v)))
        .collect()
}

/// True when `dir` holds a single run's artifacts.
pub fn is_run_dir(dir: &Path) -> bool {
    dir.join(METRICS_FILE).is_file()
}

/// Renders the requested figures for one run directory into that directory.
pub fn render_run_figures(dir: &Path, figure: Figure) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if figure.includes(Figure::Fig1a) || figure.includes(Figure::Fig1b) {
        let rows = read_metrics(&dir.join(METRICS_FILE))?;
        if figure.includes(Figure::Fig1a) {
            let series = vec![
                Series::new("behavioral", series_of(&rows, |r| r.add_accuracy)),
                Series::new("retrieval", series_of(&rows, |r| r.retrieval_add_accuracy)),
            ];
            let path = dir.join(FIG1A_FILE);
            render_line_chart(&accuracy_spec("Addition accuracy"), &series, &path)?;
            written.push(path);
        }
        if figure.includes(Figure::Fig1b) {
            let series = vec![Series::new("finger-counting", series_of(&rows, |r| r.finger_usage))];
            let path = dir.join(FIG1B_FILE);
            render_line_chart(&usage_spec("Finger-counting usage"), &series, &path)?;
            written.push(path);
        }
    }
    if figure.includes(Figure::Fig2) {
        let config = RunConfig::from_file(&dir.join(CONFIG_FILE))?;
        let snapshots = read_snapshots(&dir.join(SNAPSHOTS_FILE))?;
        let first = snapshots
            .first()
            .ok_or_else(|| Error::Input(format!("no snapshots in {}", dir.display())))?
            .problem;
        let probe: Vec<_> = snapshots.into_iter().filter(|s| s.problem == first).collect();
        let path = dir.join(FIG2_FILE);
        render_distribution_quarters(&probe, config.total_steps, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Parses a sweep run directory name `onset{v}_seed{s}`.
pub fn parse_run_dir_name(name: &str) -> Option<(u64, u64)> {
    let rest = name.strip_prefix("onset")?;
    let (onset, seed) = rest.split_once("_seed")?;
    Some((onset.parse().ok()?, seed.parse().ok()?))
}

/// Sweep run directories under `dir` that hold metrics, keyed by (onset, seed).
pub fn discover_runs(dir: &Path) -> Result<BTreeMap<(u64, u64), PathBuf>> {
    let mut runs = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(key) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(parse_run_dir_name)
        else {
            continue;
        };
        if is_run_dir(&path) {
            runs.insert(key, path);
        }
    }
    Ok(runs)
}

/// Mean of each window's value across runs, skipping blank cells.
fn seed_average(
    runs: &[Vec<MetricsRow>],
    pick: impl Fn(&MetricsRow) -> Option<f64>,
) -> Vec<(f64, f64)> {
    let mut by_step: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for rows in runs {
        for r in rows {
            if let Some(v) = pick(r) {
                let slot = by_step.entry(r.step_end).or_insert((0.0, 0));
                slot.0 += v;
                slot.1 += 1;
            }
        }
    }
    by_step
        .into_iter()
        .map(|(step, (sum, n))| (step as f64, sum / n as f64))
        .collect()
}

/// Renders seed-averaged overlays, one line per onset, into the sweep
/// directory. The distribution figure has no sweep form.
pub fn render_sweep_figures(dir: &Path, figure: Figure) -> Result<Vec<PathBuf>> {
    if figure == Figure::Fig2 {
        return Err(Error::Input(
            "fig2 is drawn per run; point plot at a run directory".into(),
        ));
    }
    let runs = discover_runs(dir)?;
    if runs.is_empty() {
        return Err(Error::Input(format!(
            "{} has no {METRICS_FILE} and no run directories (onset<v>_seed<s>)",
            dir.display()
        )));
    }
    let mut by_onset: BTreeMap<u64, Vec<Vec<MetricsRow>>> = BTreeMap::new();
    for ((onset, _), path) in &runs {
        by_onset
            .entry(*onset)
            .or_default()
            .push(read_metrics(&path.join(METRICS_FILE))?);
    }
    let overlay = |pick: fn(&MetricsRow) -> Option<f64>| -> Vec<Series> {
        by_onset
            .iter()
            .map(|(onset, rows)| Series::new(format!("onset {onset}"), seed_average(rows, pick)))
            .filter(|s| s.points.len() >= 2)
            .collect()
    };

    let mut written = Vec::new();
    if figure.includes(Figure::Fig1a) {
        let path = dir.join(FIG1A_FILE);
        let spec = accuracy_spec("Behavioral addition accuracy by onset");
        render_line_chart(&spec, &overlay(|r| r.add_accuracy), &path)?;
        written.push(path);
    }
    if figure.includes(Figure::Fig1b) {
        let path = dir.join(FIG1B_FILE);
        let spec = usage_spec("Finger-counting usage by onset");
        render_line_chart(&spec, &overlay(|r| r.finger_usage), &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Renders figures for a run directory or a sweep directory.
pub fn render_figures(dir: &Path, figure: Figure) -> Result<Vec<PathBuf>> {
    if is_run_dir(dir) {
        render_run_figures(dir, figure)
    } else {
        render_sweep_figures(dir, figure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_names_parse() {
        assert_eq!("fig1a".parse::<Figure>().unwrap(), Figure::Fig1a);
        assert_eq!("all".parse::<Figure>().unwrap(), Figure::All);
        assert!("fig3".parse::<Figure>().is_err());
    }

    #[test]
    fn run_dir_names_parse() {
        assert_eq!(parse_run_dir_name("onset20000_seed3"), Some((20000, 3)));
        assert_eq!(parse_run_dir_name("onset_seed3"), None);
        assert_eq!(parse_run_dir_name("aggregate.csv"), None);
    }

    fn row(step_end: u64, acc: Option<f64>) -> MetricsRow {
        MetricsRow {
            window: step_end / 10 - 1,
            step_end,
            add_trials: 0,
            add_accuracy: acc,
            finger_usage: None,
            add_confidence: None,
            count_trials: 0,
            count_accuracy: None,
            oracle_rate: None,
            retrieval_add_accuracy: None,
            retrieval_count_accuracy: None,
            w_retrieval_add: None,
            w_finger: None,
        }
    }

    #[test]
    fn seed_average_skips_blanks() {
        let runs = vec![
            vec![row(10, Some(0.2)), row(20, Some(0.4))],
            vec![row(10, None), row(20, Some(0.8))],
        ];
        let avg = seed_average(&runs, |r| r.add_accuracy);
        assert_eq!(avg.len(), 2);
        assert!((avg[0].1 - 0.2).abs() < 1e-12);
        assert!((avg[1].1 - 0.6).abs() < 1e-12);
    }
}
