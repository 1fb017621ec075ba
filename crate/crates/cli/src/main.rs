//! `smm`: train, sweep, plot, probe, gradient-check and export embeddings.
//!
//! Exit status: 0 on success, 1 on a runtime failure, 2 on a usage or
//! configuration error.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use smm_core::checkpoint;
use smm_core::experiment::{run_experiment, RunSummary};
use smm_core::figures::{render_figures, Figure};
use smm_core::neural::{entropy_confidence, forward, gradient_check_draws};
use smm_core::sweep::{run_sweep, SweepSpec};
use smm_core::{Problem, RunConfig};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "smm", version, about = "Small Math Model simulator")]
struct Cli {
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Train {
        /// JSON run configuration; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Artifact directory, overriding the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a grid of addition onsets by seeds.
    Sweep {
        /// JSON sweep specification.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Sweep root, overriding `base.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed mixed into every run's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render figures from a run or sweep directory.
    Plot {
        dir: PathBuf,
        #[arg(default_value = "all", value_parser = ["fig1a", "fig1b", "fig2", "all"])]
        figure: String,
    },
    /// Print a checkpoint's answer distribution for one problem ("3+4", "3>4").
    Probe { checkpoint: PathBuf, problem: String },
    /// Compare analytic gradients with finite differences on random draws.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Write number embeddings and their cosine similarities as CSV.
    ExportEmbeddings { checkpoint: PathBuf, out: PathBuf },
}

/// A problem with the invocation rather than with the run.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Signals a failed check whose report was already printed.
#[derive(Debug)]
struct CheckFailed;

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("check failed")
    }
}

impl std::error::Error for CheckFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<smm_core::Error>() {
        Some(smm_core::Error::Config { .. }) => 2,
        _ => 1,
    }
}

fn read_text(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read {what} {}: {e}", path.display())).into())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn print_summary(s: &RunSummary) {
    println!("final addition accuracy  {:.3}", s.final_add_accuracy);
    println!("final counting accuracy  {:.3}", s.final_count_accuracy);
    println!(
        "peak finger usage        {} (window {})",
        fmt_opt(s.peak_usage),
        s.peak_usage_window.map_or_else(|| "-".into(), |w| w.to_string())
    );
    println!("final finger usage       {}", fmt_opt(s.final_usage));
}

fn train(config: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> Result<()> {
    let mut config = match config {
        Some(path) => RunConfig::from_json(&read_text(&path, "config")?)?,
        None => RunConfig::default(),
    };
    if let Some(out) = out {
        config.output_dir = out;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let artifacts = run_experiment(&config)
        .with_context(|| format!("run failed; see {}", config.output_dir.display()))?;
    if !quiet {
        println!("artifacts in {}", artifacts.dir.display());
        print_summary(&artifacts.summary);
    }
    Ok(())
}

fn sweep(spec: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> Result<()> {
    let mut spec = match spec {
        Some(path) => SweepSpec::from_json(&read_text(&path, "sweep spec")?)?,
        None => SweepSpec::default(),
    };
    if let Some(out) = out {
        spec.base.output_dir = out;
    }
    if let Some(seed) = seed {
        spec.base.seed = seed;
    }
    let report = run_sweep(&spec)?;
    if !quiet {
        println!(
            "{} runs in {}; aggregate {}",
            report.runs.len(),
            report.root.display(),
            report.aggregate.display()
        );
        for path in &report.figures {
            println!("wrote {}", path.display());
        }
    }
    let failures: Vec<_> = report.failures().collect();
    if failures.is_empty() {
        return Ok(());
    }
    for run in &failures {
        if let Err(e) = &run.outcome {
            eprintln!("failed: {}: {e}", run.dir.display());
        }
    }
    anyhow::bail!("{} of {} runs failed", failures.len(), report.runs.len())
}

fn plot(dir: &Path, figure: &str, quiet: bool) -> Result<()> {
    let figure: Figure = figure.parse().map_err(|e: smm_core::Error| UsageError(e.to_string()))?;
    if !dir.is_dir() {
        anyhow::bail!("no such directory: {}", dir.display());
    }
    let written = render_figures(dir, figure)?;
    if !quiet {
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn probe(checkpoint_path: &Path, problem: &str) -> Result<()> {
    let problem: Problem = problem
        .parse()
        .map_err(|e: smm_core::Error| UsageError(e.to_string()))?;
    let state = checkpoint::load(checkpoint_path)?;
    let (dist, _) = forward(&state.params, &problem);
    let confidence = entropy_confidence(&dist);
    println!("problem {problem}");
    println!("answer  probability");
    for (i, p) in dist.probs().iter().enumerate() {
        println!("{:>6}  {p:.6}", i + 1);
    }
    println!("argmax {}  confidence {confidence:.6}", dist.argmax());
    let line = serde_json::json!({
        "problem": problem.to_string(),
        "distribution": dist.probs(),
        "argmax": dist.argmax(),
        "confidence": confidence,
    });
    println!("{line}");
    Ok(())
}

fn gradcheck(seed: u64, trials: usize, eps: f64) -> Result<()> {
    let defaults = RunConfig::default();
    let summary = gradient_check_draws(seed, trials, eps, defaults.embed_dim, defaults.hidden_dim)
        .map_err(|e| match e {
            smm_core::Error::Input(msg) => anyhow::Error::new(UsageError(msg)),
            other => other.into(),
        })?;
    println!(
        "{} draws, {} entries, max relative error {:.3e} (group {}, draw {})",
        summary.trials,
        summary.entries_checked,
        summary.max_relative_error,
        summary.worst_group,
        summary.worst_trial
    );
    println!("{}", serde_json::to_string(&summary)?);
    if summary.max_relative_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        eprintln!("max relative error is not below {GRADCHECK_TOLERANCE:e}");
        Err(CheckFailed.into())
    }
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = norm(u) * norm(v);
    if denom > 0.0 {
        dot / denom
    } else {
        0.0
    }
}

fn export_embeddings(checkpoint_path: &Path, out: &Path, quiet: bool) -> Result<()> {
    let state = checkpoint::load(checkpoint_path)?;
    let embed = &state.params.num_embed;
    let rows: Vec<&[f64]> = (0..embed.rows()).map(|r| embed.row(r)).collect();

    let mut writer = csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out)
        .with_context(|| format!("cannot create {}", out.display()))?;
    let mut header = vec!["token".to_string()];
    header.extend((1..=embed.cols()).map(|c| format!("dim{c}")));
    writer.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        let mut record = vec![(i + 1).to_string()];
        record.extend(row.iter().map(|v| format!("{v:e}")));
        writer.write_record(&record)?;
    }
    let mut header = vec!["token".to_string()];
    header.extend((1..=rows.len()).map(|c| format!("cos{c}")));
    writer.write_record(&header)?;
    for (i, u) in rows.iter().enumerate() {
        let mut record = vec![(i + 1).to_string()];
        record.extend(rows.iter().map(|v| format!("{:e}", cosine(u, v))));
        writer.write_record(&record)?;
    }
    writer.flush().with_context(|| format!("writing {}", out.display()))?;
    if !quiet {
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Train { config, out, seed } => train(config, out, seed, quiet),
        Command::Sweep { spec, out, seed } => sweep(spec, out, seed, quiet),
        Command::Plot { dir, figure } => plot(&dir, &figure, quiet),
        Command::Probe { checkpoint, problem } => probe(&checkpoint, &problem),
        Command::Gradcheck { seed, trials, eps } => gradcheck(seed, trials, eps),
        Command::ExportEmbeddings { checkpoint, out } => export_embeddings(&checkpoint, &out, quiet),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if err.downcast_ref::<CheckFailed>().is_none() {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
