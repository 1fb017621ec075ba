//! The trial loop and run state.
//!
//! One trial: sample a problem, solve it through the strategy layer, train
//! once toward the trial's target, update the strategy weights, report.
//! Count-up trials always train toward the true successor; addition trials
//! train toward whatever answer the chosen strategy produced.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::curriculum::CurriculumSchedule;
use crate::error::{Error, Result};
use crate::neural::{backward, cross_entropy, forward, sgd_step, ModelParams};
use crate::problem::{Number, Operator, Problem};
use crate::strategies::{
    solve_addition, solve_counting, AdditionPolicy, StrategyKind, StrategyStats, TrialOutcome,
};
use crate::telemetry::{TelemetrySink, TrialEvent};

/// Stream of the run RNG; parameters are initialized from stream 0.
const TRIAL_STREAM: u64 = 1;

/// Everything that evolves during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub params: ModelParams,
    pub stats: StrategyStats,
    pub rng: ChaCha8Rng,
    pub step: u64,
    pub seed: u64,
}

impl RunState {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let params = ModelParams::init(config.seed, config.embed_dim, config.hidden_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(TRIAL_STREAM);
        Ok(RunState {
            params,
            stats: config.initial_stats()?,
            rng,
            step: 0,
            seed: config.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path)
    }
}

/// Provenance of one trial; one line of `trials.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub step: u64,
    pub a: Number,
    pub b: Number,
    pub op: Operator,
    pub strategy: StrategyKind,
    pub answer: Number,
    pub truth: Number,
    pub correct: bool,
    pub confidence: f64,
    pub target: Number,
    /// Cross-entropy toward `target` before this trial's update.
    pub loss: f64,
}

impl TrialRecord {
    pub fn problem(&self) -> Problem {
        Problem {
            a: self.a,
            op: self.op,
            b: self.b,
        }
    }

    pub fn is_addition(&self) -> bool {
        self.op == Operator::Add
    }
}

/// Fraction of items answered correctly by plain argmax retrieval, with no
/// fallback: all 25 sums for addition, all 9 successors for counting.
pub fn evaluate_model(params: &ModelParams, task: Operator) -> f64 {
    let items = match task {
        Operator::Add => Problem::all_additions(),
        Operator::CountUp => Problem::all_counts(),
    };
    let correct = items
        .iter()
        .filter(|p| forward(params, p).0.argmax() == p.true_answer().expect("valid item"))
        .count();
    correct as f64 / items.len() as f64
}

/// Validated run settings for the trial loop.
#[derive(Debug, Clone)]
pub struct Trainer {
    schedule: CurriculumSchedule,
    policy: AdditionPolicy,
    theta_count: f64,
    learning_rate: f64,
    total_steps: u64,
}

impl Trainer {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            schedule: config.schedule(),
            policy: config.addition_policy(),
            theta_count: config.theta_count,
            learning_rate: config.learning_rate,
            total_steps: config.total_steps,
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// Runs one trial and reports it to `sink`.
    pub fn run_trial(
        &self,
        state: &mut RunState,
        sink: &mut dyn TelemetrySink,
    ) -> Result<TrialRecord> {
        if state.step >= self.total_steps {
            return Err(Error::Input(format!(
                "run already finished ({} steps)",
                self.total_steps
            )));
        }
        let step = state.step;
        let problem = self.schedule.sample_trial(step, &mut state.rng);
        let truth = problem.true_answer()?;

        let outcome: TrialOutcome = match problem.op {
            Operator::Add => solve_addition(
                &state.params,
                &state.stats,
                &problem,
                self.policy,
                &mut state.rng,
            )?,
            Operator::CountUp => solve_counting(&state.params, &problem, self.theta_count)?,
        };
        let target = match problem.op {
            Operator::CountUp => truth,
            Operator::Add => outcome.answer,
        };

        let diverged = |detail: String| Error::Training {
            step,
            problem,
            detail,
        };
        let loss = cross_entropy(&outcome.distribution, target);
        if !loss.is_finite() || outcome.trace.logits.iter().any(|l| !l.is_finite()) {
            return Err(diverged(format!("non-finite loss {loss}")));
        }
        let grads = backward(&state.params, &outcome.trace, target);
        sgd_step(&mut state.params, &grads, self.learning_rate)
            .map_err(|e| diverged(e.to_string()))?;

        if outcome.strategy != StrategyKind::OracleCount {
            state.stats.update(outcome.strategy, outcome.correct);
        }

        let record = TrialRecord {
            step,
            a: problem.a,
            b: problem.b,
            op: problem.op,
            strategy: outcome.strategy,
            answer: outcome.answer,
            truth,
            correct: outcome.correct,
            confidence: outcome.confidence,
            target,
            loss,
        };
        sink.on_trial(&TrialEvent {
            record: &record,
            distribution: &outcome.distribution,
            params: &state.params,
            stats: &state.stats,
        })?;
        state.step += 1;
        Ok(record)
    }

    /// Runs trials until the configured total.
    pub fn run_to_end(&self, state: &mut RunState, sink: &mut dyn TelemetrySink) -> Result<()> {
        while state.step < self.total_steps {
            self.run_trial(state, sink)?;
        }
        Ok(())
    }
}
