//! Solution generation: retrieval gated by entropy confidence, finger-counting
//! built from the model's own count-up answers, the parental oracle for
//! counting, and success weights that drive stochastic strategy selection.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{entropy_confidence, forward, AnswerDistribution, ForwardTrace, ModelParams};
use crate::problem::{Number, Operator, Problem, MAX_COUNT_FROM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    RetrievalAdd,
    FingerCount,
    RetrievalCount,
    OracleCount,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::RetrievalAdd => "retrieval_add",
            StrategyKind::FingerCount => "finger_count",
            StrategyKind::RetrievalCount => "retrieval_count",
            StrategyKind::OracleCount => "oracle_count",
        }
    }

    pub fn task(self) -> Operator {
        match self {
            StrategyKind::RetrievalAdd | StrategyKind::FingerCount => Operator::Add,
            StrategyKind::RetrievalCount | StrategyKind::OracleCount => Operator::CountUp,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the success weights turn into an addition strategy choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// `P(retrieval) = w_r / (w_r + w_f)`.
    Proportional,
    /// `P(retrieval) = w_r·c / (w_r·c + w_f·(1 − c))` where `c` is the
    /// retrieval confidence on the current problem. Reduces to the
    /// proportional rule at `c = 0.5`.
    #[default]
    ConfidenceWeighted,
}

/// Running success weights, one per learnable strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub w_retrieval_add: f64,
    pub w_finger: f64,
    pub w_retrieval_count: f64,
    pub beta: f64,
    pub w_floor: f64,
}

impl Default for StrategyStats {
    fn default() -> Self {
        StrategyStats::new(0.5, 0.5, 0.5, 0.05, 0.05).expect("valid defaults")
    }
}

impl StrategyStats {
    pub fn new(
        w_retrieval_add: f64,
        w_finger: f64,
        w_retrieval_count: f64,
        beta: f64,
        w_floor: f64,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::config("beta", "must lie strictly between 0 and 1"));
        }
        if !(w_floor > 0.0 && w_floor < 0.5) {
            return Err(Error::config("w_floor", "must lie strictly between 0 and 0.5"));
        }
        for (key, w) in [
            ("w_init_retrieval_add", w_retrieval_add),
            ("w_init_finger", w_finger),
            ("w_init_retrieval_count", w_retrieval_count),
        ] {
            if !(w_floor..=1.0).contains(&w) {
                return Err(Error::config(key, "must lie in [w_floor, 1]"));
            }
        }
        Ok(StrategyStats {
            w_retrieval_add,
            w_finger,
            w_retrieval_count,
            beta,
            w_floor,
        })
    }

    fn weight_mut(&mut self, strategy: StrategyKind) -> Option<&mut f64> {
        match strategy {
            StrategyKind::RetrievalAdd => Some(&mut self.w_retrieval_add),
            StrategyKind::FingerCount => Some(&mut self.w_finger),
            StrategyKind::RetrievalCount => Some(&mut self.w_retrieval_count),
            StrategyKind::OracleCount => None,
        }
    }

    /// Moves the used strategy's weight toward 1 on success and toward 0 on
    /// failure, clamped to `[w_floor, 1]`. Oracle trials update nothing.
    pub fn update(&mut self, strategy: StrategyKind, correct: bool) {
        let (beta, floor) = (self.beta, self.w_floor);
        if let Some(w) = self.weight_mut(strategy) {
            let reward = if correct { 1.0 } else { 0.0 };
            *w = ((1.0 - beta) * *w + beta * reward).clamp(floor, 1.0);
        }
    }

    /// Probability of choosing retrieval for an addition trial.
    pub fn retrieval_probability(&self, rule: SelectionRule, confidence: f64) -> f64 {
        let (r, f) = match rule {
            SelectionRule::Proportional => (self.w_retrieval_add, self.w_finger),
            SelectionRule::ConfidenceWeighted => {
                let c = confidence.clamp(0.0, 1.0);
                (self.w_retrieval_add * c, self.w_finger * (1.0 - c))
            }
        };
        if r + f > 0.0 {
            r / (r + f)
        } else {
            0.0
        }
    }
}

/// Functional form of [`StrategyStats::update`].
pub fn update_stats(stats: &StrategyStats, strategy: StrategyKind, correct: bool) -> StrategyStats {
    let mut next = stats.clone();
    next.update(strategy, correct);
    next
}

/// Stats-only proportional choice between retrieval and finger-counting.
pub fn choose_addition_strategy(stats: &StrategyStats, rng: &mut impl Rng) -> StrategyKind {
    choose_with_probability(stats.retrieval_probability(SelectionRule::Proportional, 0.5), rng)
}

fn choose_with_probability(p_retrieval: f64, rng: &mut impl Rng) -> StrategyKind {
    if rng.random::<f64>() < p_retrieval {
        StrategyKind::RetrievalAdd
    } else {
        StrategyKind::FingerCount
    }
}

/// A direct recall attempt.
#[derive(Debug, Clone)]
pub struct Retrieval {
    pub answer: Number,
    pub confidence: f64,
    pub distribution: AnswerDistribution,
    pub trace: ForwardTrace,
}

pub fn retrieve(params: &ModelParams, problem: &Problem) -> Retrieval {
    let (distribution, trace) = forward(params, problem);
    Retrieval {
        answer: distribution.argmax(),
        confidence: entropy_confidence(&distribution),
        distribution,
        trace,
    }
}

/// Samples the model's answer to "what comes after `current`".
pub fn count_next(params: &ModelParams, current: Number, rng: &mut impl Rng) -> Number {
    let current = current.value().min(MAX_COUNT_FROM);
    let query = Problem::count_from(current).expect("current in 1..=9");
    let (dist, _) = forward(params, &query);
    sample_answer(&dist, rng)
}

/// Draws one answer token from a distribution at temperature 1.
pub fn sample_answer(dist: &AnswerDistribution, rng: &mut impl Rng) -> Number {
    let index = WeightedIndex::new(dist.probs())
        .expect("distribution has positive mass")
        .sample(rng);
    Number::from_index(index).expect("index in vocabulary")
}

/// Counts up `b` steps from `a`, asking `next` for each successor. Returns the
/// final count and the number of steps taken.
pub fn finger_count_with(
    a: Number,
    b: Number,
    mut next: impl FnMut(Number) -> Number,
) -> (Number, u8) {
    let mut current = a;
    for _ in 0..b.value() {
        let query = Number::new(current.value().min(MAX_COUNT_FROM)).expect("in range");
        current = next(query);
    }
    (current, b.value())
}

/// Finger-counting with the model's own (sampled) counting. No oracle help:
/// counting slips propagate into the answer.
pub fn finger_count(params: &ModelParams, a: Number, b: Number, rng: &mut impl Rng) -> (Number, u8) {
    finger_count_with(a, b, |current| count_next(params, current, rng))
}

/// The parent telling the child the next number.
pub fn oracle_count(current: Number) -> Result<Number> {
    if current.value() > MAX_COUNT_FROM {
        return Err(Error::Domain(format!("no number after {current}")));
    }
    Number::new(current.value() + 1)
}

/// What happened on one trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    /// The strategy that produced the answer.
    pub strategy: StrategyKind,
    pub answer: Number,
    /// Retrieval confidence on the trial's problem.
    pub confidence: f64,
    /// Retrieval distribution on the trial's problem, whatever strategy ran.
    pub distribution: AnswerDistribution,
    pub steps: u8,
    pub correct: bool,
    pub trace: ForwardTrace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditionPolicy {
    pub theta_add: f64,
    pub rule: SelectionRule,
}

/// Solves an addition item: stochastic strategy choice from the success
/// weights, then a confidence gate that sends weak retrievals to
/// finger-counting.
pub fn solve_addition(
    params: &ModelParams,
    stats: &StrategyStats,
    problem: &Problem,
    policy: AdditionPolicy,
    rng: &mut impl Rng,
) -> Result<TrialOutcome> {
    if problem.op != Operator::Add {
        return Err(Error::Input(format!("{problem} is not an addition item")));
    }
    let truth = problem.true_answer()?;
    let retrieval = retrieve(params, problem);
    let p_retrieval = stats.retrieval_probability(policy.rule, retrieval.confidence);
    let chosen = choose_with_probability(p_retrieval, rng);

    let (strategy, answer, steps) =
        if chosen == StrategyKind::RetrievalAdd && retrieval.confidence >= policy.theta_add {
            (StrategyKind::RetrievalAdd, retrieval.answer, 0)
        } else {
            let (answer, steps) = finger_count(params, problem.a, problem.b, rng);
            (StrategyKind::FingerCount, answer, steps)
        };
    Ok(TrialOutcome {
        strategy,
        answer,
        confidence: retrieval.confidence,
        distribution: retrieval.distribution,
        steps,
        correct: answer == truth,
        trace: retrieval.trace,
    })
}

/// Solves a count-up item: confident retrieval, otherwise being told.
pub fn solve_counting(
    params: &ModelParams,
    problem: &Problem,
    theta_count: f64,
) -> Result<TrialOutcome> {
    if problem.op != Operator::CountUp {
        return Err(Error::Input(format!("{problem} is not a count-up item")));
    }
    let truth = problem.true_answer()?;
    let retrieval = retrieve(params, problem);
    let (strategy, answer) = if retrieval.confidence >= theta_count {
        (StrategyKind::RetrievalCount, retrieval.answer)
    } else {
        (StrategyKind::OracleCount, oracle_count(problem.b)?)
    };
    Ok(TrialOutcome {
        strategy,
        answer,
        confidence: retrieval.confidence,
        distribution: retrieval.distribution,
        steps: 0,
        correct: answer == truth,
        trace: retrieval.trace,
    })
}
