//! Gaussian difficulty schedule and problem sampling.
//!
//! Addition difficulty is the target sum; counting difficulty is the current
//! number. Both are drawn from a Normal whose mean moves linearly from an
//! easy to a hard value, then rounded and clamped into range.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Problem, MAX_ADDEND, MAX_COUNT_FROM};

const MIN_SUM: i64 = 2;
const MAX_SUM: i64 = 2 * MAX_ADDEND as i64;
const COUNT_MEAN_START: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    /// Mean target sum at step 0.
    pub mu0: f64,
    /// Mean target sum once the ramp completes.
    pub mu1: f64,
    pub sigma: f64,
    /// Steps over which the addition mean moves from `mu0` to `mu1`.
    pub ramp_steps: u64,
    /// Final mean current number for count-up practice (the start is 1).
    pub count_mu1: f64,
    /// Steps over which the counting mean moves from 1 to `count_mu1`.
    pub count_ramp_steps: u64,
    pub add_onset: u64,
    pub p_add: f64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            mu0: 2.0,
            mu1: 8.0,
            sigma: 1.5,
            ramp_steps: 30_000,
            count_mu1: 5.0,
            count_ramp_steps: 5_000,
            add_onset: 10_000,
            p_add: 0.5,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return Err(Error::config("mu0", "must be finite"));
        }
        if !self.mu1.is_finite() || self.mu1 < self.mu0 {
            return Err(Error::config("mu1", "must be finite and at least mu0"));
        }
        if !self.count_mu1.is_finite() || self.count_mu1 < COUNT_MEAN_START {
            return Err(Error::config("count_mu1", "must be finite and at least 1"));
        }
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::config("sigma", "must be positive"));
        }
        if !(self.p_add > 0.0 && self.p_add < 1.0) {
            return Err(Error::config("p_add", "must lie strictly between 0 and 1"));
        }
        Ok(())
    }

    /// Mean target sum at step `t`.
    pub fn difficulty_mean(&self, t: u64) -> f64 {
        self.mu0 + (self.mu1 - self.mu0) * ramp_fraction(t, self.ramp_steps)
    }

    /// Mean current number for count-up practice at step `t`.
    pub fn counting_mean(&self, t: u64) -> f64 {
        COUNT_MEAN_START
            + (self.count_mu1 - COUNT_MEAN_START) * ramp_fraction(t, self.count_ramp_steps)
    }

    fn normal(&self, mean: f64) -> Normal<f64> {
        Normal::new(mean, self.sigma).expect("validated sigma")
    }

    /// Draws an addition item: a target sum from the schedule, then an ordered
    /// operand pair with that sum, uniformly.
    pub fn sample_addition(&self, t: u64, rng: &mut impl Rng) -> Problem {
        let draw = self.normal(self.difficulty_mean(t)).sample(rng);
        let sum = round_clamp(draw, MIN_SUM, MAX_SUM) as u8;
        addition_with_sum(sum, rng)
    }

    /// Draws a count-up item for a current number in 1..=9.
    pub fn sample_counting(&self, t: u64, rng: &mut impl Rng) -> Problem {
        let draw = self.normal(self.counting_mean(t)).sample(rng);
        let current = round_clamp(draw, 1, MAX_COUNT_FROM as i64) as u8;
        Problem::count_from(current).expect("current in 1..=9")
    }

    /// Counting before the addition onset; afterwards addition with
    /// probability `p_add`.
    pub fn sample_trial(&self, t: u64, rng: &mut impl Rng) -> Problem {
        if t >= self.add_onset && rng.random_bool(self.p_add) {
            self.sample_addition(t, rng)
        } else {
            self.sample_counting(t, rng)
        }
    }
}

fn ramp_fraction(t: u64, ramp: u64) -> f64 {
    if ramp == 0 {
        1.0
    } else {
        (t as f64 / ramp as f64).min(1.0)
    }
}

fn round_clamp(x: f64, lo: i64, hi: i64) -> i64 {
    (x.round() as i64).clamp(lo, hi)
}

/// A uniformly chosen ordered pair (a, b) in 1..=5 with `a + b = sum`.
pub fn addition_with_sum(sum: u8, rng: &mut impl Rng) -> Problem {
    let max = MAX_ADDEND;
    let sum = sum.clamp(2, 2 * max);
    let lo = sum.saturating_sub(max).max(1);
    let hi = (sum - 1).min(max);
    let a = rng.random_range(lo..=hi);
    Problem::add(a, sum - a).expect("operands in 1..=5")
}
