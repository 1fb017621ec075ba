//! Run configuration: a flat JSON document with strict key checking.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumSchedule;
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::strategies::{AdditionPolicy, SelectionRule, StrategyStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub total_steps: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,

    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
    pub ramp_steps: u64,
    pub count_mu1: f64,
    pub count_ramp_steps: u64,
    pub add_onset: u64,
    pub p_add: f64,

    pub theta_add: f64,
    pub theta_count: f64,
    pub beta: f64,
    pub w_floor: f64,
    pub w_init_retrieval_add: f64,
    pub w_init_finger: f64,
    pub w_init_retrieval_count: f64,
    pub selection_rule: SelectionRule,

    /// Problems whose retrieval distribution is snapshotted, as "a+b" / "a>b".
    pub probes: Vec<String>,
    pub snapshot_every_k: u64,
    pub metrics_window: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schedule = CurriculumSchedule::default();
        RunConfig {
            seed: 1,
            total_steps: 50_000,
            embed_dim: 16,
            hidden_dim: 32,
            learning_rate: 0.03,
            mu0: schedule.mu0,
            mu1: schedule.mu1,
            sigma: schedule.sigma,
            ramp_steps: schedule.ramp_steps,
            count_mu1: schedule.count_mu1,
            count_ramp_steps: schedule.count_ramp_steps,
            add_onset: schedule.add_onset,
            p_add: schedule.p_add,
            theta_add: 0.85,
            theta_count: 0.85,
            beta: 0.05,
            w_floor: 0.05,
            w_init_retrieval_add: 0.5,
            w_init_finger: 0.5,
            w_init_retrieval_count: 0.5,
            selection_rule: SelectionRule::default(),
            probes: vec!["3+4".to_string()],
            snapshot_every_k: 10,
            metrics_window: 500,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    /// Reads and validates a configuration file. Missing keys take defaults;
    /// unknown keys are rejected.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(json_config_error)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps < 1 {
            return Err(Error::config("total_steps", "must be at least 1"));
        }
        if self.embed_dim < 2 {
            return Err(Error::config("embed_dim", "must be at least 2"));
        }
        if self.hidden_dim < 2 {
            return Err(Error::config("hidden_dim", "must be at least 2"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        self.schedule().validate()?;
        for (key, theta) in [("theta_add", self.theta_add), ("theta_count", self.theta_count)] {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::config(key, "must lie in [0, 1]"));
            }
        }
        self.initial_stats()?;
        self.probe_problems()?;
        if self.snapshot_every_k < 1 {
            return Err(Error::config("snapshot_every_k", "must be at least 1"));
        }
        if self.metrics_window < 1 {
            return Err(Error::config("metrics_window", "must be at least 1"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> CurriculumSchedule {
        CurriculumSchedule {
            mu0: self.mu0,
            mu1: self.mu1,
            sigma: self.sigma,
            ramp_steps: self.ramp_steps,
            count_mu1: self.count_mu1,
            count_ramp_steps: self.count_ramp_steps,
            add_onset: self.add_onset,
            p_add: self.p_add,
        }
    }

    pub fn initial_stats(&self) -> Result<StrategyStats> {
        StrategyStats::new(
            self.w_init_retrieval_add,
            self.w_init_finger,
            self.w_init_retrieval_count,
            self.beta,
            self.w_floor,
        )
    }

    pub fn addition_policy(&self) -> AdditionPolicy {
        AdditionPolicy {
            theta_add: self.theta_add,
            rule: self.selection_rule,
        }
    }

    pub fn probe_problems(&self) -> Result<Vec<Problem>> {
        self.probes
            .iter()
            .map(|s| {
                let p: Problem = s
                    .parse()
                    .map_err(|e: Error| Error::config("probes", e.to_string()))?;
                p.true_answer()
                    .map_err(|e| Error::config("probes", e.to_string()))?;
                Ok(p)
            })
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Maps a parse failure to a configuration error, naming the offending key
/// when the parser reports one.
pub(crate) fn json_config_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    match unknown_field_name(&msg) {
        Some(key) => Error::config(&key, "unknown key"),
        None => Error::config("<document>", msg),
    }
}

fn unknown_field_name(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(err: Error) -> String {
        match err {
            Error::Config { key, .. } => key,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json_pretty()).unwrap(), c);
        assert_eq!(RunConfig::from_json("{}").unwrap(), c);
        assert_eq!(c.probe_problems().unwrap(), vec![Problem::add(3, 4).unwrap()]);
    }

    #[test]
    fn invalid_values_name_their_key() {
        assert_eq!(key_of(RunConfig::from_json(r#"{"sigma": 0}"#).unwrap_err()), "sigma");
        assert_eq!(key_of(RunConfig::from_json(r#"{"total_steps": 0}"#).unwrap_err()), "total_steps");
        assert_eq!(key_of(RunConfig::from_json(r#"{"beta": 1.5}"#).unwrap_err()), "beta");
        assert_eq!(key_of(RunConfig::from_json(r#"{"probes": ["4>?"]}"#).unwrap_err()), "probes");
        assert_eq!(key_of(RunConfig::from_json(r#"{"metrics_window": 0}"#).unwrap_err()), "metrics_window");
        assert_eq!(key_of(RunConfig::from_json(r#"{"theta_add": 2}"#).unwrap_err()), "theta_add");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"sigmaa": 1.0}"#).unwrap_err();
        assert_eq!(key_of(err), "sigmaa");
    }

    #[test]
    fn selection_rule_parses() {
        let c = RunConfig::from_json(r#"{"selection_rule": "proportional"}"#).unwrap();
        assert_eq!(c.selection_rule, SelectionRule::Proportional);
        assert!(RunConfig::from_json(r#"{"selection_rule": "coin"}"#).is_err());
    }
}
