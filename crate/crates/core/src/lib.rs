//! Small Math Model: a neural recasting of strategy choice in early
//! arithmetic. A tiny gated network learns to count and to add, falling back
//! on finger-counting (built from its own counting) or on being told when its
//! recall is not confident enough.

pub mod chart;
pub mod checkpoint;
pub mod config;
pub mod curriculum;
pub mod error;
pub mod experiment;
pub mod figures;
pub mod neural;
pub mod problem;
pub mod strategies;
pub mod sweep;
pub mod telemetry;
pub mod trainer;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use neural::{AnswerDistribution, ModelParams};
pub use problem::{Number, Operator, Problem};
pub use trainer::{RunState, Trainer, TrialRecord};
