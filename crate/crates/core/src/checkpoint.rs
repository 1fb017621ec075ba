//! Checkpoint files: one JSON document holding the model, the strategy
//! weights, the RNG position and the step counter. Floats are written with
//! 17 significant digits so a load reproduces the saved state bit for bit.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Matrix, ModelParams};
use crate::strategies::StrategyStats;
use crate::trainer::RunState;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    schema_version: u32,
    d: usize,
    #[serde(rename = "H")]
    h: usize,
    seed: u64,
    step: u64,
    num_embed: Vec<Vec<f64>>,
    op_embed: Vec<Vec<f64>>,
    gate_w: Vec<Vec<f64>>,
    gate_b: Vec<f64>,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    stats: StrategyStats,
    rng: ChaCha8Rng,
}

/// Writes every float in scientific notation with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

pub fn to_json(state: &RunState) -> String {
    let p = &state.params;
    let doc = CheckpointDoc {
        schema_version: SCHEMA_VERSION,
        d: p.embed_dim(),
        h: p.hidden_dim(),
        seed: state.seed,
        step: state.step,
        num_embed: p.num_embed.to_rows(),
        op_embed: p.op_embed.to_rows(),
        gate_w: p.gate_w.to_rows(),
        gate_b: p.gate_b.clone(),
        w1: p.w1.to_rows(),
        b1: p.b1.clone(),
        w2: p.w2.to_rows(),
        b2: p.b2.clone(),
        stats: state.stats.clone(),
        rng: state.rng.clone(),
    };
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    doc.serialize(&mut ser).expect("checkpoint serializes");
    String::from_utf8(out).expect("JSON is UTF-8")
}

pub fn from_json(text: &str, origin: &Path) -> Result<RunState> {
    let malformed = |detail: String| Error::Checkpoint {
        path: origin.to_path_buf(),
        detail,
    };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| malformed("missing schema_version".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(Error::SchemaVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: SCHEMA_VERSION,
        });
    }
    let doc: CheckpointDoc =
        serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;

    let params = ModelParams {
        num_embed: Matrix::from_rows(&doc.num_embed)?,
        op_embed: Matrix::from_rows(&doc.op_embed)?,
        gate_w: Matrix::from_rows(&doc.gate_w)?,
        gate_b: doc.gate_b,
        w1: Matrix::from_rows(&doc.w1)?,
        b1: doc.b1,
        w2: Matrix::from_rows(&doc.w2)?,
        b2: doc.b2,
    };
    params
        .validate_shapes()
        .map_err(|e| malformed(e.to_string()))?;
    if params.embed_dim() != doc.d || params.hidden_dim() != doc.h {
        return Err(malformed(format!(
            "arrays do not match d={} H={}",
            doc.d, doc.h
        )));
    }
    if !params.is_finite() {
        return Err(malformed("non-finite parameter".into()));
    }
    Ok(RunState {
        params,
        stats: doc.stats,
        rng: doc.rng,
        step: doc.step,
        seed: doc.seed,
    })
}

pub fn save(state: &RunState, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(state)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<RunState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text, path)
}
