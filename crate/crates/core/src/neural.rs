//! The differentiable answer model: number and operator embeddings, an
//! operator-conditioned multiplicative gate on the operands, one tanh hidden
//! layer and a softmax head over the answers 1..=10.
//!
//! Gradients are derived by hand for this fixed architecture and verified
//! against central finite differences by [`gradient_check`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Number, Problem, NUM_OPERATORS, NUM_TOKENS};

/// Floor applied to a probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Input("ragged matrix rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self · x + bias`.
    fn affine(&self, x: &[f64], bias: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks(self.cols)
            .zip(bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// `selfᵀ · y`.
    fn transpose_mul(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &yr) in self.data.chunks(self.cols).zip(y) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yr;
            }
        }
        out
    }

    /// `self += u ⊗ v`.
    fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        for (row, &ur) in self.data.chunks_mut(self.cols).zip(u) {
            for (w, vc) in row.iter_mut().zip(v) {
                *w += ur * vc;
            }
        }
    }

    fn fill_uniform(&mut self, rng: &mut impl Rng, scale: f64) {
        for w in &mut self.data {
            *w = rng.random_range(-scale..=scale);
        }
    }
}

/// All learnable quantities of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// 10 × d, one row per number token.
    pub num_embed: Matrix,
    /// 2 × d, one row per operator.
    pub op_embed: Matrix,
    /// 2d × d: operator embedding to the two operand gates.
    pub gate_w: Matrix,
    pub gate_b: Vec<f64>,
    /// H × 3d.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// 10 × H.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Gradients share the parameter layout exactly.
pub type Gradients = ModelParams;

impl ModelParams {
    /// All-zero parameters of the given widths.
    pub fn zeros(embed_dim: usize, hidden_dim: usize) -> Self {
        let d = embed_dim;
        let h = hidden_dim;
        ModelParams {
            num_embed: Matrix::zeros(NUM_TOKENS, d),
            op_embed: Matrix::zeros(NUM_OPERATORS, d),
            gate_w: Matrix::zeros(2 * d, d),
            gate_b: vec![0.0; 2 * d],
            w1: Matrix::zeros(h, 3 * d),
            b1: vec![0.0; h],
            w2: Matrix::zeros(NUM_TOKENS, h),
            b2: vec![0.0; NUM_TOKENS],
        }
    }

    /// Seeded initialization: weights uniform in ±sqrt(1/fan_in) where fan_in
    /// is the column count of each matrix; biases zero.
    pub fn init(seed: u64, embed_dim: usize, hidden_dim: usize) -> Result<Self> {
        if embed_dim < 2 {
            return Err(Error::config("embed_dim", "must be at least 2"));
        }
        if hidden_dim < 2 {
            return Err(Error::config("hidden_dim", "must be at least 2"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::zeros(embed_dim, hidden_dim);
        for m in [
            &mut p.num_embed,
            &mut p.op_embed,
            &mut p.gate_w,
            &mut p.w1,
            &mut p.w2,
        ] {
            let scale = (1.0 / m.cols() as f64).sqrt();
            m.fill_uniform(&mut rng, scale);
        }
        Ok(p)
    }

    pub fn embed_dim(&self) -> usize {
        self.num_embed.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    /// Named views of every parameter group, in a fixed order.
    pub fn groups(&self) -> [(&'static str, &[f64]); 8] {
        [
            ("num_embed", self.num_embed.as_slice()),
            ("op_embed", self.op_embed.as_slice()),
            ("gate_w", self.gate_w.as_slice()),
            ("gate_b", &self.gate_b),
            ("w1", self.w1.as_slice()),
            ("b1", &self.b1),
            ("w2", self.w2.as_slice()),
            ("b2", &self.b2),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut [f64]); 8] {
        [
            ("num_embed", self.num_embed.as_mut_slice()),
            ("op_embed", self.op_embed.as_mut_slice()),
            ("gate_w", self.gate_w.as_mut_slice()),
            ("gate_b", &mut self.gate_b),
            ("w1", self.w1.as_mut_slice()),
            ("b1", &mut self.b1),
            ("w2", self.w2.as_mut_slice()),
            ("b2", &mut self.b2),
        ]
    }

    pub fn len(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.groups()
            .iter()
            .all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }

    /// Checks that every group has the shape implied by (d, H).
    pub fn validate_shapes(&self) -> Result<()> {
        let reference = ModelParams::zeros(self.embed_dim(), self.hidden_dim());
        let ok = self.num_embed.shape() == reference.num_embed.shape()
            && self.op_embed.shape() == reference.op_embed.shape()
            && self.gate_w.shape() == reference.gate_w.shape()
            && self.gate_b.len() == reference.gate_b.len()
            && self.w1.shape() == reference.w1.shape()
            && self.b1.len() == reference.b1.len()
            && self.w2.shape() == reference.w2.shape()
            && self.b2.len() == reference.b2.len();
        if ok {
            Ok(())
        } else {
            Err(Error::Input("parameter shapes inconsistent with (d, H)".into()))
        }
    }
}

/// A probability distribution over the answer tokens 1..=10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    probs: [f64; NUM_TOKENS],
}

impl AnswerDistribution {
    /// Wraps raw probabilities; they must be non-negative and sum to 1 (±1e-9).
    pub fn new(probs: [f64; NUM_TOKENS]) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!(
                "not a probability distribution (sum {total})"
            )));
        }
        Ok(AnswerDistribution { probs })
    }

    pub fn uniform() -> Self {
        AnswerDistribution {
            probs: [1.0 / NUM_TOKENS as f64; NUM_TOKENS],
        }
    }

    pub fn one_hot(answer: Number) -> Self {
        let mut probs = [0.0; NUM_TOKENS];
        probs[answer.index()] = 1.0;
        AnswerDistribution { probs }
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        AnswerDistribution {
            probs: softmax(logits),
        }
    }

    pub fn probs(&self) -> &[f64; NUM_TOKENS] {
        &self.probs
    }

    pub fn prob(&self, answer: Number) -> f64 {
        self.probs[answer.index()]
    }

    /// Most probable answer; ties go to the smallest token.
    pub fn argmax(&self) -> Number {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        Number::from_index(best).expect("index below vocabulary size")
    }

    /// Shannon entropy in nats, with 0·ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

fn softmax(logits: &[f64]) -> [f64; NUM_TOKENS] {
    debug_assert_eq!(logits.len(), NUM_TOKENS);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_TOKENS];
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in &mut out {
        *o /= total;
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Every intermediate of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub problem: Problem,
    pub embed_a: Vec<f64>,
    pub embed_b: Vec<f64>,
    pub embed_op: Vec<f64>,
    /// Concatenated gates: the first d entries scale `a`, the next d scale `b`.
    pub gates: Vec<f64>,
    /// `[g_a ⊙ e_a, g_b ⊙ e_b, e_op]`.
    pub input: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: [f64; NUM_TOKENS],
}

impl ForwardTrace {
    pub fn distribution(&self) -> AnswerDistribution {
        AnswerDistribution { probs: self.probs }
    }
}

/// Runs the model on one problem.
pub fn forward(params: &ModelParams, problem: &Problem) -> (AnswerDistribution, ForwardTrace) {
    let d = params.embed_dim();
    let embed_a = params.num_embed.row(problem.a.index()).to_vec();
    let embed_b = params.num_embed.row(problem.b.index()).to_vec();
    let embed_op = params.op_embed.row(problem.op.index()).to_vec();

    let gates: Vec<f64> = params
        .gate_w
        .affine(&embed_op, &params.gate_b)
        .into_iter()
        .map(sigmoid)
        .collect();

    let mut input = Vec::with_capacity(3 * d);
    input.extend(gates[..d].iter().zip(&embed_a).map(|(g, e)| g * e));
    input.extend(gates[d..].iter().zip(&embed_b).map(|(g, e)| g * e));
    input.extend_from_slice(&embed_op);

    let hidden_pre = params.w1.affine(&input, &params.b1);
    let hidden: Vec<f64> = hidden_pre.iter().map(|u| u.tanh()).collect();
    let logits = params.w2.affine(&hidden, &params.b2);
    let probs = softmax(&logits);

    let trace = ForwardTrace {
        problem: *problem,
        embed_a,
        embed_b,
        embed_op,
        gates,
        input,
        hidden_pre,
        hidden,
        logits,
        probs,
    };
    (AnswerDistribution { probs }, trace)
}

/// `-ln(max(p[target], 1e-12))`.
pub fn cross_entropy(dist: &AnswerDistribution, target: Number) -> f64 {
    -dist.prob(target).max(PROB_FLOOR).ln()
}

/// One minus the entropy normalized by ln 10: 0 for uniform, 1 for one-hot.
pub fn entropy_confidence(dist: &AnswerDistribution) -> f64 {
    (1.0 - dist.entropy() / (NUM_TOKENS as f64).ln()).clamp(0.0, 1.0)
}

/// Exact gradient of `cross_entropy(forward(params, problem), target)`.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, target: Number) -> Gradients {
    let d = params.embed_dim();
    let mut grads = ModelParams::zeros(d, params.hidden_dim());

    let mut d_logits = trace.probs.to_vec();
    d_logits[target.index()] -= 1.0;

    grads.w2.add_outer(&d_logits, &trace.hidden);
    grads.b2.copy_from_slice(&d_logits);

    let d_hidden = params.w2.transpose_mul(&d_logits);
    let d_pre: Vec<f64> = d_hidden
        .iter()
        .zip(&trace.hidden)
        .map(|(g, h)| g * (1.0 - h * h))
        .collect();
    grads.w1.add_outer(&d_pre, &trace.input);
    grads.b1.copy_from_slice(&d_pre);

    let d_input = params.w1.transpose_mul(&d_pre);
    let (d_gated_a, rest) = d_input.split_at(d);
    let (d_gated_b, d_op_direct) = rest.split_at(d);
    let (gate_a, gate_b) = trace.gates.split_at(d);

    // Gated products: gradient reaches both the embedding and the gate.
    let mut d_gates = vec![0.0; 2 * d];
    {
        let row = grads.num_embed.row_mut(trace.problem.a.index());
        for i in 0..d {
            row[i] += d_gated_a[i] * gate_a[i];
            d_gates[i] = d_gated_a[i] * trace.embed_a[i];
        }
    }
    {
        let row = grads.num_embed.row_mut(trace.problem.b.index());
        for i in 0..d {
            row[i] += d_gated_b[i] * gate_b[i];
            d_gates[d + i] = d_gated_b[i] * trace.embed_b[i];
        }
    }

    let d_gate_pre: Vec<f64> = d_gates
        .iter()
        .zip(&trace.gates)
        .map(|(g, s)| g * s * (1.0 - s))
        .collect();
    grads.gate_w.add_outer(&d_gate_pre, &trace.embed_op);
    grads.gate_b.copy_from_slice(&d_gate_pre);

    let d_op_gate = params.gate_w.transpose_mul(&d_gate_pre);
    let row = grads.op_embed.row_mut(trace.problem.op.index());
    for i in 0..d {
        row[i] = d_op_direct[i] + d_op_gate[i];
    }
    grads
}

/// Names the first parameter group holding a non-finite value.
pub(crate) fn first_non_finite(grads: &Gradients) -> Option<&'static str> {
    grads
        .groups()
        .iter()
        .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
        .map(|(name, _)| *name)
}

/// `p ← p − lr·g` for every parameter. Rejects non-finite gradients without
/// touching the parameters.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::config("learning_rate", "must be finite and non-negative"));
    }
    if let Some(group) = first_non_finite(grads) {
        return Err(Error::Domain(format!("non-finite gradient in {group}")));
    }
    for ((_, p), (_, g)) in params.groups_mut().into_iter().zip(grads.groups()) {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

/// Loss of `params` on one problem.
pub fn loss(params: &ModelParams, problem: &Problem, target: Number) -> f64 {
    cross_entropy(&forward(params, problem).0, target)
}

/// Result of comparing analytic gradients with central finite differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    /// Parameter group holding the worst entry.
    pub worst_group: &'static str,
    pub entries_checked: usize,
}

/// A change of one parameter entry: `index` within group `group` of
/// [`ModelParams::groups`] moves by `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub group: usize,
    pub index: usize,
    pub h: f64,
}

impl Perturbation {
    fn on(&self, group: usize) -> Option<(usize, f64)> {
        (self.group == group).then_some((self.index, self.h))
    }
}

/// Change of a matrix row times a vector when entry `index` of the matrix
/// moves by `h`, added into `out`.
fn add_entry_change(out: &mut [f64], cols: usize, index: usize, h: f64, x: &[f64]) {
    out[index / cols] += h * x[index % cols];
}

/// `L(params + change) − L(params)` for the trace's problem, carried through
/// every layer as a change rather than as a difference of two losses. The
/// result keeps its relative precision when the change is tiny, where two
/// rounded losses would cancel. The probability floor of [`cross_entropy`]
/// is ignored.
pub fn loss_change(
    params: &ModelParams,
    base: &ForwardTrace,
    change: Perturbation,
    target: Number,
) -> f64 {
    let d = params.embed_dim();
    let problem = &base.problem;

    let mut de_a = vec![0.0; d];
    let mut de_b = vec![0.0; d];
    let mut de_op = vec![0.0; d];
    if let Some((i, h)) = change.on(0) {
        if i / d == problem.a.index() {
            de_a[i % d] = h;
        }
        if i / d == problem.b.index() {
            de_b[i % d] = h;
        }
    }
    if let Some((i, h)) = change.on(1) {
        if i / d == problem.op.index() {
            de_op[i % d] = h;
        }
    }
    let e_op1 = add(&base.embed_op, &de_op);

    let gate_pre = params.gate_w.affine(&base.embed_op, &params.gate_b);
    let mut d_gate_pre = params.gate_w.affine(&de_op, &vec![0.0; 2 * d]);
    if let Some((i, h)) = change.on(2) {
        add_entry_change(&mut d_gate_pre, d, i, h, &e_op1);
    }
    if let Some((i, h)) = change.on(3) {
        d_gate_pre[i] += h;
    }
    // σ(x + h) − σ(x) = σ(x + h) · σ(−x) · (1 − e^(−h))
    let gates1: Vec<f64> = gate_pre.iter().zip(&d_gate_pre).map(|(x, h)| sigmoid(x + h)).collect();
    let d_gates: Vec<f64> = gate_pre
        .iter()
        .zip(&d_gate_pre)
        .zip(&gates1)
        .map(|((x, h), g1)| g1 * sigmoid(-x) * -(-h).exp_m1())
        .collect();

    let mut d_input = Vec::with_capacity(3 * d);
    for (offset, e, de) in [(0, &base.embed_a, &de_a), (d, &base.embed_b, &de_b)] {
        d_input.extend((0..d).map(|i| gates1[offset + i] * de[i] + d_gates[offset + i] * e[i]));
    }
    d_input.extend_from_slice(&de_op);
    let input1 = add(&base.input, &d_input);

    let h_dim = params.hidden_dim();
    let mut d_hidden_pre = if change.group < 4 {
        params.w1.affine(&d_input, &vec![0.0; h_dim])
    } else {
        vec![0.0; h_dim]
    };
    if let Some((i, h)) = change.on(4) {
        add_entry_change(&mut d_hidden_pre, 3 * d, i, h, &input1);
    }
    if let Some((i, h)) = change.on(5) {
        d_hidden_pre[i] += h;
    }
    // tanh(x + h) − tanh(x) = tanh(h) · (1 − tanh(x + h) · tanh(x))
    let hidden1: Vec<f64> = base
        .hidden_pre
        .iter()
        .zip(&d_hidden_pre)
        .map(|(x, h)| (x + h).tanh())
        .collect();
    let d_hidden: Vec<f64> = d_hidden_pre
        .iter()
        .zip(hidden1.iter().zip(&base.hidden))
        .map(|(h, (t1, t0))| h.tanh() * (1.0 - t1 * t0))
        .collect();

    let mut d_logits = if change.group < 6 {
        params.w2.affine(&d_hidden, &[0.0; NUM_TOKENS])
    } else {
        vec![0.0; NUM_TOKENS]
    };
    if let Some((i, h)) = change.on(6) {
        add_entry_change(&mut d_logits, h_dim, i, h, &hidden1);
    }
    if let Some((i, h)) = change.on(7) {
        d_logits[i] += h;
    }
    // L = lse(z) − z_t, and lse(z + h) − lse(z) = ln(1 + Σ p_i (e^(h_i) − 1))
    let spread: f64 = base.probs.iter().zip(&d_logits).map(|(p, h)| p * h.exp_m1()).sum();
    spread.ln_1p() - d_logits[target.index()]
}

fn add(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

/// Compares `backward` with the central difference
/// `(L(p+eps) − L(p−eps)) / 2eps` on every parameter entry; the error per
/// entry is `|a − n| / max(1e-8, |a| + |n|)`. Each side of the difference is
/// evaluated with [`loss_change`], so entries whose gradient is far below the
/// loss's rounding error are still resolved.
pub fn gradient_check(
    params: &ModelParams,
    problem: &Problem,
    target: Number,
    eps: f64,
) -> Result<GradientCheckReport> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::Input(format!("eps {eps} outside [1e-6, 1e-3]")));
    }
    let (_, trace) = forward(params, problem);
    let analytic = backward(params, &trace, target);

    let mut report = GradientCheckReport {
        max_relative_error: 0.0,
        worst_group: "none",
        entries_checked: 0,
    };
    for (group_index, (name, grad)) in analytic.groups().into_iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let nudge = |h| Perturbation { group: group_index, index: i, h };
            let up = loss_change(params, &trace, nudge(eps), target);
            let down = loss_change(params, &trace, nudge(-eps), target);

            let numeric = (up - down) / (2.0 * eps);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_group = name;
            }
            report.entries_checked += 1;
        }
    }
    Ok(report)
}

/// Worst case over a batch of [`gradient_check`] draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheckSummary {
    pub seed: u64,
    pub trials: usize,
    pub eps: f64,
    pub max_relative_error: f64,
    pub worst_group: &'static str,
    /// Index of the draw holding the worst entry.
    pub worst_trial: usize,
    pub entries_checked: usize,
}

/// Runs [`gradient_check`] on `trials` random draws. Each draw takes fresh
/// initial parameters with random biases, a random valid problem and a random
/// target.
pub fn gradient_check_draws(
    seed: u64,
    trials: usize,
    eps: f64,
    embed_dim: usize,
    hidden_dim: usize,
) -> Result<GradientCheckSummary> {
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let problems: Vec<Problem> = Problem::all_additions()
        .into_iter()
        .chain(Problem::all_counts())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut params = ModelParams::init(rng.random(), embed_dim, hidden_dim)?;
        for b in params
            .gate_b
            .iter_mut()
            .chain(params.b1.iter_mut())
            .chain(params.b2.iter_mut())
        {
            *b = rng.random_range(-0.5..0.5);
        }
        let problem = problems[rng.random_range(0..problems.len())];
        let target = Number::from_index(rng.random_range(0..NUM_TOKENS))?;
        draws.push((params, problem, target));
    }
    let reports = draws
        .par_iter()
        .map(|(params, problem, target)| gradient_check(params, problem, *target, eps))
        .collect::<Result<Vec<_>>>()?;

    let mut summary = GradientCheckSummary {
        seed,
        trials,
        eps,
        max_relative_error: 0.0,
        worst_group: "none",
        worst_trial: 0,
        entries_checked: 0,
    };
    for (trial, report) in reports.iter().enumerate() {
        summary.entries_checked += report.entries_checked;
        if report.max_relative_error > summary.max_relative_error {
            summary.max_relative_error = report.max_relative_error;
            summary.worst_group = report.worst_group;
            summary.worst_trial = trial;
        }
    }
    Ok(summary)
}
