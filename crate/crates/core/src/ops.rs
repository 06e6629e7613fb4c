//! Candidate operations: the binary fusion pool used inside cells and the
//! unary keep/drop pool used on first-level edges.
//!
//! Pool order is part of the public contract because it indexes the
//! architecture logits: `Zero, Sum, Attention, LinearGlu, ConcatFc` and
//! `Identity, ZeroEdge`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Group, ParamId, ParamStore, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::sampler::NoiseSource;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionOp {
    Zero,
    Sum,
    Attention,
    LinearGlu,
    ConcatFc,
}

impl FusionOp {
    pub const POOL: [FusionOp; 5] =
        [FusionOp::Zero, FusionOp::Sum, FusionOp::Attention, FusionOp::LinearGlu, FusionOp::ConcatFc];

    pub fn name(self) -> &'static str {
        match self {
            FusionOp::Zero => "zero",
            FusionOp::Sum => "sum",
            FusionOp::Attention => "attention",
            FusionOp::LinearGlu => "linear_glu",
            FusionOp::ConcatFc => "concat_fc",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::POOL
            .into_iter()
            .find(|op| op.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown fusion op {name:?}")))
    }

    /// Number of learnable scalars the op owns at feature width `c`.
    pub fn param_count(self, c: usize) -> usize {
        match self {
            FusionOp::Zero | FusionOp::Sum | FusionOp::Attention => 0,
            FusionOp::LinearGlu => 2 * c * c,
            FusionOp::ConcatFc => 2 * c * c + c,
        }
    }

    /// Whether the output depends on `(x, y)`. With a single time step the
    /// attention weights are identically 1, so attention reduces to `y`.
    pub fn reads_inputs(self, seq_len: usize) -> (bool, bool) {
        match self {
            FusionOp::Zero => (false, false),
            FusionOp::Attention => (seq_len > 1, true),
            FusionOp::Sum | FusionOp::LinearGlu | FusionOp::ConcatFc => (true, true),
        }
    }
}

impl std::fmt::Display for FusionOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// First-level edge choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOp {
    Identity,
    ZeroEdge,
}

impl EdgeOp {
    pub const POOL: [EdgeOp; 2] = [EdgeOp::Identity, EdgeOp::ZeroEdge];
}

pub fn apply_edge(tape: &mut Tape, kind: EdgeOp, x: Var) -> Var {
    match kind {
        EdgeOp::Identity => x,
        EdgeOp::ZeroEdge => {
            let shape = tape.value(x).shape().to_vec();
            tape.constant(Tensor::zeros(&shape))
        }
    }
}

/// Weights of the parameterised fusion ops on one cell edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpWeights {
    pub width: usize,
    pub glu_w1: Option<ParamId>,
    pub glu_w2: Option<ParamId>,
    pub fc_w: Option<ParamId>,
    pub fc_b: Option<ParamId>,
}

impl OpWeights {
    /// Allocates weights for every op of `pool` that needs them, drawing a
    /// uniform `±1/sqrt(fan_in)` initialisation from `init`.
    pub fn allocate(
        store: &mut ParamStore,
        prefix: &str,
        width: usize,
        pool: &[FusionOp],
        init: &mut NoiseSource,
    ) -> Self {
        let mut w = OpWeights { width, glu_w1: None, glu_w2: None, fc_w: None, fc_b: None };
        if pool.contains(&FusionOp::LinearGlu) {
            w.glu_w1 = Some(store.add(
                format!("{prefix}.glu.w1"),
                Group::Weights,
                uniform_init(&[width, width], width, init),
            ));
            w.glu_w2 = Some(store.add(
                format!("{prefix}.glu.w2"),
                Group::Weights,
                uniform_init(&[width, width], width, init),
            ));
        }
        if pool.contains(&FusionOp::ConcatFc) {
            w.fc_w = Some(store.add(
                format!("{prefix}.fc.w"),
                Group::Weights,
                uniform_init(&[2 * width, width], 2 * width, init),
            ));
            w.fc_b = Some(store.add(format!("{prefix}.fc.b"), Group::Weights, Tensor::zeros(&[width])));
        }
        w
    }
}

pub(crate) fn uniform_init(shape: &[usize], fan_in: usize, init: &mut NoiseSource) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| (2.0 * init.next_uniform() - 1.0) * bound).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}

fn need(id: Option<ParamId>, op: FusionOp) -> Result<ParamId> {
    id.ok_or_else(|| Error::Contract(format!("{op} weights were not allocated")))
}

/// Applies a fusion op to two `[B, T, C]` tensors.
pub fn apply_op(
    tape: &mut Tape,
    store: &ParamStore,
    kind: FusionOp,
    x: Var,
    y: Var,
    weights: &OpWeights,
) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 3 || tape.value(y).shape() != shape.as_slice() {
        return shape_err(format!(
            "fusion op {kind} on {:?} and {:?}",
            shape,
            tape.value(y).shape()
        ));
    }
    let (b, t, c) = (shape[0], shape[1], shape[2]);
    if c != weights.width {
        return shape_err(format!("feature width {c} vs op width {}", weights.width));
    }
    match kind {
        FusionOp::Zero => Ok(tape.constant(Tensor::zeros(&shape))),
        FusionOp::Sum => tape.add(x, y),
        FusionOp::Attention => {
            let scores = tape.batch_matmul(x, y, true)?;
            let scores = tape.scale(scores, 1.0 / (c as f64).sqrt());
            let attn = tape.softmax(scores, 2)?;
            tape.batch_matmul(attn, y, false)
        }
        FusionOp::LinearGlu => {
            let w1 = tape.param(store, need(weights.glu_w1, kind)?);
            let w2 = tape.param(store, need(weights.glu_w2, kind)?);
            let x2 = tape.reshape(x, &[b * t, c])?;
            let y2 = tape.reshape(y, &[b * t, c])?;
            let lin = tape.matmul(x2, w1)?;
            let gate = tape.matmul(y2, w2)?;
            let gate = tape.sigmoid(gate);
            let out = tape.mul(lin, gate)?;
            tape.reshape(out, &shape)
        }
        FusionOp::ConcatFc => {
            let w = tape.param(store, need(weights.fc_w, kind)?);
            let bias = tape.param(store, need(weights.fc_b, kind)?);
            let xy = tape.concat(&[x, y], 2)?;
            let xy = tape.reshape(xy, &[b * t, 2 * c])?;
            let h = tape.matmul(xy, w)?;
            let h = tape.add_row_bias(h, bias)?;
            let h = tape.relu(h);
            tape.reshape(h, &shape)
        }
    }
}
