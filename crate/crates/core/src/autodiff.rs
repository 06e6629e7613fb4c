//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each call such as
//! [`Tape::matmul`] evaluates eagerly, appends a node and returns a [`Var`]
//! handle. [`Tape::backward`] walks the nodes in reverse and accumulates
//! adjoints; [`Tape::backward_into`] additionally deposits the adjoints of
//! parameter leaves into a [`ParamStore`].
//!
//! ```
//! use stgs_nas::autodiff::Tape;
//! use stgs_nas::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum_all(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(&tape, x).data(), &[2.0, 4.0]);
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{self, axis_extents, gemm, Tensor};

/// Which optimiser phase owns a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    /// Operation and classifier weights, trained on the training split.
    Weights,
    /// First-level edge logits.
    Alpha,
    /// Cell input-slot logits.
    Beta,
    /// Cell fusion-op logits.
    Gamma,
}

impl Group {
    pub const ARCH: [Group; 3] = [Group::Alpha, Group::Beta, Group::Gamma];

    pub fn is_arch(self) -> bool {
        self != Group::Weights
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Weights => "weights",
            Group::Alpha => "alpha",
            Group::Beta => "beta",
            Group::Gamma => "gamma",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub group: Group,
}

/// Owns every learnable tensor of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param { name: name.into(), value, grad, group });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in(&self, group: Group) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.group == group).map(|(id, _)| id).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Total number of scalars held by parameters of `group`.
    pub fn scalar_count(&self, group: Group) -> usize {
        self.params.iter().filter(|p| p.group == group).map(|p| p.value.len()).sum()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    AddRowBias(Var, Var),
    MatMul(Var, Var),
    BatchMatMul(Var, Var, bool),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Sigmoid(Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    Neg(Var),
    Concat(Vec<Var>, usize),
    SumAxis(Var, usize),
    SumAll(Var),
    Reshape(Var),
    Narrow { x: Var, axis: usize, start: usize },
    Index(Var, usize),
    StopGrad(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf | Param => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MulScalar(a, b) | AddRowBias(a, b)
            | MatMul(a, b) | BatchMatMul(a, b, _) => vec![*a, *b],
            Scale(a, _) | Softmax(a, _) | LogSoftmax(a, _) | Sigmoid(a) | Relu(a) | Log(a)
            | Exp(a) | Neg(a) | SumAxis(a, _) | SumAll(a) | Reshape(a) | Index(a, _)
            | StopGrad(a) => vec![*a],
            Narrow { x, .. } => vec![*x],
            Concat(xs, _) => xs.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Adjoints of every node after a backward pass.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Adjoint of `v`, or zeros of its shape when nothing flowed into it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(op.inputs().iter().all(|i| i.0 < self.nodes.len()));
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Parameters recorded on this tape, in id order.
    pub fn params(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.param_vars.keys().copied().collect();
        ids.sort();
        ids
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param);
        self.param_vars.insert(id, v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Multiplies by a fixed constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    /// Multiplies every entry of `x` by the one-element tensor `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item()?;
        let out = self.value(x).map(|v| v * sv);
        Ok(self.push(out, Op::MulScalar(x, s)))
    }

    /// Adds `bias[n]` to every row of `x[..., n]`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let n = *xv.shape().last().expect("non-empty shape");
        if bv.rank() != 1 || bv.len() != n {
            return shape_err(format!("row bias {:?} onto {:?}", bv.shape(), xv.shape()));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRowBias(x, bias)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let out = tensor::batch_matmul(self.value(a), self.value(b), trans_b)?;
        Ok(self.push(out, Op::BatchMatMul(a, b, trans_b)))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = tensor::softmax(self.value(x), axis)?;
        Ok(self.push(out, Op::Softmax(x, axis)))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = tensor::log_softmax(self.value(x), axis)?;
        Ok(self.push(out, Op::LogSoftmax(x, axis)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(tensor::sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if let Some(bad) = xv.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        let out = xv.map(f64::ln);
        Ok(self.push(out, Op::Log(x)))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        self.push(out, Op::Exp(x))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| -v);
        self.push(out, Op::Neg(x))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let vals: Vec<&Tensor> = xs.iter().map(|&v| self.value(v)).collect();
        let out = tensor::concat(&vals, axis)?;
        Ok(self.push(out, Op::Concat(xs.to_vec(), axis)))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = tensor::sum_axis(self.value(x), axis)?;
        Ok(self.push(out, Op::SumAxis(x, axis)))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let dim = *self
            .value(x)
            .shape()
            .get(axis)
            .ok_or_else(|| Error::Shape(format!("mean over missing axis {axis}")))?;
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, 1.0 / dim as f64))
    }

    /// Sum of every entry, as a `[1]` tensor.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = tensor::narrow(self.value(x), axis, start, len)?;
        Ok(self.push(out, Op::Narrow { x, axis, start }))
    }

    /// Entry `i` of the flattened tensor as a `[1]` tensor.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var> {
        let v = *self
            .value(x)
            .data()
            .get(i)
            .ok_or_else(|| Error::Shape(format!("index {i} out of range")))?;
        Ok(self.push(Tensor::scalar(v), Op::Index(x, i)))
    }

    /// Same value, no gradient flows back through it.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let out = self.value(x).clone();
        self.push(out, Op::StopGrad(x))
    }

    /// Mean softmax cross-entropy of `logits[B×K]` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.value(logits).shape().to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return shape_err(format!("cross-entropy logits {shape:?} vs {} labels", labels.len()));
        }
        let (b, k) = (shape[0], shape[1]);
        let mut onehot = vec![0.0; b * k];
        for (r, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::Contract(format!("label {l} outside {k} classes")));
            }
            onehot[r * k + l] = 1.0;
        }
        let lsm = self.log_softmax(logits, 1)?;
        let mask = self.constant(Tensor::new(vec![b, k], onehot)?);
        let picked = self.mul(lsm, mask)?;
        let total = self.sum_all(picked);
        Ok(self.scale(total, -1.0 / b as f64))
    }

    /// Reverse accumulation from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward from non-scalar node of shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and adds parameter adjoints into `store` for
    /// parameters whose group passes `accept`. Parameters never touched by
    /// the graph keep their existing gradient.
    pub fn backward_into(
        &self,
        loss: Var,
        store: &mut ParamStore,
        accept: impl Fn(Group) -> bool,
    ) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        for (&id, &var) in &self.param_vars {
            let param = store.get_mut(id);
            if !accept(param.group) {
                continue;
            }
            if let Some(g) = grads.get(var) {
                param.grad.add_assign(g);
            }
        }
        Ok(grads)
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param | Op::StopGrad(_) => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y)?);
                accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y)?);
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.map(|v| v * c)),
            Op::MulScalar(x, s) => {
                let sv = val(*s).item()?;
                accumulate(grads, *x, g.map(|v| v * sv));
                let ds: f64 = g.data().iter().zip(val(*x).data()).map(|(a, b)| a * b).sum();
                accumulate(grads, *s, Tensor::scalar(ds));
            }
            Op::AddRowBias(x, b) => {
                accumulate(grads, *x, g.clone());
                let n = val(*b).len();
                let mut gb = vec![0.0; n];
                for row in g.data().chunks(n) {
                    for (o, v) in gb.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                accumulate(grads, *b, Tensor::vector(gb));
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let mut ga = vec![0.0; m * k];
                gemm(g.data(), bv.data(), &mut ga, m, n, k, false, true);
                let mut gb = vec![0.0; k * n];
                gemm(av.data(), g.data(), &mut gb, k, m, n, true, false);
                accumulate(grads, *a, Tensor::new(vec![m, k], ga)?);
                accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), gb)?);
            }
            Op::BatchMatMul(a, b, trans_b) => {
                let (av, bv) = (val(*a), val(*b));
                let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = g.shape()[2];
                let mut ga = vec![0.0; batch * m * k];
                let mut gb = vec![0.0; batch * k * n];
                for bi in 0..batch {
                    let gs = &g.data()[bi * m * n..(bi + 1) * m * n];
                    let asl = &av.data()[bi * m * k..(bi + 1) * m * k];
                    let bsl = &bv.data()[bi * k * n..(bi + 1) * k * n];
                    let ga_s = &mut ga[bi * m * k..(bi + 1) * m * k];
                    let gb_s = &mut gb[bi * k * n..(bi + 1) * k * n];
                    if *trans_b {
                        // out = a·bᵀ with b[n×k]
                        gemm(gs, bsl, ga_s, m, n, k, false, false);
                        gemm(gs, asl, gb_s, n, m, k, true, false);
                    } else {
                        gemm(gs, bsl, ga_s, m, n, k, false, true);
                        gemm(asl, gs, gb_s, k, m, n, true, false);
                    }
                }
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), ga)?);
                accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), gb)?);
            }
            Op::Softmax(x, axis) => {
                let y = &node.value;
                let (outer, dim, inner) = axis_extents(y.shape(), *axis)?;
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |d: usize| (o * dim + d) * inner + i;
                        let dot: f64 = (0..dim).map(|d| g.data()[at(d)] * y.data()[at(d)]).sum();
                        for d in 0..dim {
                            gx[at(d)] = y.data()[at(d)] * (g.data()[at(d)] - dot);
                        }
                    }
                }
                accumulate(grads, *x, Tensor::new(y.shape().to_vec(), gx)?);
            }
            Op::LogSoftmax(x, axis) => {
                let y = &node.value;
                let (outer, dim, inner) = axis_extents(y.shape(), *axis)?;
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |d: usize| (o * dim + d) * inner + i;
                        let total: f64 = (0..dim).map(|d| g.data()[at(d)]).sum();
                        for d in 0..dim {
                            gx[at(d)] = g.data()[at(d)] - y.data()[at(d)].exp() * total;
                        }
                    }
                }
                accumulate(grads, *x, Tensor::new(y.shape().to_vec(), gx)?);
            }
            Op::Sigmoid(x) => {
                accumulate(grads, *x, g.zip_map(&node.value, |gv, y| gv * y * (1.0 - y))?);
            }
            Op::Relu(x) => {
                accumulate(grads, *x, g.zip_map(val(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })?);
            }
            Op::Log(x) => accumulate(grads, *x, g.zip_map(val(*x), |gv, xv| gv / xv)?),
            Op::Exp(x) => accumulate(grads, *x, g.zip_map(&node.value, |gv, y| gv * y)?),
            Op::Neg(x) => accumulate(grads, *x, g.map(|v| -v)),
            Op::Concat(xs, axis) => {
                let mut start = 0;
                for &x in xs {
                    let len = val(x).shape()[*axis];
                    accumulate(grads, x, tensor::narrow(g, *axis, start, len)?);
                    start += len;
                }
            }
            Op::SumAxis(x, axis) => {
                let xs = val(*x).shape();
                let (outer, dim, inner) = axis_extents(xs, *axis)?;
                let mut gx = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    for d in 0..dim {
                        for i in 0..inner {
                            gx[(o * dim + d) * inner + i] = g.data()[o * inner + i];
                        }
                    }
                }
                accumulate(grads, *x, Tensor::new(xs.to_vec(), gx)?);
            }
            Op::SumAll(x) => {
                let gv = g.item()?;
                accumulate(grads, *x, Tensor::full(val(*x).shape(), gv));
            }
            Op::Reshape(x) => accumulate(grads, *x, g.reshape(val(*x).shape())?),
            Op::Narrow { x, axis, start } => {
                let xs = val(*x).shape();
                let (outer, dim, inner) = axis_extents(xs, *axis)?;
                let len = g.shape()[*axis];
                let mut gx = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    let dst = (o * dim + start) * inner;
                    let src = o * len * inner;
                    gx[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
                }
                accumulate(grads, *x, Tensor::new(xs.to_vec(), gx)?);
            }
            Op::Index(x, i) => {
                let mut gx = Tensor::zeros(val(*x).shape());
                gx.data_mut()[*i] = g.item()?;
                accumulate(grads, *x, gx);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap());
        let loss = tape.sum_all(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(&tape, x), Tensor::ones(&[2, 3]));
    }

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(&tape, x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn log_domain() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(tape.log(x), Err(Error::Domain(_))));
        let y = tape.constant(Tensor::vector(vec![-2.0]));
        assert!(tape.log(y).is_err());
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(z);
        assert_eq!(tape.value(s).data(), &[0.5]);
        let m = tape.constant(Tensor::scalar(-3.0));
        let r = tape.relu(m);
        assert_eq!(tape.value(r).data(), &[0.0]);
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(Tensor::vector(vec![3.0]));
        let c = tape.concat(&[a, b], 0).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn unused_param_gets_exact_zero() {
        let mut store = ParamStore::new();
        let used = store.add("used", Group::Weights, Tensor::vector(vec![1.0, -1.0]));
        let unused = store.add("unused", Group::Weights, Tensor::vector(vec![3.0]));
        let mut tape = Tape::new();
        let u = tape.param(&store, used);
        let _ = tape.param(&store, unused);
        let e = tape.exp(u);
        let loss = tape.sum_all(e);
        tape.backward_into(loss, &mut store, |_| true).unwrap();
        assert_eq!(store.get(unused).grad.data(), &[0.0]);
        assert!(store.get(used).grad.data()[0] > 0.0);
    }

    #[test]
    fn backward_into_respects_group_filter() {
        let mut store = ParamStore::new();
        let w = store.add("w", Group::Weights, Tensor::scalar(2.0));
        let a = store.add("a", Group::Alpha, Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let av = tape.param(&store, a);
        let p = tape.mul(wv, av).unwrap();
        let loss = tape.sum_all(p);
        tape.backward_into(loss, &mut store, Group::is_arch).unwrap();
        assert_eq!(store.get(w).grad.data(), &[0.0]);
        assert_eq!(store.get(a).grad.data(), &[2.0]);
    }

    #[test]
    fn stop_gradient_blocks_flow() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.5, -0.5]));
        let s = tape.stop_gradient(x);
        let d = tape.sub(x, s).unwrap();
        assert_eq!(tape.value(d).data(), &[0.0, 0.0]);
        let loss = tape.sum_all(d);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(&tape, x).data(), &[1.0, 1.0]);
    }
}
