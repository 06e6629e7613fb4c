//! Dense row-major `f64` tensors and the numeric kernels the tape builds on.
//!
//! Kernels here are plain functions over values; they know nothing about
//! gradients. [`crate::autodiff`] records them and supplies backward rules.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return shape_err(format!("shape {shape:?} must be non-empty with positive dims"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err(format!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; n]).expect("full: invalid shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    /// A one-element tensor of shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    /// A rank-1 tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        Self::new(vec![data.len()], data).expect("vector must be non-empty")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_shape(self, other, "elementwise")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub(crate) fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return shape_err(format!("{what}: {:?} vs {:?}", a.shape, b.shape));
    }
    Ok(())
}

/// Splits `shape` around `axis` into (outer, dim, inner) extents.
pub(crate) fn axis_extents(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return shape_err(format!("axis {axis} out of range for shape {shape:?}"));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// `out[m×n] (+)= op(a) · op(b)` on raw slices, where `op` optionally transposes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
    trans_a: bool,
    trans_b: bool,
) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = if trans_a { a[p * m + i] } else { a[i * k + p] };
            if av == 0.0 {
                continue;
            }
            if trans_b {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += av * b[j * k + p];
                }
            } else {
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return shape_err(format!("matmul {:?} × {:?}", a.shape, b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    gemm(&a.data, &b.data, &mut out, m, k, n, false, false);
    Tensor::new(vec![m, n], out)
}

/// Batched product of `[B,m,k]` with `[B,k,n]`, or with `[B,n,k]` when `trans_b`.
pub fn batch_matmul(a: &Tensor, b: &Tensor, trans_b: bool) -> Result<Tensor> {
    if a.rank() != 3 || b.rank() != 3 || a.shape[0] != b.shape[0] {
        return shape_err(format!("batch_matmul {:?} × {:?}", a.shape, b.shape));
    }
    let (batch, m, k) = (a.shape[0], a.shape[1], a.shape[2]);
    let (bk, n) = if trans_b { (b.shape[2], b.shape[1]) } else { (b.shape[1], b.shape[2]) };
    if bk != k {
        return shape_err(format!(
            "batch_matmul inner dims {:?} × {:?} (trans_b={trans_b})",
            a.shape, b.shape
        ));
    }
    let mut out = vec![0.0; batch * m * n];
    for bi in 0..batch {
        gemm(
            &a.data[bi * m * k..(bi + 1) * m * k],
            &b.data[bi * k * n..(bi + 1) * k * n],
            &mut out[bi * m * n..(bi + 1) * m * n],
            m,
            k,
            n,
            false,
            trans_b,
        );
    }
    Tensor::new(vec![batch, m, n], out)
}

/// Softmax along `axis`, stabilised by subtracting the per-slice maximum.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, dim, inner) = axis_extents(&x.shape, axis)?;
    let mut out = x.data.clone();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |d: usize| (o * dim + d) * inner + i;
            let max = (0..dim).map(|d| x.data[idx(d)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for d in 0..dim {
                let e = (x.data[idx(d)] - max).exp();
                out[idx(d)] = e;
                total += e;
            }
            for d in 0..dim {
                out[idx(d)] /= total;
            }
        }
    }
    Tensor::new(x.shape.clone(), out)
}

pub fn log_softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, dim, inner) = axis_extents(&x.shape, axis)?;
    let mut out = x.data.clone();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |d: usize| (o * dim + d) * inner + i;
            let max = (0..dim).map(|d| x.data[idx(d)]).fold(f64::NEG_INFINITY, f64::max);
            let lse = max + (0..dim).map(|d| (x.data[idx(d)] - max).exp()).sum::<f64>().ln();
            for d in 0..dim {
                out[idx(d)] = x.data[idx(d)] - lse;
            }
        }
    }
    Tensor::new(x.shape.clone(), out)
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Sums out `axis`. A rank-1 input reduces to shape `[1]`.
pub fn sum_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, dim, inner) = axis_extents(&x.shape, axis)?;
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for d in 0..dim {
            for i in 0..inner {
                out[o * inner + i] += x.data[(o * dim + d) * inner + i];
            }
        }
    }
    let mut shape = x.shape.clone();
    shape.remove(axis);
    if shape.is_empty() {
        shape.push(1);
    }
    Tensor::new(shape, out)
}

pub fn concat(xs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = xs.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
    let rank = first.rank();
    for x in xs {
        if x.rank() != rank
            || x.shape.iter().enumerate().any(|(i, &d)| i != axis && d != first.shape[i])
        {
            return shape_err(format!("concat axis {axis}: {:?} vs {:?}", first.shape, x.shape));
        }
    }
    let (outer, _, inner) = axis_extents(&first.shape, axis)?;
    let total: usize = xs.iter().map(|x| x.shape[axis]).sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for x in xs {
            let chunk = x.shape[axis] * inner;
            out.extend_from_slice(&x.data[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape.clone();
    shape[axis] = total;
    Tensor::new(shape, out)
}

/// The slice `start..start+len` along `axis`.
pub fn narrow(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let (outer, dim, inner) = axis_extents(&x.shape, axis)?;
    if len == 0 || start + len > dim {
        return shape_err(format!("narrow {start}..{} on axis of {dim}", start + len));
    }
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * dim + start) * inner;
        out.extend_from_slice(&x.data[base..base + len * inner]);
    }
    let mut shape = x.shape.clone();
    shape[axis] = len;
    Tensor::new(shape, out)
}

/// Shannon entropy (natural log) of a probability vector; `0·log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// Index of the maximum; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_mismatched_length() {
        assert!(matches!(Tensor::new(vec![2, 2], vec![1.0; 3]), Err(Error::Shape(_))));
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(matmul(&eye, &b).unwrap(), b);
        let two = Tensor::matrix(1, 1, vec![2.0]).unwrap();
        let three = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        assert_eq!(matmul(&two, &three).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_analytic_cases() {
        let s = softmax(&Tensor::vector(vec![0.0, 0.0]), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&Tensor::vector(vec![1f64.ln(), 3f64.ln()]), 0).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-15);
        assert!((s.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        // Rescaled reference: softmax([1000, 0]) == softmax([0, -1000]) analytically,
        // and the second component is exp(-1000) / (1 + exp(-1000)), which underflows to 0.
        let s = softmax(&Tensor::vector(vec![1000.0, 0.0]), 0).unwrap();
        assert!(s.is_finite());
        assert_eq!(s.data()[0], 1.0);
        assert!(s.data()[1] < 1e-300);
    }

    #[test]
    fn softmax_middle_axis() {
        let x = Tensor::new(vec![2, 3, 2], (0..12).map(|v| v as f64 * 0.3).collect()).unwrap();
        let s = softmax(&x, 1).unwrap();
        for o in 0..2 {
            for i in 0..2 {
                let total: f64 = (0..3).map(|d| s.data()[(o * 3 + d) * 2 + i]).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_and_narrow_are_inverse() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0]);
        let c = concat(&[&a, &b], 0).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 3.0]);
        assert_eq!(narrow(&c, 0, 0, 2).unwrap(), a);
        assert_eq!(narrow(&c, 0, 2, 1).unwrap(), b);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn entropy_of_uniform() {
        assert!((entropy(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }
}
