//! Central finite-difference checks for tape gradients.
//!
//! The numeric side only ever evaluates forward values, so it stays
//! independent of every backward rule it validates.

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor, so that gradients that are both ~0 compare absolutely.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, tolerance: 1e-4, floor: 1e-6 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    pub worst: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }

    pub fn extend(&mut self, other: GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = self.analytic.len() + other.worst;
        }
        self.analytic.extend(other.analytic);
        self.numeric.extend(other.numeric);
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn compare(analytic: Vec<f64>, numeric: Vec<f64>, floor: f64) -> GradCheckReport {
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: 0, ..Default::default() };
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = relative_error(a, n, floor);
        if e > report.max_rel_error || e.is_nan() {
            report.max_rel_error = if e.is_nan() { f64::INFINITY } else { e };
            report.worst = i;
        }
    }
    report.analytic = analytic;
    report.numeric = numeric;
    report
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe)?;
        probe[i] = x[i] - step;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Checks a scalar function of constant tensors built on a fresh tape.
pub fn check_tape_fn(
    inputs: &[Tensor],
    cfg: GradCheckConfig,
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport::default();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(&tape, vars[k]).into_data();
        let numeric = central_difference(
            |x| {
                let mut t = Tape::new();
                let vs: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, inp)| {
                        if j == k {
                            t.constant(Tensor::new(inp.shape().to_vec(), x.to_vec()).unwrap())
                        } else {
                            t.constant(inp.clone())
                        }
                    })
                    .collect();
                let l = build(&mut t, &vs)?;
                t.value(l).item()
            },
            input.data(),
            cfg.step,
        )?;
        report.extend(compare(analytic, numeric, cfg.floor));
    }
    Ok(report)
}

/// Central differences of `loss` with respect to entries of stored params.
/// `entries` lists `(param, flat index)` pairs; the store is restored after.
pub fn numeric_param_gradient(
    store: &mut ParamStore,
    entries: &[(ParamId, usize)],
    step: f64,
    mut loss: impl FnMut(&ParamStore) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(entries.len());
    for &(id, i) in entries {
        let orig = store.get(id).value.data()[i];
        store.get_mut(id).value.data_mut()[i] = orig + step;
        let up = loss(store)?;
        store.get_mut(id).value.data_mut()[i] = orig - step;
        let down = loss(store)?;
        store.get_mut(id).value.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}
