//! Gumbel sampling, the Gumbel-max trick, the Gumbel-Softmax relaxation and
//! the straight-through estimator built on top of it.
//!
//! Randomness is counter based: a draw is a pure function of
//! `(seed, stream, draw_index)`. A [`NoiseSource`] walks a cursor over one
//! stream, so cloning it freezes the noise a forward pass will see. That is
//! what finite-difference checks and reproducible parallel runs rely on.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Lower and upper clamp applied to uniform draws before the double log.
pub const UNIFORM_CLAMP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelParams {
    pub mu: f64,
    pub beta: f64,
}

impl GumbelParams {
    pub fn new(mu: f64, beta: f64) -> Result<Self> {
        if beta.is_nan() || beta < 0.0 || !mu.is_finite() || !beta.is_finite() {
            return Err(Error::Domain(format!("Gumbel(mu={mu}, beta={beta}) needs beta >= 0")));
        }
        Ok(Self { mu, beta })
    }

    pub fn standard() -> Self {
        Self { mu: 0.0, beta: 1.0 }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (-(-(x - self.mu) / self.beta).exp()).exp()
    }
}

/// Quantile function `mu - beta * ln(-ln u)` on the open unit interval.
pub fn gumbel_icdf(u: f64, p: GumbelParams) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("gumbel_icdf needs 0 < u < 1, got {u}")));
    }
    Ok(-p.beta * (-u.ln()).ln() + p.mu)
}

/// Counter-addressed uniform generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededRng {
    pub seed: u64,
    pub stream: u64,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    fn positioned(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        // one u64 draw consumes two 32-bit words
        rng.set_word_pos(u128::from(index) * 2);
        rng
    }

    /// Raw 64 random bits for `index`.
    pub fn bits(&self, index: u64) -> u64 {
        self.positioned(index).next_u64()
    }

    /// Uniform draw in [0, 1) for `index`, unclamped.
    pub fn uniform(&self, index: u64) -> f64 {
        to_unit(self.bits(index))
    }

    /// Fills `out` with the uniforms for indices `start..start+out.len()`.
    pub fn fill_uniform(&self, start: u64, out: &mut [f64]) {
        let mut rng = self.positioned(start);
        for o in out {
            *o = to_unit(rng.next_u64());
        }
    }

    /// Standard Gumbel draws for indices `start..start+n`.
    pub fn gumbel(&self, start: u64, n: usize) -> Vec<f64> {
        let mut u = vec![0.0; n];
        self.fill_uniform(start, &mut u);
        u.into_iter().map(standard_gumbel_from_uniform).collect()
    }
}

fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn standard_gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -(-u.ln()).ln()
}

/// Shape-filled tensor of standard Gumbel draws starting at `start`.
pub fn sample_gumbel(shape: &[usize], rng: SeededRng, start: u64) -> Result<Tensor> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rng.gumbel(start, n))
}

/// A cursor over one counter-based stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseSource {
    rng: SeededRng,
    cursor: u64,
}

impl NoiseSource {
    pub fn new(rng: SeededRng) -> Self {
        Self { rng, cursor: 0 }
    }

    pub fn at(rng: SeededRng, cursor: u64) -> Self {
        Self { rng, cursor }
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn rng(&self) -> SeededRng {
        self.rng
    }

    pub fn next_gumbel(&mut self, n: usize) -> Vec<f64> {
        let g = self.rng.gumbel(self.cursor, n);
        self.cursor += n as u64;
        g
    }

    pub fn next_uniform(&mut self) -> f64 {
        let u = self.rng.uniform(self.cursor);
        self.cursor += 1;
        u
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxationMode {
    /// Hard one-hot forward, soft Gumbel-Softmax backward.
    Stgs,
    /// Temperature softmax of the logits with no noise and no discretisation.
    PlainSoftmax,
    /// `softmax(logits)`, noise free.
    EvalDeterministic,
}

impl RelaxationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RelaxationMode::Stgs => "stgs",
            RelaxationMode::PlainSoftmax => "plain-softmax",
            RelaxationMode::EvalDeterministic => "eval-deterministic",
        }
    }
}

impl std::str::FromStr for RelaxationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stgs" => Ok(Self::Stgs),
            "plain-softmax" => Ok(Self::PlainSoftmax),
            "eval-deterministic" => Ok(Self::EvalDeterministic),
            other => Err(Error::Config(format!("unknown relaxation mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for RelaxationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationConfig {
    pub temperature: f64,
    pub samples: usize,
    pub mode: RelaxationMode,
}

impl RelaxationConfig {
    pub fn new(temperature: f64, samples: usize, mode: RelaxationMode) -> Result<Self> {
        if temperature.is_nan() || temperature <= 0.0 || !temperature.is_finite() {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        if samples == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        Ok(Self { temperature, samples, mode })
    }

    /// λ = 10, M = 15, straight-through.
    pub fn search_default() -> Self {
        Self { temperature: 10.0, samples: 15, mode: RelaxationMode::Stgs }
    }

    pub fn with_mode(self, mode: RelaxationMode) -> Self {
        Self { mode, ..self }
    }
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self::search_default()
    }
}

/// Categorical draw via `argmax(G_i + ln θ_i)` over unnormalised probabilities.
pub fn gumbel_max(theta: &Tensor, noise: &mut NoiseSource) -> Result<usize> {
    if let Some(bad) = theta.data().iter().find(|&&t| t.is_nan() || t <= 0.0 || !t.is_finite()) {
        return Err(Error::Domain(format!("gumbel_max needs positive finite weights, got {bad}")));
    }
    let g = noise.next_gumbel(theta.len());
    let scores: Vec<f64> = theta.data().iter().zip(&g).map(|(t, g)| t.ln() + g).collect();
    Ok(tensor::argmax(&scores))
}

/// One relaxed sample as a plain value (no tape).
pub fn gumbel_softmax_sample(
    logits: &Tensor,
    cfg: &RelaxationConfig,
    noise: &mut NoiseSource,
) -> Result<Tensor> {
    let last = logits.rank() - 1;
    match cfg.mode {
        RelaxationMode::EvalDeterministic => tensor::softmax(logits, last),
        RelaxationMode::PlainSoftmax => {
            tensor::softmax(&logits.map(|v| v / cfg.temperature), last)
        }
        RelaxationMode::Stgs => {
            let g = noise.next_gumbel(logits.len());
            let mut z = logits.clone();
            for (v, g) in z.data_mut().iter_mut().zip(g) {
                *v = (*v + g) / cfg.temperature;
            }
            tensor::softmax(&z, last)
        }
    }
}

/// Records `softmax((φ + G) / λ)` for a rank-1 logit vector.
pub fn soft_sample(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    noise: &mut NoiseSource,
) -> Result<Var> {
    let n = tape.value(logits).len();
    let g = tape.constant(Tensor::vector(noise.next_gumbel(n)));
    let z = tape.add(logits, g)?;
    let z = tape.scale(z, 1.0 / temperature);
    tape.softmax(z, 0)
}

/// Straight-through Gumbel-Softmax: forward value is `onehot(argmax S)`,
/// the adjoint flows through the soft sample `S`.
pub fn stgs_forward_backward(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    noise: &mut NoiseSource,
) -> Result<Var> {
    let soft = soft_sample(tape, logits, temperature, noise)?;
    let s = tape.value(soft);
    let mut hard = Tensor::zeros(s.shape());
    hard.data_mut()[tensor::argmax(s.data())] = 1.0;
    let hard = tape.constant(hard);
    let frozen = tape.stop_gradient(soft);
    let delta = tape.sub(soft, frozen)?;
    tape.add(hard, delta)
}

/// One architecture-weight sample for the configured mode.
pub fn relaxed_sample(
    tape: &mut Tape,
    logits: Var,
    cfg: &RelaxationConfig,
    noise: &mut NoiseSource,
) -> Result<Var> {
    match cfg.mode {
        RelaxationMode::Stgs => stgs_forward_backward(tape, logits, cfg.temperature, noise),
        RelaxationMode::PlainSoftmax => {
            let z = tape.scale(logits, 1.0 / cfg.temperature);
            tape.softmax(z, 0)
        }
        RelaxationMode::EvalDeterministic => tape.softmax(logits, 0),
    }
}

/// Mean of `M` independent samples, recorded on the tape so one backward
/// pass covers all of them. Noise-free modes and `M = 1` return the single
/// sample node unchanged.
pub fn multi_sample_average(
    tape: &mut Tape,
    logits: Var,
    cfg: &RelaxationConfig,
    noise: &mut NoiseSource,
) -> Result<Var> {
    if cfg.samples == 1 || cfg.mode != RelaxationMode::Stgs {
        return relaxed_sample(tape, logits, cfg, noise);
    }
    let mut total = relaxed_sample(tape, logits, cfg, noise)?;
    for _ in 1..cfg.samples {
        let s = relaxed_sample(tape, logits, cfg, noise)?;
        total = tape.add(total, s)?;
    }
    Ok(tape.scale(total, 1.0 / cfg.samples as f64))
}
