//! Alternating optimisation of network weights and architecture logits.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{derive, DerivedArch};
use crate::autodiff::{Group, ParamId, ParamStore, Tape};
use crate::data::{BimodalDataset, Split};
use crate::error::{Error, Result};
use crate::metrics;
use crate::sampler::{NoiseSource, RelaxationConfig, RelaxationMode, SeededRng};
use crate::space::{ArchSample, SuperNet};
use crate::tensor::Tensor;

const NOISE_STREAM: u64 = 0x5eed;
const DROPOUT_STREAM: u64 = 0xd0;
const ORDER_STREAM: u64 = 0x0de7;
const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch_lr: f64,
    pub arch_weight_decay: f64,
    pub weight_lr_max: f64,
    pub weight_lr_min: f64,
    /// Recorded for completeness; Adam's first-moment decay plays this role.
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub relaxation: RelaxationConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch_lr: 0.003,
            arch_weight_decay: 0.001,
            weight_lr_max: 0.003,
            weight_lr_min: 0.0006,
            momentum: 0.9,
            weight_decay: 0.003,
            batch_size: 8,
            max_epochs: 100,
            convergence_window: 20,
            convergence_tol: 1e-3,
            relaxation: RelaxationConfig::search_default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("arch_lr", self.arch_lr),
            ("weight_lr_max", self.weight_lr_max),
            ("weight_lr_min", self.weight_lr_min),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.arch_weight_decay < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if self.convergence_window == 0 {
            return Err(Error::Config("convergence_window must be at least 1".into()));
        }
        RelaxationConfig::new(self.relaxation.temperature, self.relaxation.samples, self.relaxation.mode)?;
        Ok(())
    }

    /// Cosine decay from `weight_lr_max` at epoch 0 to `weight_lr_min` at the last epoch.
    pub fn weight_lr(&self, epoch: usize) -> f64 {
        cosine_lr(self.weight_lr_max, self.weight_lr_min, epoch, self.max_epochs)
    }
}

pub fn cosine_lr(max: f64, min: f64, epoch: usize, total: usize) -> f64 {
    if total <= 1 {
        return max;
    }
    let t = epoch.min(total - 1) as f64 / (total - 1) as f64;
    min + 0.5 * (max - min) * (1.0 + (PI * t).cos())
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: Vec<Option<Moments>>,
}

#[derive(Clone, Debug)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, state: Vec::new() }
    }

    /// Updates each listed parameter from its stored gradient.
    pub fn step(&mut self, store: &mut ParamStore, ids: &[ParamId]) {
        for &id in ids {
            if self.state.len() <= id.0 {
                self.state.resize(id.0 + 1, None);
            }
            let p = store.get_mut(id);
            let n = p.value.len();
            let st = self.state[id.0].get_or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            });
            st.t += 1;
            let bc1 = 1.0 - self.beta1.powi(st.t);
            let bc2 = 1.0 - self.beta2.powi(st.t);
            let grad = p.grad.data().to_vec();
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[i] + self.weight_decay * *w;
                st.m[i] = self.beta1 * st.m[i] + (1.0 - self.beta1) * g;
                st.v[i] = self.beta2 * st.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = st.m[i] / bc1;
                let v_hat = st.v[i] / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub e_alpha: f64,
    pub e_beta: f64,
    pub e_gamma: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub best_fingerprint: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyTrace {
    /// Entropies of the initial (uniform) logits.
    pub initial_alpha: f64,
    pub initial_gamma: f64,
    pub rows: Vec<TraceRow>,
}

impl EntropyTrace {
    pub const CSV_HEADER: &'static str = "epoch,E_alpha,E_gamma,train_loss,val_loss,val_acc";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.e_alpha, r.e_gamma, r.train_loss, r.val_loss, r.val_acc
            );
        }
        s
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn e_alpha(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.e_alpha).collect()
    }

    pub fn e_gamma(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.e_gamma).collect()
    }
}

/// True when the last `window` values of both series span less than `tol`.
pub fn converged(e_alpha: &[f64], e_gamma: &[f64], window: usize, tol: f64) -> bool {
    let flat = |xs: &[f64]| {
        if xs.len() < window {
            return false;
        }
        let tail = &xs[xs.len() - window..];
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo < tol
    };
    flat(e_alpha) && flat(e_gamma)
}

/// Which parameter groups received a non-zero gradient, and from which
/// splits, in each optimisation phase.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhaseLog {
    pub weight_groups: BTreeSet<Group>,
    pub weight_splits: BTreeSet<Split>,
    pub arch_groups: BTreeSet<Group>,
    pub arch_splits: BTreeSet<Split>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best: DerivedArch,
    pub best_val_acc: f64,
    pub trace: EntropyTrace,
    /// Epoch at which the convergence window closed, if it did.
    pub converged_at: Option<usize>,
    pub phases: PhaseLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub auc: f64,
    pub loss: f64,
}

fn non_empty(ds: &BimodalDataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset(format!("{what} split has no samples")));
    }
    Ok(())
}

fn finite(loss: f64, phase: &str, epoch: usize) -> Result<f64> {
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("{phase} loss became {loss} in epoch {epoch}")));
    }
    Ok(loss)
}

fn epoch_order(n: usize, seed: u64, epoch: usize, salt: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(ORDER_STREAM + epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// One pass over `ds` updating only parameters of the accepted groups.
#[allow(clippy::too_many_arguments)]
fn train_pass(
    net: &mut SuperNet,
    ds: &BimodalDataset,
    order: &[usize],
    batch_size: usize,
    opt: &mut Adam,
    accept: fn(Group) -> bool,
    mut arch: impl FnMut(&SuperNet, &mut Tape) -> Result<ArchSample>,
    mut dropout: Option<(f64, &mut NoiseSource)>,
    phase: &str,
    epoch: usize,
    mut log: Option<(&mut BTreeSet<Group>, &mut BTreeSet<Split>)>,
) -> Result<f64> {
    let mut total = 0.0;
    for rows in order.chunks(batch_size) {
        let (image, speech, labels) = ds.batch(rows)?;
        let mut tape = Tape::new();
        let sample = arch(net, &mut tape)?;
        let drop = dropout.as_mut().map(|(p, n)| (*p, &mut **n));
        let logits = net.forward_with(&mut tape, &sample, &image, &speech, drop)?;
        let loss = tape.softmax_cross_entropy(logits, &labels)?;
        let lv = finite(tape.value(loss).item()?, phase, epoch)?;
        total += lv * rows.len() as f64;
        net.store.zero_grad();
        tape.backward_into(loss, &mut net.store, accept)?;
        if let Some((groups, splits)) = log.as_mut() {
            splits.insert(ds.split);
            for (_, p) in net.store.iter() {
                if p.grad.data().iter().any(|&g| g != 0.0) {
                    groups.insert(p.group);
                }
            }
        }
        let ids: Vec<ParamId> = tape
            .params()
            .into_iter()
            .filter(|&id| accept(net.store.get(id).group))
            .collect();
        opt.step(&mut net.store, &ids);
    }
    net.store.zero_grad();
    Ok(total / order.len() as f64)
}

fn is_weight(g: Group) -> bool {
    g == Group::Weights
}

fn is_arch(g: Group) -> bool {
    g.is_arch()
}

/// Bi-level search; the relaxation mode in `cfg` selects straight-through
/// or the plain-softmax baseline.
pub fn search(
    net: &mut SuperNet,
    train: &BimodalDataset,
    val: &BimodalDataset,
    cfg: &TrainConfig,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    non_empty(train, "train")?;
    non_empty(val, "val")?;
    let relax = cfg.relaxation;
    net.relaxation = relax;
    let mut noise = NoiseSource::new(SeededRng::new(cfg.seed, NOISE_STREAM));
    let mut w_opt = Adam::new(cfg.weight_lr_max, cfg.weight_decay);
    let mut a_opt = Adam::new(cfg.arch_lr, cfg.arch_weight_decay);

    let mut trace = EntropyTrace {
        initial_alpha: net.entropy_alpha(),
        initial_gamma: net.entropy_gamma(),
        rows: Vec::new(),
    };
    let mut best: Option<(DerivedArch, f64)> = None;
    let mut converged_at = None;
    let mut phases = PhaseLog::default();

    for epoch in 0..cfg.max_epochs {
        w_opt.lr = cfg.weight_lr(epoch);
        let order = epoch_order(train.len(), cfg.seed, epoch, 0);
        let train_loss = train_pass(
            net,
            train,
            &order,
            cfg.batch_size,
            &mut w_opt,
            is_weight,
            |n, t| n.sample_arch(t, &relax, &mut noise),
            None,
            "train",
            epoch,
            Some((&mut phases.weight_groups, &mut phases.weight_splits)),
        )?;
        let order = epoch_order(val.len(), cfg.seed, epoch, 1);
        let val_loss = train_pass(
            net,
            val,
            &order,
            cfg.batch_size,
            &mut a_opt,
            is_arch,
            |n, t| n.sample_arch(t, &relax, &mut noise),
            None,
            "val",
            epoch,
            Some((&mut phases.arch_groups, &mut phases.arch_splits)),
        )?;

        let arch = derive(net)?;
        let val_acc = evaluate_arch(net, &arch, val)?.accuracy;
        if best.as_ref().is_none_or(|(_, acc)| val_acc > *acc) {
            best = Some((arch, val_acc));
        }
        let (best_arch, _) = best.as_ref().expect("set above");
        trace.rows.push(TraceRow {
            epoch,
            e_alpha: net.entropy_alpha(),
            e_beta: net.entropy_beta(),
            e_gamma: net.entropy_gamma(),
            train_loss,
            val_loss,
            val_acc,
            best_fingerprint: best_arch.fingerprint(),
        });
        if converged(&trace.e_alpha(), &trace.e_gamma(), cfg.convergence_window, cfg.convergence_tol) {
            converged_at = Some(epoch);
            break;
        }
    }
    let (best, best_val_acc) = best.expect("at least one epoch");
    Ok(SearchOutcome { best, best_val_acc, trace, converged_at, phases })
}

/// [`search`] with the relaxation forced to noise-free tempered softmax.
pub fn baseline_softmax_search(
    net: &mut SuperNet,
    train: &BimodalDataset,
    val: &BimodalDataset,
    cfg: &TrainConfig,
) -> Result<SearchOutcome> {
    let cfg = TrainConfig {
        relaxation: cfg.relaxation.with_mode(RelaxationMode::PlainSoftmax),
        ..cfg.clone()
    };
    search(net, train, val, &cfg)
}

fn score_batches(
    ds: &BimodalDataset,
    mut logits_of: impl FnMut(&Tensor, &Tensor, &[usize]) -> Result<(Tensor, f64)>,
) -> Result<EvalResult> {
    non_empty(ds, "evaluation")?;
    let mut preds = Vec::with_capacity(ds.len());
    let mut scores = Vec::with_capacity(ds.len());
    let mut loss = 0.0;
    let rows: Vec<usize> = (0..ds.len()).collect();
    for chunk in rows.chunks(EVAL_BATCH) {
        let (image, speech, labels) = ds.batch(chunk)?;
        let (logits, l) = logits_of(&image, &speech, &labels)?;
        loss += l * chunk.len() as f64;
        for row in logits.data().chunks_exact(2) {
            preds.push(usize::from(row[1] > row[0]));
            scores.push(row[1] - row[0]);
        }
    }
    let labels: Vec<usize> = ds.labels.iter().map(|&l| usize::from(l)).collect();
    Ok(EvalResult {
        accuracy: metrics::accuracy(&preds, &labels)?,
        auc: metrics::auc(&scores, &labels)?,
        loss: loss / ds.len() as f64,
    })
}

/// Scores a discrete architecture using the network's current weights.
pub fn evaluate_arch(net: &SuperNet, arch: &DerivedArch, ds: &BimodalDataset) -> Result<EvalResult> {
    score_batches(ds, |image, speech, labels| {
        let mut tape = Tape::new();
        let sample = net.fixed_arch(&mut tape, arch)?;
        let logits = net.forward_with(&mut tape, &sample, image, speech, None)?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        Ok((tape.value(logits).clone(), tape.value(loss).item()?))
    })
}

/// Scores the relaxed supernet with deterministic `softmax(φ)` weights.
pub fn evaluate_supernet(net: &SuperNet, ds: &BimodalDataset) -> Result<EvalResult> {
    let relax = net.relaxation.with_mode(RelaxationMode::EvalDeterministic);
    score_batches(ds, |image, speech, labels| {
        let mut tape = Tape::new();
        let mut noise = NoiseSource::new(SeededRng::new(0, 0));
        let logits = net.forward(&mut tape, image, speech, &relax, &mut noise)?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        Ok((tape.value(logits).clone(), tape.value(loss).item()?))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Stop after this many epochs without a validation-accuracy gain.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl RetrainConfig {
    /// 100 epochs, batch 16, dropout 0.2.
    pub fn evaluation() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            lr_max: 0.003,
            lr_min: 0.0006,
            weight_decay: 0.003,
            dropout: 0.2,
            patience: None,
            seed: 0,
        }
    }

    /// 30 epochs with early stopping on a validation plateau.
    pub fn oracle() -> Self {
        Self { epochs: 30, patience: Some(5), ..Self::evaluation() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainResult {
    pub val: EvalResult,
    pub test: Option<EvalResult>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub parameters: usize,
}

/// Trains fresh weights for a fixed discrete architecture. Metrics are taken
/// at the epoch of best validation accuracy.
pub fn retrain(
    arch: &DerivedArch,
    train: &BimodalDataset,
    val: &BimodalDataset,
    test: Option<&BimodalDataset>,
    cfg: &RetrainConfig,
) -> Result<RetrainResult> {
    non_empty(train, "train")?;
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::Config("retrain needs epochs, batch_size > 0 and dropout in [0, 1)".into()));
    }
    arch.validate()?;
    let mut net = SuperNet::new(arch.config.clone(), RelaxationConfig::default(), cfg.seed)?;
    let mut opt = Adam::new(cfg.lr_max, cfg.weight_decay);
    let mut drop_noise = NoiseSource::new(SeededRng::new(cfg.seed, DROPOUT_STREAM));
    let mut best: Option<(EvalResult, Option<EvalResult>, usize)> = None;
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        opt.lr = cosine_lr(cfg.lr_max, cfg.lr_min, epoch, cfg.epochs);
        let order = epoch_order(train.len(), cfg.seed, epoch, 2);
        train_pass(
            &mut net,
            train,
            &order,
            cfg.batch_size,
            &mut opt,
            is_weight,
            |n, t| n.fixed_arch(t, arch),
            Some((cfg.dropout, &mut drop_noise)),
            "retrain",
            epoch,
            None,
        )?;
        epochs_run = epoch + 1;
        let v = evaluate_arch(&net, arch, val)?;
        if best.as_ref().is_none_or(|(b, _, _)| v.accuracy > b.accuracy) {
            let t = test.map(|t| evaluate_arch(&net, arch, t)).transpose()?;
            best = Some((v, t, epoch));
        }
        if let (Some(p), Some((_, _, be))) = (cfg.patience, &best) {
            if epoch - be >= p {
                break;
            }
        }
    }
    let (val, test, best_epoch) = best.expect("at least one epoch");
    Ok(RetrainResult { val, test, best_epoch, epochs_run, parameters: arch.count_parameters() })
}
