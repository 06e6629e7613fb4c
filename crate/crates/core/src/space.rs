//! The relaxed two-level supernet.
//!
//! First level: the node sequence is `image_0.., speech_0.., cell_0..`.
//! Every cell has two input slots. A slot receives
//! `Σ_u β̂[slot][u] · α̂[(u, cell)][Identity] · node_u` over all earlier
//! nodes `u`, where `α̂` and `β̂` are relaxed samples of the edge and slot
//! logits. (The `ZeroEdge` term contributes `α̂[ZeroEdge] · 0`.)
//!
//! Second level: step node `k` of a cell fuses two tensors with the
//! `γ̂`-weighted sum of the fusion pool. Step 0 reads `(in0, in1)`; step
//! `k > 0` reads `(step_{k-1}, in_{(k+1) % 2})`, so the chain alternates
//! between re-reading the two inputs.
//!
//! A cell feeds later cells with the mean of its step nodes. The classifier
//! sees every step node of every cell concatenated along features, averaged
//! over time, then a single linear layer.

use serde::{Deserialize, Serialize};

use crate::arch::DerivedArch;
use crate::autodiff::{Group, ParamId, ParamStore, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::ops::{apply_op, uniform_init, EdgeOp, FusionOp, OpWeights};
use crate::sampler::{multi_sample_average, NoiseSource, RelaxationConfig, SeededRng};
use crate::tensor::{self, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub image_nodes: usize,
    pub speech_nodes: usize,
    pub cells: usize,
    pub steps: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub seq_len: usize,
    pub pool: Vec<FusionOp>,
    /// Every first-level edge is kept; no α logits are learned.
    #[serde(default)]
    pub fixed_edges: bool,
    /// Slot 0 reads the first image node and slot 1 the first speech node;
    /// no β logits are learned.
    #[serde(default)]
    pub fixed_slots: bool,
}

fn one() -> usize {
    1
}

pub const NUM_CLASSES: usize = 2;

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            image_nodes: 2,
            speech_nodes: 2,
            cells: 2,
            steps: 2,
            width: 64,
            seq_len: 1,
            pool: FusionOp::POOL.to_vec(),
            fixed_edges: false,
            fixed_slots: false,
        }
    }
}

/// Where a step node reads one of its operands from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepInput {
    Slot(usize),
    Step(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    Image,
    Speech,
}

impl SpaceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.image_nodes == 0 || self.speech_nodes == 0 {
            return bad("each modality needs at least one feature node");
        }
        if self.cells == 0 {
            return bad("at least one cell is required");
        }
        if self.steps == 0 {
            return bad("cells need at least one step node");
        }
        if self.width == 0 || self.seq_len == 0 {
            return bad("feature width and sequence length must be positive");
        }
        if self.pool.is_empty() {
            return bad("fusion pool is empty");
        }
        let mut seen = self.pool.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.pool.len() {
            return bad("fusion pool lists an op twice");
        }
        Ok(())
    }

    pub fn backbone_nodes(&self) -> usize {
        self.image_nodes + self.speech_nodes
    }

    pub fn total_nodes(&self) -> usize {
        self.backbone_nodes() + self.cells
    }

    /// First-level node index of cell `c`.
    pub fn cell_node(&self, c: usize) -> usize {
        self.backbone_nodes() + c
    }

    /// Nodes that may feed cell `c`: every node before it.
    pub fn predecessors(&self, c: usize) -> std::ops::Range<usize> {
        0..self.cell_node(c)
    }

    pub fn modality_of(&self, node: usize) -> Option<Modality> {
        if node < self.image_nodes {
            Some(Modality::Image)
        } else if node < self.backbone_nodes() {
            Some(Modality::Speech)
        } else {
            None
        }
    }

    pub fn node_name(&self, node: usize) -> String {
        if node < self.image_nodes {
            format!("image{node}")
        } else if node < self.backbone_nodes() {
            format!("speech{}", node - self.image_nodes)
        } else {
            format!("cell{}", node - self.backbone_nodes())
        }
    }

    /// All first-level edges `(u, cell)` in canonical order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.cells)
            .flat_map(|c| self.predecessors(c).map(move |u| (u, c)))
            .collect()
    }

    /// Predecessor read by a slot when slots are fixed.
    pub fn fixed_slot_source(&self, slot: usize) -> usize {
        if slot == 0 {
            0
        } else {
            self.image_nodes
        }
    }

    pub fn step_inputs(step: usize) -> (StepInput, StepInput) {
        if step == 0 {
            (StepInput::Slot(0), StepInput::Slot(1))
        } else {
            (StepInput::Step(step - 1), StepInput::Slot((step + 1) % 2))
        }
    }

    /// Number of step nodes the classifier concatenates.
    pub fn head_nodes(&self) -> usize {
        self.cells * self.steps
    }

    pub fn head_params(&self) -> usize {
        NUM_CLASSES * self.head_nodes() * self.width + NUM_CLASSES
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeLogits {
    pub from: usize,
    pub cell: usize,
    pub param: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotLogits {
    pub cell: usize,
    pub slot: usize,
    pub param: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLogits {
    pub cell: usize,
    pub step: usize,
    pub param: ParamId,
}

/// Handles of the three architecture-logit families.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchParams {
    pub alpha: Vec<EdgeLogits>,
    pub beta: Vec<SlotLogits>,
    pub gamma: Vec<StepLogits>,
}

/// Architecture weights recorded on a tape for one forward pass.
#[derive(Clone, Debug)]
pub struct ArchSample {
    /// Per edge, the two-way keep/drop weights; `None` means always kept.
    pub alpha: Vec<Option<Var>>,
    /// Per cell slot, weights over that cell's predecessors; `None` means fixed.
    pub beta: Vec<Option<Var>>,
    /// Per step node, weights over the fusion pool.
    pub gamma: Vec<Var>,
    /// Constant weights: zero-weight terms are skipped entirely.
    pub fixed: bool,
}

#[derive(Clone, Debug)]
pub struct SuperNet {
    pub config: SpaceConfig,
    pub relaxation: RelaxationConfig,
    pub store: ParamStore,
    pub arch: ArchParams,
    /// `[cell][step]`
    pub op_weights: Vec<Vec<OpWeights>>,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Stream ids reserved for parameter initialisation.
pub const INIT_STREAM: u64 = 0x1417;

impl SuperNet {
    pub fn new(config: SpaceConfig, relaxation: RelaxationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut arch = ArchParams::default();
        if !config.fixed_edges {
            for (from, cell) in config.edges() {
                let param = store.add(
                    format!("alpha.{}->{}", config.node_name(from), config.node_name(config.cell_node(cell))),
                    Group::Alpha,
                    Tensor::zeros(&[EdgeOp::POOL.len()]),
                );
                arch.alpha.push(EdgeLogits { from, cell, param });
            }
        }
        if !config.fixed_slots {
            for cell in 0..config.cells {
                for slot in 0..2 {
                    let param = store.add(
                        format!("beta.cell{cell}.in{slot}"),
                        Group::Beta,
                        Tensor::zeros(&[config.predecessors(cell).len()]),
                    );
                    arch.beta.push(SlotLogits { cell, slot, param });
                }
            }
        }
        for cell in 0..config.cells {
            for step in 0..config.steps {
                let param = store.add(
                    format!("gamma.cell{cell}.step{step}"),
                    Group::Gamma,
                    Tensor::zeros(&[config.pool.len()]),
                );
                arch.gamma.push(StepLogits { cell, step, param });
            }
        }
        let mut init = NoiseSource::new(SeededRng::new(seed, INIT_STREAM));
        let op_weights = (0..config.cells)
            .map(|c| {
                (0..config.steps)
                    .map(|s| {
                        OpWeights::allocate(
                            &mut store,
                            &format!("cell{c}.step{s}"),
                            config.width,
                            &config.pool,
                            &mut init,
                        )
                    })
                    .collect()
            })
            .collect();
        let fan_in = config.head_nodes() * config.width;
        let head_w = store.add(
            "head.w",
            Group::Weights,
            uniform_init(&[fan_in, NUM_CLASSES], fan_in, &mut init),
        );
        let head_b = store.add("head.b", Group::Weights, Tensor::zeros(&[NUM_CLASSES]));
        Ok(Self { config, relaxation, store, arch, op_weights, head_w, head_b })
    }

    /// Records relaxed architecture weights according to `relax`.
    pub fn sample_arch(
        &self,
        tape: &mut Tape,
        relax: &RelaxationConfig,
        noise: &mut NoiseSource,
    ) -> Result<ArchSample> {
        let n_edges = self.config.edges().len();
        let mut alpha = vec![None; n_edges];
        for (i, e) in self.arch.alpha.iter().enumerate() {
            let logits = tape.param(&self.store, e.param);
            alpha[i] = Some(multi_sample_average(tape, logits, relax, noise)?);
        }
        let mut beta = vec![None; 2 * self.config.cells];
        for (i, s) in self.arch.beta.iter().enumerate() {
            let logits = tape.param(&self.store, s.param);
            beta[i] = Some(multi_sample_average(tape, logits, relax, noise)?);
        }
        let mut gamma = Vec::with_capacity(self.arch.gamma.len());
        for s in &self.arch.gamma {
            let logits = tape.param(&self.store, s.param);
            gamma.push(multi_sample_average(tape, logits, relax, noise)?);
        }
        Ok(ArchSample { alpha, beta, gamma, fixed: false })
    }

    /// Records the one-hot weights of a discrete architecture.
    pub fn fixed_arch(&self, tape: &mut Tape, arch: &DerivedArch) -> Result<ArchSample> {
        if arch.config != self.config {
            return Err(Error::Config("derived architecture was built for another space".into()));
        }
        let one_hot = |n: usize, i: usize| {
            let mut t = Tensor::zeros(&[n]);
            t.data_mut()[i] = 1.0;
            t
        };
        let alpha = self
            .config
            .edges()
            .into_iter()
            .map(|(u, c)| {
                let keep = arch.is_kept(u, c);
                Some(tape.constant(one_hot(2, usize::from(!keep))))
            })
            .collect();
        let mut beta = Vec::with_capacity(2 * self.config.cells);
        for (c, cell) in arch.cells.iter().enumerate() {
            for slot in 0..2 {
                let n = self.config.predecessors(c).len();
                beta.push(Some(tape.constant(one_hot(n, cell.inputs[slot]))));
            }
        }
        let mut gamma = Vec::new();
        for cell in &arch.cells {
            for op in &cell.ops {
                let idx = self
                    .config
                    .pool
                    .iter()
                    .position(|p| p == op)
                    .ok_or_else(|| Error::Contract(format!("op {op} not in pool")))?;
                gamma.push(tape.constant(one_hot(self.config.pool.len(), idx)));
            }
        }
        Ok(ArchSample { alpha, beta, gamma, fixed: true })
    }

    fn check_inputs(&self, image: &Tensor, speech: &Tensor) -> Result<usize> {
        let c = &self.config;
        let check = |t: &Tensor, nodes: usize, what: &str| -> Result<usize> {
            let s = t.shape();
            let ok = match s.len() {
                3 => c.seq_len == 1 && s[1] == nodes && s[2] == c.width,
                4 => s[1] == nodes && s[2] == c.seq_len && s[3] == c.width,
                _ => false,
            };
            if !ok {
                return shape_err(format!(
                    "{what} features {s:?} do not match {nodes} nodes × T={} × C={}",
                    c.seq_len, c.width
                ));
            }
            Ok(s[0])
        };
        let bi = check(image, c.image_nodes, "image")?;
        let bs = check(speech, c.speech_nodes, "speech")?;
        if bi != bs {
            return shape_err(format!("batch sizes differ: {bi} vs {bs}"));
        }
        Ok(bi)
    }

    /// Relaxed forward pass to `[B, 2]` logits.
    pub fn forward(
        &self,
        tape: &mut Tape,
        image: &Tensor,
        speech: &Tensor,
        relax: &RelaxationConfig,
        noise: &mut NoiseSource,
    ) -> Result<Var> {
        self.check_inputs(image, speech)?;
        let sample = self.sample_arch(tape, relax, noise)?;
        self.forward_with(tape, &sample, image, speech, None)
    }

    /// Forward pass under explicit architecture weights. With `dropout`,
    /// inverted dropout is applied to the classifier input.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        sample: &ArchSample,
        image: &Tensor,
        speech: &Tensor,
        dropout: Option<(f64, &mut NoiseSource)>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let batch = self.check_inputs(image, speech)?;
        let (t, c) = (cfg.seq_len, cfg.width);
        let node_shape = [batch, t, c];

        let image_v = tape.constant(image.clone());
        let speech_v = tape.constant(speech.clone());
        let mut nodes: Vec<Var> = Vec::with_capacity(cfg.total_nodes());
        for (src, count) in [(image_v, cfg.image_nodes), (speech_v, cfg.speech_nodes)] {
            for i in 0..count {
                let n = tape.narrow(src, 1, i, 1)?;
                nodes.push(tape.reshape(n, &node_shape)?);
            }
        }

        let edges = cfg.edges();
        let edge_index = |u: usize, cell: usize| {
            edges.iter().position(|&e| e == (u, cell)).expect("edge exists")
        };
        let weight_of = |tape: &Tape, v: Var, i: usize| tape.value(v).data()[i];

        let mut head_inputs = Vec::with_capacity(cfg.head_nodes());
        for cell in 0..cfg.cells {
            let mut slots = [None, None];
            for (slot, out) in slots.iter_mut().enumerate() {
                let beta = sample.beta[2 * cell + slot];
                let mut acc: Option<Var> = None;
                for u in cfg.predecessors(cell) {
                    let bcoef = match beta {
                        Some(b) => Some(b),
                        None if u == cfg.fixed_slot_source(slot) => None,
                        None => continue,
                    };
                    let acoef = sample.alpha[edge_index(u, cell)];
                    if sample.fixed {
                        let bw = bcoef.map_or(1.0, |b| weight_of(tape, b, u));
                        let aw = acoef.map_or(1.0, |a| weight_of(tape, a, 0));
                        if bw * aw == 0.0 {
                            continue;
                        }
                    }
                    let b_scalar = match bcoef {
                        Some(b) => Some(tape.index(b, u)?),
                        None => None,
                    };
                    let a_scalar = match acoef {
                        Some(a) => Some(tape.index(a, 0)?),
                        None => None,
                    };
                    let coef = match (b_scalar, a_scalar) {
                        (Some(b), Some(a)) => Some(tape.mul(b, a)?),
                        (Some(s), None) | (None, Some(s)) => Some(s),
                        (None, None) => None,
                    };
                    let term = match coef {
                        Some(k) => tape.mul_scalar(nodes[u], k)?,
                        None => nodes[u],
                    };
                    acc = Some(match acc {
                        Some(prev) => tape.add(prev, term)?,
                        None => term,
                    });
                }
                *out = Some(match acc {
                    Some(v) => v,
                    None => tape.constant(Tensor::zeros(&node_shape)),
                });
            }
            let slots = [slots[0].expect("slot"), slots[1].expect("slot")];

            let mut steps: Vec<Var> = Vec::with_capacity(cfg.steps);
            for step in 0..cfg.steps {
                let (xi, yi) = SpaceConfig::step_inputs(step);
                let pick = |i: StepInput| match i {
                    StepInput::Slot(s) => slots[s],
                    StepInput::Step(k) => steps[k],
                };
                let (x, y) = (pick(xi), pick(yi));
                let gamma = sample.gamma[cell * cfg.steps + step];
                let weights = &self.op_weights[cell][step];
                let mut acc: Option<Var> = None;
                for (oi, &op) in cfg.pool.iter().enumerate() {
                    if sample.fixed && weight_of(tape, gamma, oi) == 0.0 {
                        continue;
                    }
                    let out = apply_op(tape, &self.store, op, x, y, weights)?;
                    let w = tape.index(gamma, oi)?;
                    let term = tape.mul_scalar(out, w)?;
                    acc = Some(match acc {
                        Some(prev) => tape.add(prev, term)?,
                        None => term,
                    });
                }
                steps.push(match acc {
                    Some(v) => v,
                    None => tape.constant(Tensor::zeros(&node_shape)),
                });
            }

            let mut cell_sum = steps[0];
            for &s in &steps[1..] {
                cell_sum = tape.add(cell_sum, s)?;
            }
            nodes.push(tape.scale(cell_sum, 1.0 / cfg.steps as f64));
            head_inputs.extend(steps);
        }

        let feats = tape.concat(&head_inputs, 2)?;
        let mut pooled = tape.mean_axis(feats, 1)?;
        if let Some((p, noise)) = dropout {
            if p > 0.0 {
                let shape = tape.value(pooled).shape().to_vec();
                let keep = 1.0 - p;
                let mask: Vec<f64> = (0..shape.iter().product::<usize>())
                    .map(|_| if noise.next_uniform() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let mask = tape.constant(Tensor::new(shape, mask)?);
                pooled = tape.mul(pooled, mask)?;
            }
        }
        let w = tape.param(&self.store, self.head_w);
        let b = tape.param(&self.store, self.head_b);
        let logits = tape.matmul(pooled, w)?;
        tape.add_row_bias(logits, b)
    }

    fn probs(&self, id: ParamId) -> Vec<f64> {
        tensor::softmax(&self.store.get(id).value, 0).expect("logit vector").into_data()
    }

    /// Σ over edges of the entropy of `softmax(α)`.
    pub fn entropy_alpha(&self) -> f64 {
        self.arch.alpha.iter().map(|e| tensor::entropy(&self.probs(e.param))).sum()
    }

    pub fn entropy_beta(&self) -> f64 {
        self.arch.beta.iter().map(|s| tensor::entropy(&self.probs(s.param))).sum()
    }

    pub fn entropy_gamma(&self) -> f64 {
        self.arch.gamma.iter().map(|s| tensor::entropy(&self.probs(s.param))).sum()
    }

    pub fn edge_probs(&self) -> Vec<Vec<f64>> {
        self.arch.alpha.iter().map(|e| self.probs(e.param)).collect()
    }

    pub fn slot_probs(&self) -> Vec<Vec<f64>> {
        self.arch.beta.iter().map(|s| self.probs(s.param)).collect()
    }

    pub fn op_probs(&self) -> Vec<Vec<f64>> {
        self.arch.gamma.iter().map(|s| self.probs(s.param)).collect()
    }

    /// Number of scalar weights (ω) in the supernet.
    pub fn weight_count(&self) -> usize {
        self.store.scalar_count(Group::Weights)
    }
}
