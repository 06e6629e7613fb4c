//! Discrete architectures extracted from a supernet.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::FusionOp;
use crate::space::{Modality, SpaceConfig, StepInput, SuperNet};
use crate::tensor::{argmax, softmax};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DerivedCell {
    /// First-level node index read by each input slot.
    pub inputs: [usize; 2],
    /// Chosen fusion op for each step node.
    pub ops: Vec<FusionOp>,
}

/// A discrete two-level architecture.
///
/// The JSON form lists the kept first-level edges as `[from, cell_node]`
/// pairs, one object per cell with its input node indices and op names,
/// plus the full space config so the document is self-contained.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DerivedArch {
    pub config: SpaceConfig,
    pub kept_edges: Vec<[usize; 2]>,
    pub cells: Vec<DerivedCell>,
    pub modality_dropped: bool,
}

/// Which modalities reach the classifier, and whether any step fuses both.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModalityReport {
    pub image: bool,
    pub speech: bool,
    pub cross_modal_fusion: bool,
}

impl DerivedArch {
    /// Builds and validates an architecture; `kept` holds `(from, cell)` pairs.
    pub fn new(config: SpaceConfig, kept: &[(usize, usize)], cells: Vec<DerivedCell>) -> Result<Self> {
        config.validate()?;
        let mut kept_edges: Vec<[usize; 2]> =
            kept.iter().map(|&(u, c)| [u, config.cell_node(c)]).collect();
        kept_edges.sort();
        kept_edges.dedup();
        let mut arch = Self { config, kept_edges, cells, modality_dropped: false };
        arch.validate()?;
        let r = arch.modality_report();
        arch.modality_dropped = !(r.image && r.speech);
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        let bad = |m: String| Err(Error::Contract(m));
        if self.cells.len() != cfg.cells {
            return bad(format!("{} cells listed, space has {}", self.cells.len(), cfg.cells));
        }
        for &[u, v] in &self.kept_edges {
            if v < cfg.backbone_nodes() || v >= cfg.total_nodes() || u >= v {
                return bad(format!("edge {u}->{v} is not a forward edge into a cell"));
            }
        }
        if cfg.fixed_edges && self.kept_edges.len() != cfg.edges().len() {
            return bad("space fixes every edge as kept".into());
        }
        for (c, cell) in self.cells.iter().enumerate() {
            for (slot, &u) in cell.inputs.iter().enumerate() {
                if u >= cfg.cell_node(c) {
                    return bad(format!("cell {c} slot {slot} reads node {u}, not an earlier node"));
                }
                if cfg.fixed_slots && u != cfg.fixed_slot_source(slot) {
                    return bad(format!("cell {c} slot {slot} is fixed by the space"));
                }
            }
            if cell.ops.len() != cfg.steps {
                return bad(format!("cell {c} has {} ops for {} steps", cell.ops.len(), cfg.steps));
            }
            if let Some(op) = cell.ops.iter().find(|op| !cfg.pool.contains(op)) {
                return bad(format!("cell {c} uses {op}, which is outside the pool"));
            }
        }
        Ok(())
    }

    /// `cell` is a cell index, not a node index.
    pub fn is_kept(&self, from: usize, cell: usize) -> bool {
        self.kept_edges.binary_search(&[from, self.config.cell_node(cell)]).is_ok()
    }

    /// Canonical compact string, unique per architecture within a space.
    pub fn fingerprint(&self) -> String {
        let mut s = String::from("E");
        for [u, v] in &self.kept_edges {
            let _ = write!(s, "{u}-{v},");
        }
        for (c, cell) in self.cells.iter().enumerate() {
            let _ = write!(s, "|C{c}:{},{}:", cell.inputs[0], cell.inputs[1]);
            let ops: Vec<&str> = cell.ops.iter().map(|o| o.name()).collect();
            s.push_str(&ops.join(","));
        }
        s
    }

    pub fn modality_report(&self) -> ModalityReport {
        let cfg = &self.config;
        let mut node_sets: Vec<BTreeSet<Modality>> = (0..cfg.backbone_nodes())
            .map(|u| cfg.modality_of(u).into_iter().collect())
            .collect();
        let mut head = BTreeSet::new();
        let mut cross = false;
        for (c, cell) in self.cells.iter().enumerate() {
            let slots: Vec<BTreeSet<Modality>> = cell
                .inputs
                .iter()
                .map(|&u| if self.is_kept(u, c) { node_sets[u].clone() } else { BTreeSet::new() })
                .collect();
            let mut steps: Vec<BTreeSet<Modality>> = Vec::new();
            for (k, op) in cell.ops.iter().enumerate() {
                let (xi, yi) = SpaceConfig::step_inputs(k);
                let get = |i: StepInput| match i {
                    StepInput::Slot(s) => slots[s].clone(),
                    StepInput::Step(j) => steps[j].clone(),
                };
                let (rx, ry) = op.reads_inputs(cfg.seq_len);
                let mut out = BTreeSet::new();
                if rx {
                    out.extend(get(xi));
                }
                if ry {
                    out.extend(get(yi));
                }
                if *op != FusionOp::Zero && out.len() == 2 && rx && ry {
                    cross = true;
                }
                steps.push(out);
            }
            let cell_set: BTreeSet<Modality> = steps.iter().flatten().copied().collect();
            head.extend(cell_set.iter().copied());
            node_sets.push(cell_set);
        }
        ModalityReport {
            image: head.contains(&Modality::Image),
            speech: head.contains(&Modality::Speech),
            cross_modal_fusion: cross,
        }
    }

    /// Scalar weights of the retrainable network: classifier head plus the
    /// weights of every chosen parameterised op.
    pub fn count_parameters(&self) -> usize {
        let c = self.config.width;
        self.config.head_params()
            + self.cells.iter().flat_map(|cell| &cell.ops).map(|op| op.param_count(c)).sum::<usize>()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DerivedArch = serde_json::from_str(text)?;
        raw.config.validate()?;
        raw.validate()?;
        let expected = {
            let r = raw.modality_report();
            !(r.image && r.speech)
        };
        if expected != raw.modality_dropped {
            return Err(Error::Contract("modality_dropped flag disagrees with the graph".into()));
        }
        Ok(raw)
    }

    /// Graphviz rendering.
    pub fn to_dot(&self) -> String {
        let cfg = &self.config;
        let mut s = String::from("digraph derived {\n  rankdir=LR;\n");
        for u in 0..cfg.backbone_nodes() {
            let _ = writeln!(s, "  {} [shape=box];", cfg.node_name(u));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            let _ = writeln!(s, "  subgraph cluster_cell{c} {{\n    label=\"cell{c}\";");
            for slot in 0..2 {
                let _ = writeln!(s, "    cell{c}_in{slot} [shape=ellipse];");
            }
            for (k, op) in cell.ops.iter().enumerate() {
                let _ = writeln!(s, "    cell{c}_step{k} [label=\"step{k}\\n{op}\"];");
            }
            let _ = writeln!(s, "    cell{c} [shape=doublecircle];\n  }}");
            for (slot, &u) in cell.inputs.iter().enumerate() {
                let style = if self.is_kept(u, c) { "solid" } else { "dashed" };
                let label = if self.is_kept(u, c) { "identity" } else { "zero" };
                let _ = writeln!(
                    s,
                    "  {} -> cell{c}_in{slot} [label=\"{label}\", style={style}];",
                    cfg.node_name(u)
                );
            }
            for (k, op) in cell.ops.iter().enumerate() {
                let (xi, yi) = SpaceConfig::step_inputs(k);
                for (i, role) in [(xi, "x"), (yi, "y")] {
                    let src = match i {
                        StepInput::Slot(sl) => format!("cell{c}_in{sl}"),
                        StepInput::Step(j) => format!("cell{c}_step{j}"),
                    };
                    let style = if *op == FusionOp::Zero { ", style=dotted" } else { "" };
                    let _ = writeln!(s, "  {src} -> cell{c}_step{k} [label=\"{role}\"{style}];");
                }
                let _ = writeln!(s, "  cell{c}_step{k} -> cell{c};");
                let _ = writeln!(s, "  cell{c}_step{k} -> head;");
            }
        }
        let _ = writeln!(s, "  head [shape=box, label=\"classifier\"];\n}}");
        s
    }
}

/// Per-edge/slot/step argmax of the architecture logits (ties to the lowest index).
pub fn derive(net: &SuperNet) -> Result<DerivedArch> {
    let cfg = &net.config;
    let pick = |id| argmax(softmax(&net.store.get(id).value, 0).expect("logits").data());
    let kept: Vec<(usize, usize)> = if cfg.fixed_edges {
        cfg.edges()
    } else {
        net.arch.alpha.iter().filter(|e| pick(e.param) == 0).map(|e| (e.from, e.cell)).collect()
    };
    let mut cells = Vec::with_capacity(cfg.cells);
    for c in 0..cfg.cells {
        let mut inputs = [cfg.fixed_slot_source(0), cfg.fixed_slot_source(1)];
        for s in net.arch.beta.iter().filter(|s| s.cell == c) {
            inputs[s.slot] = pick(s.param);
        }
        let ops = net
            .arch
            .gamma
            .iter()
            .filter(|g| g.cell == c)
            .map(|g| cfg.pool[pick(g.param)])
            .collect();
        cells.push(DerivedCell { inputs, ops });
    }
    DerivedArch::new(cfg.clone(), &kept, cells)
}
