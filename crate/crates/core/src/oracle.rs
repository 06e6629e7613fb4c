//! Exhaustive enumeration and retraining of small discrete spaces.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{DerivedArch, DerivedCell};
use crate::data::BimodalDataset;
use crate::error::{Error, Result};
use crate::space::SpaceConfig;
use crate::trainer::{retrain, RetrainConfig};

pub const ENUMERATION_LIMIT: u128 = 10_000;

/// `2^E · Π_cells P_c² · |pool|^(cells·steps)`, with the edge and slot
/// factors dropped when the space fixes them.
pub fn space_size(cfg: &SpaceConfig) -> u128 {
    let mut size: u128 = 1;
    let mut mul = |f: u128| size = size.saturating_mul(f);
    if !cfg.fixed_edges {
        for _ in cfg.edges() {
            mul(2);
        }
    }
    if !cfg.fixed_slots {
        for c in 0..cfg.cells {
            let p = cfg.predecessors(c).len() as u128;
            mul(p * p);
        }
    }
    for _ in 0..cfg.cells * cfg.steps {
        mul(cfg.pool.len() as u128);
    }
    size
}

/// Every discrete architecture of `cfg`, in mixed-radix order.
pub fn enumerate_space(cfg: &SpaceConfig) -> Result<Vec<DerivedArch>> {
    cfg.validate()?;
    let size = space_size(cfg);
    if size > ENUMERATION_LIMIT {
        return Err(Error::SpaceTooLarge { size, limit: ENUMERATION_LIMIT });
    }
    let edges = cfg.edges();
    let mut radices: Vec<usize> = Vec::new();
    if !cfg.fixed_edges {
        radices.extend(std::iter::repeat_n(2, edges.len()));
    }
    if !cfg.fixed_slots {
        for c in 0..cfg.cells {
            let p = cfg.predecessors(c).len();
            radices.extend([p, p]);
        }
    }
    radices.extend(std::iter::repeat_n(cfg.pool.len(), cfg.cells * cfg.steps));

    let mut out = Vec::with_capacity(size as usize);
    let mut digits = vec![0usize; radices.len()];
    loop {
        let mut d = digits.iter().copied();
        let kept: Vec<(usize, usize)> = if cfg.fixed_edges {
            edges.clone()
        } else {
            edges.iter().copied().filter(|_| d.next() == Some(0)).collect()
        };
        let mut inputs = vec![[cfg.fixed_slot_source(0), cfg.fixed_slot_source(1)]; cfg.cells];
        if !cfg.fixed_slots {
            for slots in inputs.iter_mut() {
                slots[0] = d.next().expect("slot digit");
                slots[1] = d.next().expect("slot digit");
            }
        }
        let cells = inputs
            .into_iter()
            .map(|inputs| DerivedCell {
                inputs,
                ops: (0..cfg.steps).map(|_| cfg.pool[d.next().expect("op digit")]).collect(),
            })
            .collect();
        out.push(DerivedArch::new(cfg.clone(), &kept, cells)?);

        // increment the mixed-radix counter, last digit fastest
        let mut i = digits.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < radices[i] {
                break;
            }
            digits[i] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub fingerprint: String,
    pub arch: DerivedArch,
    pub val_accuracy: f64,
    pub val_auc: f64,
    pub parameters: usize,
    /// 1-based; tied accuracies share the better rank.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub config: SpaceConfig,
    pub retrain: RetrainConfig,
    /// Sorted by fingerprint.
    pub entries: Vec<OracleEntry>,
}

impl EnumerationReport {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&OracleEntry> {
        self.entries.iter().min_by_key(|e| e.rank)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("fingerprint,val_accuracy,val_auc,parameters,rank\n");
        for e in &self.entries {
            let _ = writeln!(s, "\"{}\",{},{},{},{}", e.fingerprint, e.val_accuracy, e.val_auc, e.parameters, e.rank);
        }
        s
    }

    /// Rank of an accuracy value against the report.
    pub fn rank_of_accuracy(&self, acc: f64) -> usize {
        1 + self.entries.iter().filter(|e| e.val_accuracy > acc).count()
    }
}

/// Retrains every architecture under one shared protocol, on up to `jobs`
/// worker threads.
pub fn run_oracle(
    archs: &[DerivedArch],
    train: &BimodalDataset,
    val: &BimodalDataset,
    cfg: &RetrainConfig,
    jobs: usize,
) -> Result<EnumerationReport> {
    let first = archs.first().ok_or_else(|| Error::Contract("no architectures to retrain".into()))?;
    let config = first.config.clone();
    if archs.iter().any(|a| a.config != config) {
        return Err(Error::Contract("architectures come from different spaces".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<(f64, f64)>> = pool.install(|| {
        archs
            .par_iter()
            .map(|a| retrain(a, train, val, None, cfg).map(|r| (r.val.accuracy, r.val.auc)))
            .collect()
    });
    let mut entries = Vec::with_capacity(archs.len());
    for (arch, r) in archs.iter().zip(results) {
        let (val_accuracy, val_auc) = r?;
        entries.push(OracleEntry {
            fingerprint: arch.fingerprint(),
            arch: arch.clone(),
            val_accuracy,
            val_auc,
            parameters: arch.count_parameters(),
            rank: 0,
        });
    }
    entries.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
    let accs: Vec<f64> = entries.iter().map(|e| e.val_accuracy).collect();
    for e in &mut entries {
        e.rank = 1 + accs.iter().filter(|&&a| a > e.val_accuracy).count();
    }
    Ok(EnumerationReport { config, retrain: cfg.clone(), entries })
}

/// 1-based rank of `arch` in the report.
pub fn rank_search_result(arch: &DerivedArch, report: &EnumerationReport) -> Result<usize> {
    if arch.config != report.config {
        return Err(Error::Contract("architecture belongs to a different space".into()));
    }
    let fp = arch.fingerprint();
    report
        .entries
        .binary_search_by(|e| e.fingerprint.cmp(&fp))
        .map(|i| report.entries[i].rank)
        .map_err(|_| Error::Contract(format!("architecture {fp} is not in the enumerated space")))
}

/// Ranks of `n` uniformly drawn architectures.
pub fn random_ranks(report: &EnumerationReport, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| report.entries[rng.random_range(0..report.len())].rank).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::FusionOp;
    use std::collections::HashSet;

    fn tiny(fixed: bool) -> SpaceConfig {
        SpaceConfig {
            image_nodes: 1,
            speech_nodes: 1,
            cells: 1,
            steps: 1,
            width: 4,
            fixed_edges: fixed,
            fixed_slots: fixed,
            ..SpaceConfig::default()
        }
    }

    #[test]
    fn forced_edges_give_one_arch_per_op() {
        let archs = enumerate_space(&tiny(true)).unwrap();
        assert_eq!(archs.len(), 5);
        let ops: Vec<FusionOp> = archs.iter().map(|a| a.cells[0].ops[0]).collect();
        assert_eq!(ops, FusionOp::POOL.to_vec());
    }

    #[test]
    fn reduced_space_counts() {
        let cfg = SpaceConfig { steps: 2, ..tiny(false) };
        assert_eq!(space_size(&cfg), 4 * 4 * 25);
        let archs = enumerate_space(&cfg).unwrap();
        assert_eq!(archs.len(), 400);
        let fps: HashSet<String> = archs.iter().map(|a| a.fingerprint()).collect();
        assert_eq!(fps.len(), 400);
    }

    #[test]
    fn guard_refuses_large_space() {
        match enumerate_space(&SpaceConfig::default()) {
            Err(Error::SpaceTooLarge { size, limit }) => {
                assert_eq!(size, space_size(&SpaceConfig::default()));
                assert_eq!(limit, ENUMERATION_LIMIT);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }
}
