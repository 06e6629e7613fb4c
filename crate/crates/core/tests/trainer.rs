use std::collections::BTreeSet;

use stgs_nas::autodiff::Group;
use stgs_nas::data::{generate, load_features, BimodalDataset, PlantedRule, PlantedTaskSpec, Split};
use stgs_nas::metrics::auc;
use stgs_nas::ops::FusionOp;
use stgs_nas::sampler::{RelaxationConfig, RelaxationMode, SeededRng};
use stgs_nas::space::{SpaceConfig, SuperNet};
use stgs_nas::trainer::{retrain, search, RetrainConfig, TrainConfig};
use stgs_nas::Error;

fn tiny_task(seed: u64) -> (BimodalDataset, BimodalDataset) {
    let spec = PlantedTaskSpec { width: 4, n_train: 64, n_val: 32, n_test: 8, ..PlantedTaskSpec::default() };
    let s = generate(&spec, seed).unwrap();
    (s.train, s.val)
}

fn tiny_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 4,
        seed,
        relaxation: RelaxationConfig::new(10.0, 3, RelaxationMode::Stgs).unwrap(),
        ..TrainConfig::default()
    }
}

fn tiny_space() -> SpaceConfig {
    SpaceConfig { width: 4, ..SpaceConfig::default() }
}

#[test]
fn phases_touch_only_their_own_groups_and_splits() {
    let (train, val) = tiny_task(1);
    let mut net = SuperNet::new(tiny_space(), RelaxationConfig::default(), 1).unwrap();
    let out = search(&mut net, &train, &val, &tiny_cfg(1)).unwrap();
    assert_eq!(out.phases.weight_groups, BTreeSet::from([Group::Weights]));
    assert_eq!(out.phases.weight_splits, BTreeSet::from([Split::Train]));
    assert_eq!(out.phases.arch_groups, BTreeSet::from([Group::Alpha, Group::Beta, Group::Gamma]));
    assert_eq!(out.phases.arch_splits, BTreeSet::from([Split::Val]));
}

#[test]
fn best_architecture_tracks_the_best_validation_accuracy() {
    let (train, val) = tiny_task(2);
    let mut net = SuperNet::new(tiny_space(), RelaxationConfig::default(), 2).unwrap();
    let out = search(&mut net, &train, &val, &tiny_cfg(2)).unwrap();
    let accs: Vec<f64> = out.trace.rows.iter().map(|r| r.val_acc).collect();
    let max = accs.iter().copied().fold(f64::MIN, f64::max);
    assert_eq!(out.best_val_acc, max);
    let mut best = f64::MIN;
    for w in out.trace.rows.windows(2) {
        best = best.max(w[0].val_acc);
        if w[1].best_fingerprint != w[0].best_fingerprint {
            assert!(w[1].val_acc > best, "best changed without improvement");
        }
    }
    assert_eq!(out.trace.last().unwrap().best_fingerprint, out.best.fingerprint());
}

#[test]
fn search_is_reproducible() {
    let (train, val) = tiny_task(3);
    let run = || {
        let mut net = SuperNet::new(tiny_space(), RelaxationConfig::default(), 3).unwrap();
        let out = search(&mut net, &train, &val, &tiny_cfg(3)).unwrap();
        (out.trace.to_csv(), out.best)
    };
    assert_eq!(run(), run());
}

#[test]
fn single_op_pool_has_zero_op_entropy() {
    let (train, val) = tiny_task(4);
    let space = SpaceConfig { pool: vec![FusionOp::Sum], ..tiny_space() };
    let mut net = SuperNet::new(space, RelaxationConfig::default(), 4).unwrap();
    let out = search(&mut net, &train, &val, &tiny_cfg(4)).unwrap();
    assert_eq!(out.trace.initial_gamma, 0.0);
    assert!(out.trace.rows.iter().all(|r| r.e_gamma == 0.0));
    assert!(out.best.cells.iter().flat_map(|c| &c.ops).all(|&op| op == FusionOp::Sum));
}

#[test]
fn empty_splits_are_rejected() {
    let (_, val) = tiny_task(5);
    assert!(matches!(val.truncated(0), Err(Error::EmptyDataset(_))));
    let mut bytes = val.to_bytes();
    bytes[6..10].copy_from_slice(&0u32.to_le_bytes());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("val.bmnf");
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(load_features(&path, Split::Val, None), Err(Error::EmptyDataset(_))));
}

#[test]
fn random_scores_give_chance_auc() {
    let rng = SeededRng::new(6, 0);
    let n = 20_000;
    let scores: Vec<f64> = (0..n).map(|i| rng.uniform(i)).collect();
    let labels: Vec<usize> = (0..n).map(|i| (rng.bits(1 << 40 | i) & 1) as usize).collect();
    let a = auc(&scores, &labels).unwrap();
    assert!((a - 0.5).abs() < 0.03, "auc {a}");
}

/// Full-batch logistic regression on one modality's flattened features,
/// returning held-out accuracy.
fn logistic_probe(train: &BimodalDataset, test: &BimodalDataset, image: bool) -> f64 {
    let feats = |ds: &BimodalDataset| -> Vec<Vec<f64>> {
        let t = if image { &ds.image } else { &ds.speech };
        let d = t.shape()[1] * t.shape()[2];
        t.data().chunks(d).map(|r| r.to_vec()).collect()
    };
    let (x, xt) = (feats(train), feats(test));
    let d = x[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..300 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (row, &y) in x.iter().zip(&train.labels) {
            let z: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let err = 1.0 / (1.0 + (-z).exp()) - y as f64;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += err * v;
            }
            gb += err;
        }
        let n = x.len() as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= 0.5 * g / n;
        }
        b -= 0.5 * gb / n;
    }
    let correct = xt
        .iter()
        .zip(&test.labels)
        .filter(|(row, &y)| {
            let z: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            (z > 0.0) == (y == 1)
        })
        .count();
    correct as f64 / xt.len() as f64
}

fn probe_task(rule: PlantedRule) -> (BimodalDataset, BimodalDataset) {
    let spec = PlantedTaskSpec {
        rule,
        width: 8,
        noise_sigma: 0.0,
        n_train: 10_000,
        n_val: 4_000,
        n_test: 16,
        ..PlantedTaskSpec::default()
    };
    let s = generate(&spec, 7).unwrap();
    (s.train, s.val)
}

#[test]
fn xor_task_defeats_single_modality_probes() {
    let (train, val) = probe_task(PlantedRule::XorCrossmodal);
    for image in [true, false] {
        let acc = logistic_probe(&train, &val, image);
        assert!(acc <= 0.55, "probe on {} reached {acc}", if image { "image" } else { "speech" });
    }
}

#[test]
fn unimodal_task_is_solved_by_its_own_modality() {
    let (train, val) = probe_task(PlantedRule::UnimodalImage);
    assert!(logistic_probe(&train, &val, true) > 0.9);
    assert!(logistic_probe(&train, &val, false) <= 0.55);
}

#[test]
fn shuffled_labels_leave_nothing_to_learn() {
    let spec = PlantedTaskSpec { width: 8, n_train: 1024, n_val: 4096, n_test: 16, ..PlantedTaskSpec::default() };
    let s = generate(&spec, 8).unwrap();
    let train = s.train.with_shuffled_labels(8);
    let space = SpaceConfig { width: 8, ..SpaceConfig::default() };
    let net = SuperNet::new(space, RelaxationConfig::default(), 8).unwrap();
    let arch = stgs_nas::arch::derive(&net).unwrap();
    let rc = RetrainConfig { epochs: 5, ..RetrainConfig::evaluation() };
    let r = retrain(&arch, &train, &s.val, None, &rc).unwrap();
    assert!((r.val.auc - 0.5).abs() < 0.03, "auc {}", r.val.auc);
}
