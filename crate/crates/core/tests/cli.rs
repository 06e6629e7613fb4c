use std::path::Path;
use std::process::{Command, Output};

use stgs_nas::arch::{DerivedArch, DerivedCell};
use stgs_nas::data::{BimodalDataset, Provenance, Split};
use stgs_nas::manifest::{read_manifest, RunStatus};
use stgs_nas::ops::FusionOp;
use stgs_nas::space::SpaceConfig;
use stgs_nas::tensor::Tensor;

fn stgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stgs-nas")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

const TINY: [&str; 14] = [
    "--synthetic", "xor", "--width", "4", "--cells", "1", "--steps", "1",
    "--train-size", "48", "--val-size", "24", "--test-size", "24",
];

fn search_into(dir: &Path, extra: &[&str]) -> Output {
    let out = path(dir);
    let mut args = vec!["search"];
    args.extend(TINY);
    args.extend(["--epochs", "2", "--samples", "2", "--seed", "5", "--out-dir", &out]);
    args.extend(extra);
    stgs(&args)
}

#[test]
fn search_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = search_into(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["arch.json", "arch.dot", "entropy.csv", "manifest.json", "checkpoint/checkpoint.json", "checkpoint/params.bin"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("entropy.csv")).unwrap();
    assert!(csv.starts_with("epoch,E_alpha,E_gamma,train_loss,val_loss,val_acc\n"));
    assert_eq!(csv.lines().count(), 3);
    let m = read_manifest(dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(m.command, "search");
    assert_eq!(m.seed, 5);
    DerivedArch::from_json(&std::fs::read_to_string(dir.path().join("arch.json")).unwrap()).unwrap();
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = stgs(&["search", "--out-dir", &path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = stgs(&["search", "--dataset", &path(&dir.path().join("nowhere")), "--out-dir", &path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn relaxation_mode_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = search_into(dir.path(), &["--relaxation", "plain-softmax"]);
    assert_eq!(out.status.code(), Some(0));
    let m = read_manifest(dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.config["train"]["relaxation"]["mode"], "plain-softmax");
}

#[test]
fn repeated_search_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    search_into(a.path(), &[]);
    search_into(b.path(), &[]);
    for f in ["entropy.csv", "arch.json", "checkpoint/params.bin"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn derive_is_deterministic_and_matches_search() {
    let dir = tempfile::tempdir().unwrap();
    search_into(dir.path(), &[]);
    let ckpt = path(&dir.path().join("checkpoint"));
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let d = tempfile::tempdir().unwrap();
        let out = stgs(&["derive", "--checkpoint", &ckpt, "--out-dir", &path(d.path())]);
        assert_eq!(out.status.code(), Some(0));
        outputs.push((std::fs::read(d.path().join("arch.json")).unwrap(), std::fs::read(d.path().join("arch.dot")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn ablate_default_grid_has_sixteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = path(dir.path());
    let mut args = vec!["ablate"];
    args.extend(TINY);
    args.extend(["--epochs", "1", "--retrain-epochs", "1", "--out-dir", &out_dir]);
    let out = stgs(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 16);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[5], "ok");
        let file = stgs_nas::commands::ablation_arch_file(f[0].parse().unwrap(), f[1].parse().unwrap());
        let arch = DerivedArch::from_json(&std::fs::read_to_string(dir.path().join("archs").join(file)).unwrap()).unwrap();
        assert_eq!(f[4].parse::<usize>().unwrap(), arch.count_parameters());
    }
}

fn separable(n: usize, split: Split, c: usize) -> BimodalDataset {
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let mut image = vec![0.0; n * c];
    for (i, &l) in labels.iter().enumerate() {
        image[i * c] = if l == 1 { 1.0 } else { -1.0 };
    }
    BimodalDataset::new(
        Tensor::new(vec![n, 1, c], image).unwrap(),
        Tensor::zeros(&[n, 1, c]),
        labels,
        split,
        Provenance::File { path: String::new(), crc32: 0 },
    )
    .unwrap()
}

#[test]
fn eval_reaches_perfect_separation() {
    let c = 4;
    let data = tempfile::tempdir().unwrap();
    separable(64, Split::Train, c).save(data.path().join("train.bmnf")).unwrap();
    separable(32, Split::Val, c).save(data.path().join("val.bmnf")).unwrap();
    separable(32, Split::Test, c).save(data.path().join("test.bmnf")).unwrap();
    let cfg = SpaceConfig { image_nodes: 1, speech_nodes: 1, cells: 1, steps: 1, width: c, ..SpaceConfig::default() };
    let arch = DerivedArch::new(cfg.clone(), &cfg.edges(), vec![DerivedCell { inputs: [0, 1], ops: vec![FusionOp::Sum] }]).unwrap();
    let arch_path = data.path().join("arch.json");
    std::fs::write(&arch_path, arch.to_json().unwrap()).unwrap();

    let out = tempfile::tempdir().unwrap();
    let run = stgs(&[
        "eval", "--dataset", &path(data.path()), "--arch", &path(&arch_path),
        "--epochs", "30", "--out-dir", &path(out.path()),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(v["test"]["accuracy"], 1.0);
    assert_eq!(v["test"]["auc"], 1.0);
    assert_eq!(v["parameters"], arch.count_parameters());
}

#[test]
fn mismatched_or_truncated_features_are_data_errors() {
    let data = tempfile::tempdir().unwrap();
    separable(16, Split::Train, 4).save(data.path().join("train.bmnf")).unwrap();
    separable(16, Split::Val, 4).save(data.path().join("val.bmnf")).unwrap();
    let out = tempfile::tempdir().unwrap();
    let run = |width: &str| {
        stgs(&[
            "search", "--dataset", &path(data.path()), "--image-nodes", "1", "--speech-nodes", "1",
            "--width", width, "--epochs", "1", "--out-dir", &path(out.path()),
        ])
    };
    assert_eq!(run("5").status.code(), Some(3));
    let train = data.path().join("train.bmnf");
    let bytes = std::fs::read(&train).unwrap();
    std::fs::write(&train, &bytes[..bytes.len() - 9]).unwrap();
    let failed = run("4");
    assert_eq!(failed.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("offset"));
}

#[test]
fn oracle_lists_every_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let out = stgs(&[
        "oracle", "--synthetic", "xor", "--width", "4", "--steps", "1", "--fixed-edges", "--fixed-slots",
        "--train-size", "32", "--val-size", "16", "--test-size", "16", "--epochs", "1", "--out-dir", &path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn oracle_refuses_a_large_space() {
    let dir = tempfile::tempdir().unwrap();
    let out = stgs(&["oracle", "--synthetic", "xor", "--cells", "3", "--steps", "3", "--out-dir", &path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = stgs(&[
        "generate", "--synthetic", "image", "--width", "4", "--train-size", "20", "--val-size", "10",
        "--test-size", "10", "--seed", "3", "--out-dir", &path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["train.bmnf", "val.bmnf", "test.bmnf", "labels.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let again = tempfile::tempdir().unwrap();
    let out = stgs(&["replay", "--manifest", &path(&dir.path().join("manifest.json")), "--out-dir", &path(again.path())]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["train.bmnf", "val.bmnf", "test.bmnf", "labels.csv"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
    }
}
