// Architecture search on the cross-modal xor task, then retraining of the
// derived architecture.

use stgs_nas::arch::derive;
use stgs_nas::data::{generate, PlantedTaskSpec};
use stgs_nas::sampler::RelaxationConfig;
use stgs_nas::space::{SpaceConfig, SuperNet};
use stgs_nas::trainer::{retrain, search, RetrainConfig, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::var("EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(8);
    let width = 8;
    let spec = PlantedTaskSpec { width, n_train: 256, n_val: 128, n_test: 128, ..PlantedTaskSpec::default() };
    let data = generate(&spec, 1)?;

    let space = SpaceConfig { width, ..SpaceConfig::default() };
    let mut net = SuperNet::new(space, RelaxationConfig::search_default(), 1)?;
    println!("supernet: {} weights, {} architecture logit vectors", net.weight_count(),
        net.arch.alpha.len() + net.arch.beta.len() + net.arch.gamma.len());

    let cfg = TrainConfig { max_epochs: epochs, seed: 1, ..TrainConfig::default() };
    let outcome = search(&mut net, &data.train, &data.val, &cfg)?;
    for row in outcome.trace.rows.iter().step_by((epochs / 4).max(1)) {
        println!(
            "epoch {:>3}  E(alpha) {:.3}  E(gamma) {:.3}  train {:.3}  val {:.3}  acc {:.3}",
            row.epoch, row.e_alpha, row.e_gamma, row.train_loss, row.val_loss, row.val_acc
        );
    }
    println!("final derived: {}", derive(&net)?.fingerprint());
    println!("best (val acc {:.3}): {}", outcome.best_val_acc, outcome.best.fingerprint());
    println!("modalities: {:?}", outcome.best.modality_report());
    println!("{}", outcome.best.to_dot());

    let rc = RetrainConfig { epochs: epochs.max(5), ..RetrainConfig::evaluation() };
    let r = retrain(&outcome.best, &data.train, &data.val, Some(&data.test), &rc)?;
    let test = r.test.expect("test split given");
    println!("retrained: test ACC {:.3} AUC {:.3}, {} parameters", test.accuracy, test.auc, r.parameters);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("xor search");
}
