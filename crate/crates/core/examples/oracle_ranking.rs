// Brute-force ground truth: enumerate a tiny space, retrain every member,
// and rank a searched architecture against it.

use stgs_nas::data::{generate, PlantedTaskSpec};
use stgs_nas::oracle::{enumerate_space, random_ranks, rank_search_result, run_oracle, space_size};
use stgs_nas::sampler::RelaxationConfig;
use stgs_nas::space::{SpaceConfig, SuperNet};
use stgs_nas::stats::median;
use stgs_nas::trainer::{search, RetrainConfig, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let width = 4;
    let spec = PlantedTaskSpec {
        image_nodes: 1,
        speech_nodes: 1,
        width,
        n_train: 128,
        n_val: 128,
        n_test: 64,
        ..PlantedTaskSpec::default()
    };
    let data = generate(&spec, 3)?;
    let space = SpaceConfig {
        image_nodes: 1,
        speech_nodes: 1,
        cells: 1,
        steps: 1,
        width,
        ..SpaceConfig::default()
    };
    let archs = enumerate_space(&space)?;
    println!("space holds {} architectures (closed form {})", archs.len(), space_size(&space));

    let rc = RetrainConfig { epochs: 10, ..RetrainConfig::oracle() };
    let report = run_oracle(&archs, &data.train, &data.val, &rc, 1)?;
    let mut top: Vec<_> = report.entries.iter().collect();
    top.sort_by_key(|e| e.rank);
    for e in top.iter().take(5) {
        println!("rank {:>3}  acc {:.3}  params {:>3}  {}", e.rank, e.val_accuracy, e.parameters, e.fingerprint);
    }

    let mut net = SuperNet::new(space, RelaxationConfig::search_default(), 3)?;
    let cfg = TrainConfig { max_epochs: 10, seed: 3, ..TrainConfig::default() };
    let outcome = search(&mut net, &data.train, &data.val, &cfg)?;
    let rank = rank_search_result(&outcome.best, &report)?;
    println!("searched {} ranks {rank} of {}", outcome.best.fingerprint(), report.len());

    let random: Vec<f64> = random_ranks(&report, 500, 3).into_iter().map(|r| r as f64).collect();
    println!("random architectures: median rank {} of {}", median(&random), report.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("oracle ranking");
}
