// Planted synthetic tasks and the BMNF feature-file format.

use stgs_nas::data::{generate, load_features, BimodalDataset, PlantedRule, PlantedTaskSpec, Split};
use stgs_nas::Error;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = PlantedTaskSpec {
        rule: PlantedRule::XorCrossmodal,
        width: 8,
        n_train: 256,
        n_val: 64,
        n_test: 64,
        ..PlantedTaskSpec::default()
    };
    let splits = generate(&spec, 5)?;
    println!(
        "train {} samples, {} image + {} speech nodes of width {}, {:.1}% positive",
        splits.train.len(),
        splits.train.image_nodes(),
        splits.train.speech_nodes(),
        splits.train.width(),
        100.0 * splits.train.positive_fraction()
    );

    let dir = std::env::temp_dir().join(format!("bmnf-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("train.bmnf");
    splits.train.save(&path)?;
    let back = load_features(&path, Split::Train, Some((2, 2, 8)))?;
    assert_eq!(back.image, splits.train.image);
    println!("round trip of {} bytes is exact", std::fs::metadata(&path)?.len());

    let bytes = std::fs::read(&path)?;
    match BimodalDataset::from_bytes(&bytes[..bytes.len() / 2], Split::Train, "half") {
        Err(Error::Parse { offset, message }) => println!("truncated file: offset {offset}, {message}"),
        other => println!("unexpected: {other:?}"),
    }
    let mut flipped = bytes.clone();
    flipped[200] ^= 1;
    if let Err(e) = BimodalDataset::from_bytes(&flipped, Split::Train, "flipped") {
        println!("corrupted file: {e}");
    }

    let csv = splits.val.label_manifest_csv();
    println!("label manifest starts:\n{}", csv.lines().take(3).collect::<Vec<_>>().join("\n"));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("feature files");
}
