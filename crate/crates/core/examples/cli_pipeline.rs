// The full file-based workflow: generate features, search, derive from the
// checkpoint, retrain, then replay the search from its manifest.

use std::path::Path;

fn cli(args: &[&str]) -> Result<(), Box<dyn std::error::Error>> {
    let mut argv = vec!["stgs-nas"];
    argv.extend_from_slice(args);
    match stgs_nas::commands::run(argv) {
        0 => Ok(()),
        code => Err(format!("{} exited with {code}", args[0]).into()),
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("cli-example-{}", std::process::id()));
    let p = |s: &str| root.join(s).display().to_string();
    let small = ["--width", "4", "--train-size", "64", "--val-size", "32", "--test-size", "32"];

    let mut args = vec!["generate", "--synthetic", "xor", "--seed", "6", "--out-dir"];
    let data = p("data");
    args.push(&data);
    args.extend_from_slice(&small);
    cli(&args)?;

    let search_dir = p("search");
    cli(&["search", "--dataset", &data, "--width", "4", "--epochs", "3", "--seed", "6", "--out-dir", &search_dir])?;
    let derive_dir = p("derive");
    let checkpoint = p("search/checkpoint");
    cli(&["derive", "--checkpoint", &checkpoint, "--out-dir", &derive_dir])?;
    let eval_dir = p("eval");
    let arch = p("search/arch.json");
    cli(&["eval", "--dataset", &data, "--arch", &arch, "--epochs", "3", "--out-dir", &eval_dir])?;

    let replay_dir = p("replay");
    let manifest = p("search/manifest.json");
    cli(&["replay", "--manifest", &manifest, "--out-dir", &replay_dir])?;
    let same = |name: &str| -> std::io::Result<bool> {
        Ok(std::fs::read(Path::new(&search_dir).join(name))? == std::fs::read(Path::new(&replay_dir).join(name))?)
    };
    println!("replayed entropy.csv identical: {}", same("entropy.csv")?);
    println!("replayed arch.json identical: {}", same("arch.json")?);
    std::fs::remove_dir_all(&root)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("cli pipeline");
}
