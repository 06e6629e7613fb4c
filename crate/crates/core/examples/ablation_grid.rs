// Temperature by sample-count grid, emitted as a CSV through the command
// line front end.

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join(format!("ablation-example-{}", std::process::id()));
    let out_dir = out.display().to_string();
    let code = stgs_nas::commands::run([
        "stgs-nas", "ablate", "--synthetic", "xor",
        "--lambda", "5,10", "--samples", "5,15",
        "--width", "4", "--cells", "1", "--steps", "1",
        "--train-size", "64", "--val-size", "32", "--test-size", "32",
        "--epochs", "2", "--retrain-epochs", "2", "--seed", "4",
        "--out-dir", &out_dir,
    ]);
    if code != 0 {
        return Err(format!("ablate exited with {code}").into());
    }
    print!("{}", std::fs::read_to_string(out.join("ablation.csv"))?);
    std::fs::remove_dir_all(&out)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("ablation grid");
}
