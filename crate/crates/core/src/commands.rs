//! Command-line front end: argument parsing, artifact writing, exit codes.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::arch::{derive, DerivedArch};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{generate, load_features, PlantedRule, PlantedTaskSpec, Split, TaskSplits};
use crate::error::{Error, Result};
use crate::manifest::{read_manifest, ManifestWriter};
use crate::oracle::{enumerate_space, rank_search_result, run_oracle, space_size};
use crate::sampler::{RelaxationConfig, RelaxationMode};
use crate::space::{SpaceConfig, SuperNet};
use crate::trainer::{retrain, search, RetrainConfig, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "stgs-nas", version, about = "Straight-through Gumbel-Softmax bimodal architecture search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one architecture search and write its artifacts.
    Search(SearchArgs),
    /// Search and retrain over a grid of temperatures and sample counts.
    Ablate(AblateArgs),
    /// Retrain a derived architecture and report ACC/AUC.
    Eval(EvalArgs),
    /// Extract the discrete architecture from a checkpoint.
    Derive(DeriveArgs),
    /// Enumerate and retrain a small space, optionally ranking an architecture.
    Oracle(OracleArgs),
    /// Write a planted synthetic task as BMNF feature files.
    Generate(GenerateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding train.bmnf, val.bmnf and optionally test.bmnf.
    #[arg(long, conflicts_with = "synthetic")]
    pub dataset: Option<PathBuf>,
    /// Planted task: xor, image or speech.
    #[arg(long)]
    pub synthetic: Option<String>,
    #[arg(long, default_value_t = 4096)]
    pub train_size: usize,
    #[arg(long, default_value_t = 1024)]
    pub val_size: usize,
    #[arg(long, default_value_t = 1024)]
    pub test_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    /// Seed for synthetic data; defaults to --seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SpaceArgs {
    #[arg(long, default_value_t = 2)]
    pub image_nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub speech_nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub cells: usize,
    #[arg(long, default_value_t = 2)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
}

impl SpaceArgs {
    pub fn config(&self) -> SpaceConfig {
        SpaceConfig {
            image_nodes: self.image_nodes,
            speech_nodes: self.speech_nodes,
            cells: self.cells,
            steps: self.steps,
            width: self.width,
            ..SpaceConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 15)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "stgs")]
    pub relaxation: RelaxationMode,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Temperatures, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0, 15.0, 20.0])]
    pub lambda: Vec<f64>,
    /// Sample counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5, 10, 15, 20])]
    pub samples: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "stgs")]
    pub relaxation: RelaxationMode,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub retrain_epochs: usize,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Architecture JSON written by `search` or `derive`.
    #[arg(long)]
    pub arch: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DeriveArgs {
    /// Checkpoint directory written by `search`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1)]
    pub image_nodes: usize,
    #[arg(long, default_value_t = 1)]
    pub speech_nodes: usize,
    #[arg(long, default_value_t = 1)]
    pub cells: usize,
    #[arg(long, default_value_t = 2)]
    pub steps: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    /// Keep every first-level edge.
    #[arg(long)]
    pub fixed_edges: bool,
    /// Wire the cell inputs to the first image and first speech node.
    #[arg(long)]
    pub fixed_slots: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Architecture JSON to rank against the enumeration.
    #[arg(long)]
    pub arch: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 2)]
    pub image_nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub speech_nodes: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the replayed outputs.
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Contract(_) | Error::SpaceTooLarge { .. } => EXIT_USAGE,
            Error::Numerical(_) | Error::Domain(_) => EXIT_NUMERICAL,
            Error::Shape(_)
            | Error::Parse { .. }
            | Error::Checksum { .. }
            | Error::EmptyDataset(_)
            | Error::Io(_)
            | Error::Json(_) => EXIT_DATA,
        };
        Self { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, message: message.into() }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let raw: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, raw) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            if e.code == EXIT_USAGE {
                eprintln!("run `stgs-nas --help` for usage");
            }
            e.code
        }
    }
}

fn dispatch(command: Command, raw: Vec<String>) -> CliResult<()> {
    match command {
        Command::Search(a) => cmd_search(&a, raw),
        Command::Ablate(a) => cmd_ablate(&a, raw),
        Command::Eval(a) => cmd_eval(&a, raw),
        Command::Derive(a) => cmd_derive(&a, raw),
        Command::Oracle(a) => cmd_oracle(&a, raw),
        Command::Generate(a) => cmd_generate(&a, raw),
        Command::Replay(a) => cmd_replay(&a),
    }
}

/// Runs `body` between writing and finalising the manifest.
fn with_manifest<C: Serialize>(
    out_dir: &Path,
    command: &str,
    raw: Vec<String>,
    config: &C,
    seed: u64,
    body: impl FnOnce(&mut ManifestWriter) -> CliResult<()>,
) -> CliResult<()> {
    let config = serde_json::to_value(config).map_err(Error::from)?;
    let mut w = ManifestWriter::begin(out_dir, command, raw, config, seed)?;
    let result = body(&mut w);
    w.finish(result.as_ref().err().map(|e| e.message.clone()))?;
    result
}

#[derive(Serialize)]
struct ResolvedData {
    source: String,
    task: Option<PlantedTaskSpec>,
    data_seed: u64,
}

fn load_data(
    args: &DataArgs,
    nodes: (usize, usize, usize),
    seed: u64,
    w: Option<&mut ManifestWriter>,
) -> CliResult<(TaskSplits, ResolvedData)> {
    let (ni, ns, c) = nodes;
    match (&args.dataset, &args.synthetic) {
        (Some(dir), None) => {
            if !dir.is_dir() {
                return Err(usage(format!("dataset directory {} does not exist", dir.display())));
            }
            let path = |name: &str| dir.join(format!("{name}.bmnf"));
            let expect = Some((ni, ns, c));
            let train = load_features(path("train"), Split::Train, expect)?;
            let val = load_features(path("val"), Split::Val, expect)?;
            let test = if path("test").exists() {
                load_features(path("test"), Split::Test, expect)?
            } else {
                val.clone()
            };
            if let Some(w) = w {
                for name in ["train", "val", "test"] {
                    if path(name).exists() {
                        w.add_input(&path(name))?;
                    }
                }
            }
            let resolved = ResolvedData { source: dir.display().to_string(), task: None, data_seed: 0 };
            Ok((TaskSplits { train, val, test }, resolved))
        }
        (None, Some(rule)) => {
            let rule: PlantedRule = rule.parse()?;
            let spec = PlantedTaskSpec {
                rule,
                image_nodes: ni,
                speech_nodes: ns,
                width: c,
                image_signal_dims: (0..c.min(4)).collect(),
                speech_signal_dims: (0..c.min(4)).collect(),
                noise_sigma: args.noise_sigma,
                n_train: args.train_size,
                n_val: args.val_size,
                n_test: args.test_size,
            };
            let data_seed = args.data_seed.unwrap_or(seed);
            let splits = generate(&spec, data_seed)?;
            let resolved = ResolvedData { source: "synthetic".into(), task: Some(spec), data_seed };
            Ok((splits, resolved))
        }
        (None, None) => Err(usage("missing dataset: pass --dataset <dir> or --synthetic <rule>")),
        (Some(_), Some(_)) => Err(usage("--dataset and --synthetic are mutually exclusive")),
    }
}

fn write_arch(w: &mut ManifestWriter, out: &Path, arch: &DerivedArch) -> CliResult<()> {
    w.output(out, "arch.json", arch.to_json()?)?;
    w.output(out, "arch.dot", arch.to_dot())?;
    Ok(())
}

#[derive(Serialize)]
struct SearchConfig<'a> {
    data: ResolvedData,
    space: &'a SpaceConfig,
    train: &'a TrainConfig,
}

fn train_config(
    lambda: f64,
    samples: usize,
    mode: RelaxationMode,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> CliResult<TrainConfig> {
    let cfg = TrainConfig {
        relaxation: RelaxationConfig::new(lambda, samples, mode)?,
        max_epochs: epochs,
        batch_size,
        seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_search(a: &SearchArgs, raw: Vec<String>) -> CliResult<()> {
    let space = a.space.config();
    space.validate()?;
    let tc = train_config(a.lambda, a.samples, a.relaxation, a.epochs, a.batch_size, a.seed)?;
    let nodes = (space.image_nodes, space.speech_nodes, space.width);
    let (splits, resolved) = load_data(&a.data, nodes, a.seed, None)?;
    let config = SearchConfig { data: resolved, space: &space, train: &tc };
    with_manifest(&a.out_dir, "search", raw, &config, a.seed, |w| {
        if a.data.dataset.is_some() {
            load_data(&a.data, nodes, a.seed, Some(w))?;
        }
        let mut net = SuperNet::new(space.clone(), tc.relaxation, a.seed)?;
        let outcome = search(&mut net, &splits.train, &splits.val, &tc)?;
        write_arch(w, &a.out_dir, &outcome.best)?;
        w.output(&a.out_dir, "entropy.csv", outcome.trace.to_csv())?;
        save_checkpoint(&net, a.out_dir.join("checkpoint"))?;
        w.record_output("checkpoint/checkpoint.json");
        w.record_output("checkpoint/params.bin");
        println!(
            "best val acc {:.4} after {} epochs: {}",
            outcome.best_val_acc,
            outcome.trace.rows.len(),
            outcome.best.fingerprint()
        );
        Ok(())
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub lambda: f64,
    pub samples: usize,
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub parameters: Option<usize>,
    pub status: String,
    #[serde(skip)]
    pub arch: Option<DerivedArch>,
}

/// File name of a grid cell's architecture inside `archs/`.
pub fn ablation_arch_file(lambda: f64, samples: usize) -> String {
    format!("lambda{lambda}_m{samples}.json")
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let opt = |v: Option<String>| v.unwrap_or_default();
    let mut s = String::from("lambda,samples,auc,accuracy,parameters,status\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.lambda,
            r.samples,
            opt(r.auc.map(|v| v.to_string())),
            opt(r.accuracy.map(|v| v.to_string())),
            opt(r.parameters.map(|v| v.to_string())),
            r.status
        ));
    }
    s
}

#[derive(Serialize)]
struct AblateConfig<'a> {
    data: ResolvedData,
    space: &'a SpaceConfig,
    train: TrainConfig,
    lambdas: &'a [f64],
    samples: &'a [usize],
    retrain: &'a RetrainConfig,
}

pub fn cmd_ablate(a: &AblateArgs, raw: Vec<String>) -> CliResult<()> {
    let space = a.space.config();
    space.validate()?;
    if a.lambda.is_empty() || a.samples.is_empty() {
        return Err(usage("the grid needs at least one temperature and one sample count"));
    }
    let base = train_config(a.lambda[0], a.samples[0], a.relaxation, a.epochs, a.batch_size, a.seed)?;
    let nodes = (space.image_nodes, space.speech_nodes, space.width);
    let (splits, resolved) = load_data(&a.data, nodes, a.seed, None)?;
    let rc = RetrainConfig { epochs: a.retrain_epochs, seed: a.seed, ..RetrainConfig::evaluation() };
    let config = AblateConfig {
        data: resolved,
        space: &space,
        train: base.clone(),
        lambdas: &a.lambda,
        samples: &a.samples,
        retrain: &rc,
    };
    with_manifest(&a.out_dir, "ablate", raw, &config, a.seed, |w| {
        let cells: Vec<(f64, usize)> =
            a.lambda.iter().flat_map(|&l| a.samples.iter().map(move |&m| (l, m))).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs.max(1))
            .build()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
        let rows: Vec<AblationRow> = pool.install(|| {
            cells
                .par_iter()
                .map(|&(lambda, samples)| {
                    let run = || -> Result<(f64, f64, DerivedArch)> {
                        let relaxation = RelaxationConfig::new(lambda, samples, a.relaxation)?;
                        let tc = TrainConfig { relaxation, ..base.clone() };
                        let mut net = SuperNet::new(space.clone(), relaxation, a.seed)?;
                        let outcome = search(&mut net, &splits.train, &splits.val, &tc)?;
                        let r = retrain(&outcome.best, &splits.train, &splits.val, Some(&splits.test), &rc)?;
                        let test = r.test.expect("test split passed");
                        Ok((test.auc, test.accuracy, outcome.best))
                    };
                    match run() {
                        Ok((auc, acc, arch)) => AblationRow {
                            lambda,
                            samples,
                            auc: Some(auc),
                            accuracy: Some(acc),
                            parameters: Some(arch.count_parameters()),
                            status: "ok".into(),
                            arch: Some(arch),
                        },
                        Err(e) => AblationRow {
                            lambda,
                            samples,
                            auc: None,
                            accuracy: None,
                            parameters: None,
                            status: format!("failed: {}", e.to_string().replace(',', ";")),
                            arch: None,
                        },
                    }
                })
                .collect()
        });
        std::fs::create_dir_all(a.out_dir.join("archs")).map_err(Error::from)?;
        for r in &rows {
            if let Some(arch) = &r.arch {
                w.output(&a.out_dir, &format!("archs/{}", ablation_arch_file(r.lambda, r.samples)), arch.to_json()?)?;
            }
        }
        w.output(&a.out_dir, "ablation.csv", ablation_csv(&rows))?;
        println!("{} grid cells written", rows.len());
        Ok(())
    })
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    data: ResolvedData,
    arch: &'a DerivedArch,
    retrain: &'a RetrainConfig,
}

pub fn cmd_eval(a: &EvalArgs, raw: Vec<String>) -> CliResult<()> {
    if !a.arch.is_file() {
        return Err(usage(format!("architecture file {} does not exist", a.arch.display())));
    }
    let arch = DerivedArch::from_json(&std::fs::read_to_string(&a.arch).map_err(Error::from)?)?;
    let cfg = &arch.config;
    let (splits, resolved) = load_data(&a.data, (cfg.image_nodes, cfg.speech_nodes, cfg.width), a.seed, None)?;
    let rc = RetrainConfig { epochs: a.epochs, batch_size: a.batch_size, seed: a.seed, ..RetrainConfig::evaluation() };
    let config = EvalConfig { data: resolved, arch: &arch, retrain: &rc };
    with_manifest(&a.out_dir, "eval", raw, &config, a.seed, |w| {
        w.add_input(&a.arch)?;
        let r = retrain(&arch, &splits.train, &splits.val, Some(&splits.test), &rc)?;
        w.output(&a.out_dir, "eval.json", serde_json::to_string_pretty(&r).map_err(Error::from)?)?;
        let test = r.test.expect("test split passed");
        println!("test ACC {:.4} AUC {:.4} ({} parameters)", test.accuracy, test.auc, r.parameters);
        Ok(())
    })
}

pub fn cmd_derive(a: &DeriveArgs, raw: Vec<String>) -> CliResult<()> {
    if !a.checkpoint.is_dir() {
        return Err(usage(format!("checkpoint directory {} does not exist", a.checkpoint.display())));
    }
    let source = a.checkpoint.display().to_string();
    with_manifest(&a.out_dir, "derive", raw, &source, 0, |w| {
        w.add_input(&a.checkpoint.join(crate::checkpoint::PARAMS_FILE))?;
        let net = load_checkpoint(&a.checkpoint)?;
        let arch = derive(&net)?;
        write_arch(w, &a.out_dir, &arch)?;
        println!("{}", arch.fingerprint());
        Ok(())
    })
}

#[derive(Serialize)]
struct OracleConfig<'a> {
    data: ResolvedData,
    space: &'a SpaceConfig,
    retrain: &'a RetrainConfig,
    space_size: u128,
}

pub fn cmd_oracle(a: &OracleArgs, raw: Vec<String>) -> CliResult<()> {
    let space = SpaceConfig {
        image_nodes: a.image_nodes,
        speech_nodes: a.speech_nodes,
        cells: a.cells,
        steps: a.steps,
        width: a.width,
        fixed_edges: a.fixed_edges,
        fixed_slots: a.fixed_slots,
        ..SpaceConfig::default()
    };
    space.validate()?;
    let archs = enumerate_space(&space)?;
    let (splits, resolved) = load_data(&a.data, (a.image_nodes, a.speech_nodes, a.width), a.seed, None)?;
    let rc = RetrainConfig { epochs: a.epochs, batch_size: a.batch_size, seed: a.seed, ..RetrainConfig::oracle() };
    let config = OracleConfig { data: resolved, space: &space, retrain: &rc, space_size: space_size(&space) };
    with_manifest(&a.out_dir, "oracle", raw, &config, a.seed, |w| {
        let report = run_oracle(&archs, &splits.train, &splits.val, &rc, a.jobs)?;
        w.output(&a.out_dir, "oracle.csv", report.to_csv())?;
        println!("{} architectures retrained", report.len());
        if let Some(path) = &a.arch {
            w.add_input(path)?;
            let arch = DerivedArch::from_json(&std::fs::read_to_string(path).map_err(Error::from)?)?;
            let rank = rank_search_result(&arch, &report)?;
            w.output(&a.out_dir, "rank.txt", format!("{rank}/{}\n", report.len()))?;
            println!("rank {rank} of {}", report.len());
        }
        Ok(())
    })
}

pub fn cmd_generate(a: &GenerateArgs, raw: Vec<String>) -> CliResult<()> {
    let (splits, resolved) = load_data(&a.data, (a.image_nodes, a.speech_nodes, a.width), a.seed, None)?;
    if a.data.synthetic.is_none() {
        return Err(usage("generate needs --synthetic <rule>"));
    }
    with_manifest(&a.out_dir, "generate", raw, &resolved, a.seed, |w| {
        let mut labels = String::new();
        for ds in [&splits.train, &splits.val, &splits.test] {
            let name = ds.split.name();
            w.output(&a.out_dir, &format!("{name}.bmnf"), ds.to_bytes())?;
            let csv = ds.label_manifest_csv();
            labels.push_str(if labels.is_empty() { &csv } else { csv.split_once('\n').map_or("", |(_, b)| b) });
        }
        w.output(&a.out_dir, "labels.csv", labels)?;
        Ok(())
    })
}

pub fn cmd_replay(a: &ReplayArgs) -> CliResult<()> {
    let m = read_manifest(&a.manifest)?;
    if m.command == "replay" {
        return Err(usage("a replay manifest cannot be replayed"));
    }
    let mut args = vec!["stgs-nas".to_string()];
    let mut skip = false;
    for arg in &m.args {
        if skip {
            skip = false;
            continue;
        }
        if arg == "--out-dir" {
            skip = true;
            continue;
        }
        if arg.starts_with("--out-dir=") {
            continue;
        }
        args.push(arg.clone());
    }
    args.push("--out-dir".into());
    args.push(a.out_dir.display().to_string());
    let cli = Cli::try_parse_from(&args).map_err(|e| usage(e.to_string()))?;
    dispatch(cli.command, args[1..].to_vec())
}
