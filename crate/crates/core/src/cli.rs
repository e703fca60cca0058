//! The `kge` command line: train, eval, sparsify, verify, export and stats.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::checkpoint;
use crate::config::{TrainConfig, CONFIG_KEYS};
use crate::data::{classify_relations, Dataset, FilterIndex};
use crate::error::KgeError;
use crate::evaluation::{evaluate_split, threshold_and_export};
use crate::models::ModelParams;
use crate::theory;
use crate::training::fit;

pub const DATA_ENV: &str = "KGE_DATA_DIR";

#[derive(Parser, Debug)]
#[command(name = "kge", version, about = "Knowledge graph embeddings with DURA regularization")]
pub struct Cli {
    /// Worker threads for evaluation (0 = one per core). Training is single-threaded.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and keep the checkpoint with the best validation MRR.
    Train(TrainArgs),
    /// Filtered ranking metrics of a checkpoint on one split.
    Eval(EvalArgs),
    /// Zero the smallest entity entries, re-evaluate and write CSR files.
    Sparsify(SparsifyArgs),
    /// Run the numerical theory checks.
    Verify(VerifyArgs),
    /// Dump every parameter table as raw f32 plus vocabulary TSVs.
    Export(ExportArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct DataArg {
    /// Directory with train.txt, valid.txt and test.txt. Relative paths are
    /// also looked up under $KGE_DATA_DIR, which is the default.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Flat key=value file; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// cp, complex, rescal, tcomplex or trescal.
    #[arg(long, default_value_t = TrainConfig::default().model)]
    pub model: crate::models::ModelKind,
    /// Embedding size (real slots; complex models use half as many complex entries).
    #[arg(long, default_value_t = TrainConfig::default().dim)]
    pub dim: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    pub seed: u64,
    /// Validate every this many epochs (0 disables selection).
    #[arg(long, default_value_t = TrainConfig::default().valid_every)]
    pub valid_every: usize,
    /// Frequency weighting strength of the loss, in [0, 1].
    #[arg(long, default_value_t = TrainConfig::default().w0)]
    pub w0: f64,
    /// none, fro, n3, dura, dura1-basic, dura2-basic, reg-p1, tdura1, tdura2 or tweighted.
    #[arg(long, default_value_t = TrainConfig::default().reg.kind)]
    pub reg: crate::regularizers::RegKind,
    #[arg(long, default_value_t = TrainConfig::default().reg.lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = TrainConfig::default().reg.lambda1)]
    pub lambda1: f64,
    #[arg(long, default_value_t = TrainConfig::default().reg.lambda2)]
    pub lambda2: f64,
    #[arg(long, default_value_t = TrainConfig::default().reg.lambda3)]
    pub lambda3: f64,
    #[arg(long, default_value_t = TrainConfig::default().reg.lambda4)]
    pub lambda4: f64,
    /// Timestamp smoother: none, l2 or l3.
    #[arg(long, default_value = "none")]
    pub smoother: String,
    #[arg(long, default_value_t = TrainConfig::default().reg.smoother_weight)]
    pub smoother_weight: f64,
    /// Project tails with the conjugate relation in the L1 penalty.
    #[arg(long, default_value_t = false)]
    pub conjugate_tail_projection: bool,
    /// f64, or f32 to round parameters after every step.
    #[arg(long, default_value = "f64")]
    pub precision: String,
    #[arg(long, default_value_t = TrainConfig::default().init_scale)]
    pub init_scale: f64,
    #[arg(long, default_value_t = TrainConfig::default().adagrad_eps)]
    pub adagrad_eps: f64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// valid or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Break the report down by relation type.
    #[arg(long, default_value_t = false)]
    pub by_type: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SparsifyArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Fraction of entity entries to zero, in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub target: f64,
    #[arg(long, default_value = "runs/sparse")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "runs/export")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Read a fourth timestamp column.
    #[arg(long, default_value_t = false)]
    pub temporal: bool,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<KgeError> for Failure {
    fn from(e: KgeError) -> Self {
        match e {
            KgeError::Config(_) | KgeError::Unsupported(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.into()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `argv` and runs the command. Returns the process exit code: 0 on
/// success, 2 on usage errors, 1 on runtime failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let result = match &cli.command {
        Command::Train(a) => train(a, matches.subcommand_matches("train").unwrap()),
        Command::Eval(a) => eval(a),
        Command::Sparsify(a) => sparsify(a),
        Command::Verify(a) => verify(a),
        Command::Export(a) => export(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `kge --help` for usage");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn resolve_data(arg: &DataArg) -> CliResult<PathBuf> {
    let env = std::env::var_os(DATA_ENV).map(PathBuf::from);
    let path = match (&arg.data, env) {
        (Some(p), Some(root)) if p.is_relative() && !p.exists() => root.join(p),
        (Some(p), _) => p.clone(),
        (None, Some(root)) => root,
        (None, None) => {
            return Err(Failure::Usage(format!("no dataset: pass --data or set {DATA_ENV}")))
        }
    };
    if !path.join("train.txt").is_file() {
        return Err(Failure::Usage(format!(
            "{} has no train.txt",
            path.display()
        )));
    }
    Ok(path)
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("no such file: {}", path.display())))
    }
}

/// Merges defaults, an optional config file, and flags given explicitly.
pub fn train_config(args: &TrainArgs, matches: &ArgMatches) -> crate::error::Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    for &key in CONFIG_KEYS {
        if matches.value_source(key) != Some(ValueSource::CommandLine) {
            continue;
        }
        let raw = matches
            .get_raw(key)
            .and_then(|mut v| v.next())
            .and_then(|v| v.to_str())
            .unwrap_or("true");
        cfg.set(key, raw)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}

fn train(args: &TrainArgs, matches: &ArgMatches) -> CliResult<i32> {
    if let Some(p) = &args.config {
        require_file(p)?;
    }
    let cfg = train_config(args, matches)?;
    let data = resolve_data(&args.data)?;
    let ds = Dataset::load_dir(&data, cfg.model.is_temporal())?.add_reciprocals()?;
    println!("seed={} model={} dim={} reg={}", cfg.seed, cfg.model, cfg.dim, cfg.reg.kind);
    let outcome = fit(&ds, &cfg)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let ckpt = args.out.join("model.kgec");
    checkpoint::save(&outcome.best, &ckpt)?;
    ds.write_vocab_sidecar(&checkpoint::sidecar_path(&ckpt))?;
    write_text(&args.out.join("train.log"), &outcome.log_tsv())?;
    write_text(&args.out.join("config.txt"), &cfg.to_kv())?;
    print!("{}", outcome.log_tsv());
    match &outcome.best_valid {
        Some(r) => println!("best_epoch={} valid_mrr={}", outcome.best_epoch, r.mrr),
        None => println!("no validation; kept epoch {}", outcome.best_epoch),
    }
    if !ds.test.is_empty() {
        let filter = FilterIndex::build(&ds)?;
        let report = evaluate_split(&outcome.best, &ds.test, &filter, None)?;
        write_text(&args.out.join("test_report.txt"), &report.to_kv())?;
        println!("test_mrr={}", report.mrr);
    }
    println!("checkpoint={}", ckpt.display());
    Ok(0)
}

fn load_for_checkpoint(data: &DataArg, ckpt: &Path) -> CliResult<(Dataset, ModelParams)> {
    require_file(ckpt)?;
    let data = resolve_data(data)?;
    let params = checkpoint::load(ckpt)?;
    let ds = Dataset::load_dir(&data, params.kind.is_temporal())?.add_reciprocals()?;
    checkpoint::check_sidecar(ckpt, &ds)?;
    let shape = params.shape();
    if shape.entities != ds.num_entities() || shape.relations != ds.num_relations() {
        return Err(Failure::Usage(format!(
            "checkpoint shape ({} entities, {} relations) does not match the dataset ({}, {})",
            shape.entities,
            shape.relations,
            ds.num_entities(),
            ds.num_relations()
        )));
    }
    Ok((ds, params))
}

fn eval(args: &EvalArgs) -> CliResult<i32> {
    let (ds, params) = load_for_checkpoint(&args.data, &args.checkpoint)?;
    let split = match args.split.as_str() {
        "valid" => &ds.valid,
        "test" => &ds.test,
        other => return Err(Failure::Usage(format!("unknown split '{other}' (valid or test)"))),
    };
    let filter = FilterIndex::build(&ds)?;
    let types = args
        .by_type
        .then(|| classify_relations(&ds.train, ds.num_raw_relations()));
    let report = evaluate_split(&params, split, &filter, types.as_ref())?;
    print!("{report}");
    print!("{}", report.to_kv());
    if let Some(out) = &args.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_text(&out.join(format!("eval_{}.txt", args.split)), &report.to_kv())?;
    }
    Ok(0)
}

fn sparsify(args: &SparsifyArgs) -> CliResult<i32> {
    if !(0.0..1.0).contains(&args.target) {
        return Err(Failure::Usage(format!("--target must lie in [0, 1), got {}", args.target)));
    }
    let (ds, params) = load_for_checkpoint(&args.data, &args.checkpoint)?;
    let filter = FilterIndex::build(&ds)?;
    let (report, _) = threshold_and_export(&params, args.target, &ds.test, &filter, Some(&args.out))?;
    write_text(&args.out.join("sparsity.txt"), &report.to_kv())?;
    print!("{}", report.to_kv());
    Ok(0)
}

fn verify(args: &VerifyArgs) -> CliResult<i32> {
    let checks = theory::run_suite(args.seeds)?;
    for c in &checks {
        println!("{c}");
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 1 })
}

fn export(args: &ExportArgs) -> CliResult<i32> {
    let (ds, params) = load_for_checkpoint(&args.data, &args.checkpoint)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut index = String::new();
    for (group, table) in params.tables() {
        let path = args.out.join(format!("{}.f32", group.name()));
        let bytes: Vec<u8> = table.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        index.push_str(&format!("{}\t{}\t{}\n", group.name(), table.nrows(), table.ncols()));
    }
    write_text(&args.out.join("tables.tsv"), &index)?;
    ds.write_vocab(&args.out)?;
    println!("exported to {}", args.out.display());
    Ok(0)
}

fn stats(args: &StatsArgs) -> CliResult<i32> {
    let data = resolve_data(&args.data)?;
    let ds = Dataset::load_dir(&data, args.temporal)?;
    println!("{}", ds.stats());
    Ok(0)
}
