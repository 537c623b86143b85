mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use gsnn_core::data::{default_root, SplitKind, KNOWN_DATASETS};
use gsnn_core::experiment::{dataset_info, format_info, run_experiment, ExperimentSpec};
use gsnn_core::study::{bench_scatter_vs_spmm, write_records, BenchConfig, Layout};
use gsnn_core::train::ModelKind;
use gsnn_core::{ExecutionMode, ReduceMode};

use config::FileConfig;

#[derive(Parser)]
#[command(name = "gsnn", version, about = "Gather/scatter GNN benchmarks and node classification")]
struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time gather/scatter against SpMM on random graphs.
    Bench(BenchArgs),
    /// Train a node classifier for several seeds and report accuracy.
    Train(TrainArgs),
    /// Print dataset statistics.
    Info(InfoArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    nodes: Option<usize>,
    /// Comma separated average degrees.
    #[arg(long, value_delimiter = ',')]
    degrees: Option<Vec<f64>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    /// Reduce modes: add, mean, max.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    /// coalesced, non_coalesced.
    #[arg(long, value_delimiter = ',')]
    layouts: Option<Vec<String>>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Single-threaded GS kernels instead of the atomic parallel ones.
    #[arg(long)]
    sequential: bool,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// gcn, sgc, gat, gin, appnp.
    #[arg(long)]
    model: Option<String>,
    /// cora, citeseer, pubmed.
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding `<name>/<name>.content`, `.cites` and `split/`.
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// fixed or random.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Sequential kernels and zero wall times: byte-stable output.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InfoArgs {
    /// One dataset; all three citation graphs when absent.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_root: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<gsnn_core::Error> for Failure {
    fn from(e: gsnn_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn parse<T: FromStr>(what: &str, s: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| Failure::Usage(format!("--{what}: {e}")))
}

fn parse_all<T: FromStr>(what: &str, items: &[String]) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    items.iter().map(|s| parse(what, s.trim())).collect()
}

fn dataset_name(s: &str) -> CliResult<String> {
    let name = s.to_ascii_lowercase();
    if KNOWN_DATASETS.contains(&name.as_str()) {
        Ok(name)
    } else {
        Err(Failure::Usage(format!(
            "--dataset: unknown dataset {s:?}, expected one of {}",
            KNOWN_DATASETS.join(", ")
        )))
    }
}

fn sink(path: Option<&PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn bench(a: BenchArgs, file: &FileConfig) -> CliResult<()> {
    let c = &file.bench;
    let d = BenchConfig::default();
    let modes = match a.modes.as_ref().or(c.modes.as_ref()) {
        Some(m) => parse_all::<ReduceMode>("modes", m)?,
        None => d.modes.clone(),
    };
    let layouts = match a.layouts.as_ref().or(c.layouts.as_ref()) {
        Some(l) => parse_all::<Layout>("layouts", l)?,
        None => d.layouts.clone(),
    };
    let sequential = a.sequential || c.sequential.unwrap_or(false);
    let cfg = BenchConfig {
        nodes: a.nodes.or(c.nodes).unwrap_or(d.nodes),
        degrees: a.degrees.or(c.degrees.clone()).unwrap_or(d.degrees.clone()),
        repeats: a.repeats.or(c.repeats).unwrap_or(d.repeats),
        features: a.features.or(c.features).unwrap_or(d.features),
        modes,
        layouts,
        warmup: a.warmup.or(c.warmup).unwrap_or(d.warmup),
        seed: a.seed.or(c.seed).unwrap_or(d.seed),
        mode: if sequential {
            ExecutionMode::Sequential
        } else {
            ExecutionMode::Parallel
        },
        ..d
    };
    if cfg.degrees.is_empty() || cfg.repeats == 0 || cfg.modes.is_empty() || cfg.layouts.is_empty() {
        return Err(Failure::Usage(
            "bench needs at least one degree, mode and layout, and repeats >= 1".into(),
        ));
    }
    let out = sink(a.out.or(c.out.clone()).as_ref())?;
    let records = bench_scatter_vs_spmm(&cfg)?;
    write_records(out, &records)?;
    Ok(())
}

fn train(a: TrainArgs, file: &FileConfig) -> CliResult<()> {
    let c = &file.train;
    let model = parse::<ModelKind>("model", a.model.as_deref().or(c.model.as_deref()).unwrap_or("gcn"))?;
    let dataset = dataset_name(a.dataset.as_deref().or(file.dataset.name.as_deref()).unwrap_or("cora"))?;
    let split = parse::<SplitKind>("split", a.split.as_deref().or(c.split.as_deref()).unwrap_or("fixed"))?;
    let runs = a.runs.or(c.runs).unwrap_or(20);
    if runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    let spec = ExperimentSpec {
        model,
        dataset,
        root: a.data_root.or(file.dataset.root.clone()).unwrap_or_else(default_root),
        split,
        runs,
        seed: a.seed.or(c.seed).unwrap_or(0),
        epochs: a.epochs.or(c.epochs),
        deterministic: a.deterministic || c.deterministic.unwrap_or(false),
    };
    let out = sink(a.out.or(c.out.clone()).as_ref())?;
    run_experiment(&spec)?.write_csv(out)?;
    Ok(())
}

fn info(a: InfoArgs, file: &FileConfig) -> CliResult<()> {
    let root = a.data_root.or(file.dataset.root.clone()).unwrap_or_else(default_root);
    let names = match a.dataset.as_deref().or(file.dataset.name.as_deref()) {
        Some(n) => vec![dataset_name(n)?],
        None => ["cora", "citeseer", "pubmed"].map(String::from).to_vec(),
    };
    let mut failed = Vec::new();
    for name in &names {
        match dataset_info(name, &root) {
            Ok(s) => println!("{}", format_info(name, &s)),
            Err(e) => {
                eprintln!("error: {name}: {e}");
                failed.push(name.as_str());
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("could not load {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(Failure::Usage)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Bench(a) => bench(a, &file),
        Command::Train(a) => train(a, &file),
        Command::Info(a) => info(a, &file),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Parse errors exit with clap's usage status 2; help and version exit 0.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
