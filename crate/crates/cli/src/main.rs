//! `rfpim` command-line tool.

mod manifest;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfpim::config::{parse_config, parse_config_str};
use rfpim::harness::{ground_truth_cached, run_benchmark, run_simulation, write_benchmark_csv};
use rfpim::{impute, load_csv, ExperimentConfig, GeneratorId, ImputationMethod, IncompleteDataset, Stream};

use crate::manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "rfpim", version, about = "Random Forest permutation-importance confidence intervals")]
struct Cli {
    /// Worker threads (falls back to RFPIM_THREADS, then all cores).
    #[arg(long, global = true, env = "RFPIM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the coverage simulation for one condition.
    Simulate(SimArgs),
    /// Compute (or load cached) ground-truth importances.
    GroundTruth(TruthArgs),
    /// Importance intervals for a fully observed CSV.
    Importance(DataArgs),
    /// Impute a CSV with empty cells.
    Impute(ImputeArgs),
    /// Real-data benchmark on a fully observed CSV.
    Benchmark(DataArgs),
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TruthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Generators to compute, e.g. `1,4,12`; defaults to the configured one.
    #[arg(long, value_delimiter = ',')]
    generators: Vec<u8>,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ImputeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// `pmm` (chained regression, R imputations) or `rf` (chained forest, one imputation).
    #[arg(long, default_value = "pmm")]
    method: String,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<rfpim::Error> for Failure {
    fn from(e: rfpim::Error) -> Self {
        match e {
            rfpim::Error::Config(m) => Failure::Usage(m),
            rfpim::Error::InvalidParameter(m) => Failure::Usage(m),
            e if e.is_data_error() => Failure::Data(e.to_string()),
            e => Failure::Internal(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Internal(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match path {
        Some(p) => parse_config(p).map_err(|e| match e {
            rfpim::Error::Io { .. } => Failure::Usage(e.to_string()),
            e => Failure::from(e),
        })?,
        None => parse_config_str("")?,
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn prepare_out(out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))
}

fn simulate(args: &SimArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    prepare_out(&args.out)?;
    let outputs = ["results.csv", "coverage.csv", "failures.csv", "ground_truth.csv"];
    let mut manifest = Manifest::start("simulate", &cfg, &args.out, &outputs)?;
    let truth = ground_truth_cached(&cfg, Some(&args.out.join("cache")))?;
    let run = run_simulation(&cfg, &truth)?;
    run.write_results_csv(create(&args.out.join("results.csv"))?)?;
    run.write_coverage_csv(create(&args.out.join("coverage.csv"))?)?;
    run.write_failures_csv(create(&args.out.join("failures.csv"))?)?;
    truth.write_csv(create(&args.out.join("ground_truth.csv"))?)?;
    if !run.failures.is_empty() {
        log::warn!("{} method arms failed; see failures.csv", run.failures.len());
    }
    manifest.finish()
}

fn ground_truth(args: &TruthArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    prepare_out(&args.out)?;
    let generators: Vec<GeneratorId> = if args.generators.is_empty() {
        vec![cfg.generator]
    } else {
        args.generators
            .iter()
            .map(|&g| GeneratorId::new(g).map_err(|e| Failure::Usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let mut manifest = Manifest::start("ground-truth", &(&cfg, &generators), &args.out, &["ground_truth.csv"])?;
    let mut w = csv_writer(&args.out.join("ground_truth.csv"))?;
    w.write_record(["generator", "feature", "score", "reps", "n_ref", "seed"]).map_err(csv_failure)?;
    for g in generators {
        let gcfg = ExperimentConfig { generator: g, ..cfg.clone() };
        gcfg.validate()?;
        let truth = ground_truth_cached(&gcfg, Some(&args.out.join("cache")))?;
        for (j, s) in truth.scores.iter().enumerate() {
            w.write_record([
                g.to_string(),
                (j + 1).to_string(),
                s.to_string(),
                truth.reps.to_string(),
                truth.n_ref.to_string(),
                truth.seed.to_string(),
            ])
            .map_err(csv_failure)?;
        }
    }
    w.flush().map_err(|e| Failure::Internal(e.to_string()))?;
    manifest.finish()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Failure> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::Internal(e.to_string())
}

fn load_data(args: &DataArgs) -> Result<IncompleteDataset, Failure> {
    Ok(load_csv(&args.data, &args.target)?)
}

fn importance(args: &DataArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    let data = load_data(args)?;
    let complete = data.to_complete().map_err(|_| {
        Failure::Data(format!(
            "{} has {} empty cells; impute it first",
            args.data.display(),
            data.missing_count()
        ))
    })?;
    let b = cfg.subsample_size(complete.n());
    prepare_out(&args.out)?;
    let mut manifest = Manifest::start("importance", &cfg, &args.out, &["importance.csv"])?;
    let stream = Stream::new(cfg.master_seed).child(4);
    let est = rfpim::estimate_importance(&complete, &cfg.forest, cfg.jackknife_k, b, cfg.alpha, stream)?;
    let mut w = csv_writer(&args.out.join("importance.csv"))?;
    w.write_record(["feature", "point", "variance", "ci_lower", "ci_upper", "alpha", "K", "b", "seed"])
        .map_err(csv_failure)?;
    for e in &est {
        w.write_record([
            complete.names[e.feature].clone(),
            e.point.to_string(),
            e.variance.to_string(),
            e.ci_lower.to_string(),
            e.ci_upper.to_string(),
            e.alpha.to_string(),
            e.k.to_string(),
            e.b.to_string(),
            cfg.master_seed.to_string(),
        ])
        .map_err(csv_failure)?;
    }
    w.flush().map_err(|e| Failure::Internal(e.to_string()))?;
    manifest.finish()
}

fn impute_cmd(args: &ImputeArgs) -> Result<(), Failure> {
    let cfg = load_config(args.data.config.as_deref(), args.data.seed)?;
    let method = match args.method.as_str() {
        "pmm" => ImputationMethod::PmmChained,
        "rf" => ImputationMethod::RfChained,
        other => return Err(Failure::Usage(format!("--method must be `pmm` or `rf`, got `{other}`"))),
    };
    let data = load_data(&args.data)?;
    let r = match method {
        ImputationMethod::PmmChained => cfg.imputer.r,
        ImputationMethod::RfChained => 1,
    };
    let stem = args
        .data
        .data
        .file_stem()
        .map_or_else(|| "imputed".to_owned(), |s| s.to_string_lossy().into_owned());
    let outputs: Vec<String> = (1..=r).map(|i| format!("{stem}_r{i}.csv")).collect();
    prepare_out(&args.data.out)?;
    let output_refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    let mut manifest = Manifest::start("impute", &(&cfg, &args.method), &args.data.out, &output_refs)?;
    let imputer = cfg.imputer.imputer(method, r, Stream::new(cfg.master_seed).child(5).key());
    let set = impute(&data, &imputer)?;
    for (name, ds) in outputs.iter().zip(&set.completed) {
        ds.write_csv(create(&args.data.out.join(name))?)?;
    }
    manifest.finish()
}

fn benchmark(args: &DataArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    let data = load_data(args)?;
    if data.missing_count() > 0 {
        return Err(Failure::Data(format!(
            "benchmark input must be fully observed; {} has {} empty cells",
            args.data.display(),
            data.missing_count()
        )));
    }
    prepare_out(&args.out)?;
    let mut manifest = Manifest::start("benchmark", &cfg, &args.out, &["benchmark.csv"])?;
    let rows = run_benchmark(&data, &cfg)?;
    write_benchmark_csv(&rows, create(&args.out.join("benchmark.csv"))?)?;
    manifest.finish()
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::GroundTruth(a) => ground_truth(a),
        Command::Importance(a) => importance(a),
        Command::Impute(a) => impute_cmd(a),
        Command::Benchmark(a) => benchmark(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
