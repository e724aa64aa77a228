//! `hdboot`: bootstrap experiments, tests and diagnostics from the command line.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hdboot::harness::{self, ExperimentConfig, ExperimentKind, Table};
use hdboot::{lp_ball_volume, run_test, CovEstimator, Error, LpExponent, RngSeed, TestResult, TestSpec};

#[derive(Parser, Debug)]
#[command(name = "hdboot", version, about = "Gaussian bootstrap for high-dimensional lp-statistics")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "HDBOOT_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Kolmogorov-Smirnov distances between the statistic and its estimates.
    Ks,
    /// Coverage of simultaneous confidence sets under the null.
    Coverage,
    /// Power curves for dense or sparse alternatives.
    Power,
    /// Anti-concentration and Gaussian comparison probes.
    Probe,
    /// Test H0: M mu = m0 on a CSV data file.
    Test(TestArgs),
    /// Volume of an lp-ball.
    Volume(VolumeArgs),
}

#[derive(Args, Debug)]
struct TestArgs {
    /// CSV data file, one observation per row.
    data: PathBuf,
    /// Restriction matrix M (CSV); identity when absent.
    #[arg(long = "M-file")]
    m_file: Option<PathBuf>,
    /// Right-hand side m0 (CSV row or column); zero when absent.
    #[arg(long = "m0-file")]
    m0_file: Option<PathBuf>,
    #[arg(long, default_value = "2")]
    p: LpExponent,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "corr-cv")]
    estimator: CovEstimator,
    #[arg(long = "B", default_value_t = 1000)]
    b: usize,
    /// Skip the first line of the data file.
    #[arg(long)]
    header: bool,
}

#[derive(Args, Debug)]
struct VolumeArgs {
    #[arg(long)]
    d: usize,
    /// Exponent; `inf` for the cube.
    #[arg(long)]
    p: String,
    #[arg(long)]
    r: f64,
}

/// Failures split by exit code: 2 for configuration and usage, 1 otherwise.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("hdboot: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("hdboot: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("hdboot: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Ks => experiment(&cli.global, &[ExperimentKind::Ks]),
        Command::Coverage => experiment(&cli.global, &[ExperimentKind::Coverage]),
        Command::Power => experiment(&cli.global, &[ExperimentKind::PowerDense, ExperimentKind::PowerSparse]),
        Command::Probe => experiment(&cli.global, &[ExperimentKind::Probe]),
        Command::Test(args) => test(&cli.global, args),
        Command::Volume(args) => volume(&cli.global, args),
    }
}

fn load_config(global: &Global) -> Result<ExperimentConfig, Failure> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("this subcommand requires --config <file>".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn experiment(global: &Global, kinds: &[ExperimentKind]) -> Result<(), Failure> {
    let cfg = load_config(global)?;
    if !kinds.contains(&cfg.kind) {
        return Err(Failure::Config(format!(
            "configuration is for `{}`, not for this subcommand",
            cfg.kind
        )));
    }
    let table = harness::run_experiment(&cfg)?;
    let out = global.out.clone().or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
    emit(&table, out.as_deref())
}

fn emit(table: &Table, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => table.write_file(path)?,
        None => table.write_to(std::io::stdout().lock())?,
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Config(format!("cannot open {}: {e}", path.display())))
}

fn test(global: &Global, args: &TestArgs) -> Result<(), Failure> {
    let x = harness::read_matrix_csv(open(&args.data)?, args.header)?;
    let d = x.ncols();
    let seed = RngSeed::new(global.seed.unwrap_or(0));
    let mut spec = TestSpec::zero_mean(d, args.p, args.alpha, args.estimator.clone(), args.b, seed);
    if let Some(path) = &args.m_file {
        spec.m = harness::read_matrix_csv(open(path)?, false)?;
        spec.m0 = vec![0.0; spec.m.nrows()];
    }
    if let Some(path) = &args.m0_file {
        spec.m0 = harness::read_vector_csv(open(path)?, false)?;
    }
    if let Err(e) = spec.validate(d) {
        return Err(Failure::Config(e.to_string()));
    }
    let result = run_test(&x, &spec)?;
    let mut table = Table::new(TestResult::CSV_HEADER);
    table.push(result.csv_row());
    emit(&table, global.out.as_deref())
}

fn volume(global: &Global, args: &VolumeArgs) -> Result<(), Failure> {
    let p = match args.p.trim() {
        "inf" | "infinity" => f64::INFINITY,
        s => s
            .parse::<f64>()
            .map_err(|_| Failure::Config(format!("invalid exponent `{s}`")))?,
    };
    let v = lp_ball_volume(args.d, p, args.r).map_err(|e| Failure::Config(e.to_string()))?;
    let text = match v.volume {
        Some(vol) => format!("{vol}\n"),
        None => format!("log_volume={}\n", v.log_volume),
    };
    match &global.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Runtime(e.to_string()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}
