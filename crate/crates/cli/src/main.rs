use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use momentcp::bench::{run_bench, write_bench_csv, BenchScenario};
use momentcp::decompose::{
    decompose, gmm_sweep, write_sweep_csv, AlphaMode, DecomposeOptions, EvalMode, InitKind, Method, SweepOptions,
};
use momentcp::gmm::GmmSpec;
use momentcp::io::{read_observations, write_observations, write_traces, ObservationFormat, SolutionRecord};
use momentcp::{AdamConfig, ElementCap, Error, OptConfig};
use rand::SeedableRng;

/// Symmetric CP decomposition of moment tensors, computed from the observations.
#[derive(Parser)]
#[command(name = "momentcp", version)]
struct Cli {
    /// Worker threads for multistart runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a symmetric Kruskal model to the moment of an observation file.
    Decompose(DecomposeArgs),
    /// Time explicit against implicit evaluation inside L-BFGS runs.
    Bench(BenchArgs),
    /// Sweep ranks on data drawn from a Gaussian mixture.
    Gmm(GmmArgs),
    /// Write Gaussian mixture observations to a file.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

impl From<FormatArg> for ObservationFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ObservationFormat::Csv,
            FormatArg::Binary => ObservationFormat::Binary,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Rrf,
    Gaussian,
}

impl From<InitArg> for InitKind {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Rrf => InitKind::Rrf,
            InitArg::Gaussian => InitKind::Gaussian,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    Lbfgs,
    Adam,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphaArg {
    Zero,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalArg {
    Implicit,
    Explicit,
}

#[derive(clap::Args)]
struct DecomposeArgs {
    /// Observation file, one observation per row (.csv) or MOMV binary (.bin).
    #[arg(long)]
    input: PathBuf,
    /// Overrides the format implied by the file extension.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Tensor order d.
    #[arg(long)]
    order: usize,
    /// Model rank.
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, value_enum, default_value = "rrf")]
    init: InitArg,
    /// Gradient infinity-norm tolerance (L-BFGS).
    #[arg(long, default_value_t = 1e-4)]
    pgtol: f64,
    #[arg(long, value_enum, default_value = "zero")]
    alpha: AlphaArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "lbfgs")]
    method: MethodArg,
    /// Observations sampled per Adam update.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, value_enum, default_value = "implicit")]
    eval: EvalArg,
    /// Solution JSON (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-run trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long)]
    order: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0.05)]
    pgtol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV report (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GmmArgs {
    #[arg(long)]
    n: usize,
    /// Number of mixture components.
    #[arg(long)]
    r: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long)]
    rank_min: usize,
    #[arg(long)]
    rank_max: usize,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pgtol: f64,
    #[arg(long, value_enum, default_value = "rrf")]
    init: InitArg,
    #[arg(long, default_value_t = 250)]
    samples_per_component: usize,
    #[arg(long, default_value_t = 0.5)]
    congruence: f64,
    /// CSV with one row per rank (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 250)]
    samples_per_component: usize,
    #[arg(long, default_value_t = 0.5)]
    congruence: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    output: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match cli.threads {
        Some(0) => return fail(Failure::Usage("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => return fail(Failure::Runtime(Error::Resource(e.to_string()))),
    };
    let result = pool.install(|| match cli.command {
        Command::Decompose(args) => cmd_decompose(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Gmm(args) => cmd_gmm(args),
        Command::Generate(args) => cmd_generate(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    match f {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Failure::Runtime(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_decompose(args: DecomposeArgs) -> Result<(), Failure> {
    let method = match (args.method, args.batch) {
        (MethodArg::Lbfgs, Some(_)) => return Err(Failure::Usage("--batch only applies to --method adam".into())),
        (MethodArg::Lbfgs, None) => Method::Lbfgs,
        (MethodArg::Adam, batch) => {
            if matches!(args.eval, EvalArg::Explicit) {
                return Err(Failure::Usage("--method adam cannot use --eval explicit".into()));
            }
            let mut cfg = AdamConfig::default();
            if let Some(s) = batch {
                cfg.batch_size = s;
            }
            Method::Adam(cfg)
        }
    };
    if args.pgtol.is_nan() || args.pgtol <= 0.0 {
        return Err(Failure::Usage(format!("--pgtol must be positive, got {}", args.pgtol)));
    }
    let obs = read_observations::<f64>(&args.input, args.format.map(Into::into))?;
    let opts = DecomposeOptions {
        starts: args.starts,
        init: args.init.into(),
        eval: match args.eval {
            EvalArg::Implicit => EvalMode::Implicit,
            EvalArg::Explicit => EvalMode::Explicit,
        },
        alpha: match args.alpha {
            AlphaArg::Zero => AlphaMode::Zero,
            AlphaArg::Exact => AlphaMode::Exact,
        },
        method,
        opt: OptConfig { pgtol: args.pgtol, seed: args.seed, ..Default::default() },
        seed: args.seed,
        cap: ElementCap::from_env(),
        ..DecomposeOptions::new(args.order, args.rank)
    };
    let out = decompose(&obs, &opts)?;
    let record = SolutionRecord::from_report(&out.report, args.order, obs.len(), out.alpha, opts.method.name());
    let mut w = output(args.output.as_deref())?;
    writeln!(w, "{}", record.to_json()?)?;
    w.flush()?;
    if let Some(path) = &args.trace {
        let mut t = output(Some(path))?;
        write_traces(&mut t, &out.report)?;
        t.flush()?;
    }
    let best = out.best();
    eprintln!(
        "best of {} runs: f = {:e}, |g|∞ = {:e}, {} evaluations, {}",
        args.starts, best.f, best.grad_inf_norm, best.evaluations, best.reason
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let scenario = BenchScenario {
        runs: args.runs,
        pgtol: args.pgtol,
        seed: args.seed,
        ..BenchScenario::new(args.order, args.n, args.p, args.r)
    };
    let report = run_bench(&scenario, ElementCap::from_env())?;
    if let Some(notice) = &report.notice {
        eprintln!("{notice}");
    }
    let mut w = output(args.output.as_deref())?;
    write_bench_csv(&mut w, &report)?;
    w.flush()?;
    Ok(())
}

fn check_components(r: usize, n: usize) -> Result<(), Failure> {
    if r == 0 || r > n {
        return Err(Failure::Usage(format!("need 1 ≤ r ≤ n, got r={r} n={n}")));
    }
    Ok(())
}

fn cmd_gmm(args: GmmArgs) -> Result<(), Failure> {
    check_components(args.r, args.n)?;
    let opts = SweepOptions {
        spec: GmmSpec {
            samples_per_component: args.samples_per_component,
            congruence: args.congruence,
            ..GmmSpec::new(args.n, args.r, args.sigma)
        },
        order: args.order,
        rank_min: args.rank_min,
        rank_max: args.rank_max,
        starts: args.starts,
        init: args.init.into(),
        opt: OptConfig { pgtol: args.pgtol, seed: args.seed, ..Default::default() },
        seed: args.seed,
    };
    let sweep = gmm_sweep(&opts)?;
    let mut w = output(args.output.as_deref())?;
    write_sweep_csv(&mut w, &sweep.rows)?;
    w.flush()?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    check_components(args.r, args.n)?;
    let spec = GmmSpec {
        samples_per_component: args.samples_per_component,
        congruence: args.congruence,
        ..GmmSpec::new(args.n, args.r, args.sigma)
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let sample = spec.generate::<f64, _>(&mut rng)?;
    write_observations(&args.output, &sample.obs, args.format.map(Into::into))?;
    Ok(())
}
