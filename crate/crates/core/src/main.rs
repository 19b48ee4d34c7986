use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tadmm::bench::{
    build_problem, compare_row, run_method, Method, ProblemParams, COMPARE_COLUMNS,
};
use tadmm::data::{gen_classification, gen_lasso, SyntheticRecipe};
use tadmm::io::{save_dataset, Dataset, Format, TargetKind};
use tadmm::problem::{ProblemKind, SolverConfig, TauRule, TAU_REFERENCE_ROWS};
use tadmm::ratecheck::{ratecheck, RateCheckOptions};
use tadmm::record::Status;

const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "tadmm",
    version,
    about = "Distributed model fitting with unwrapped and consensus ADMM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write its convergence record.
    Solve(SolveArgs),
    /// Run both methods on the same data and print a comparison table.
    Compare(CompareArgs),
    /// Check the convergence-rate bounds of unwrapped ADMM.
    Ratecheck(RatecheckArgs),
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Transpose,
    Unwrapped,
    Consensus,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Transpose => Method::Transpose,
            MethodArg::Unwrapped => Method::Unwrapped,
            MethodArg::Consensus => Method::Consensus,
        }
    }
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// lasso, logistic, svm, sparse-logistic, dual-lasso or least-squares.
    #[arg(long)]
    problem: ProblemKind,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    /// Rows per node; overrides --m.
    #[arg(long)]
    per_node: Option<usize>,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Add a per-node Gaussian offset to the data.
    #[arg(long)]
    hetero: bool,
    /// Penalty weight (default: ten percent of the zero-solution threshold).
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    /// Load data from a dataset file instead of generating it.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl ProblemArgs {
    fn params(&self) -> ProblemParams {
        ProblemParams {
            kind: self.problem,
            m: self.m,
            per_node: self.per_node,
            n: self.n,
            nodes: self.nodes,
            seed: self.seed,
            hetero: self.hetero,
            mu: self.mu,
            c: self.c,
            data: self.data.clone(),
        }
    }
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Fixed stepsize.
    #[arg(long, conflicts_with = "tau_ref")]
    tau: Option<f64>,
    /// Stepsize at 10000 rows, scaled proportionally to the row count.
    #[arg(long)]
    tau_ref: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    eps_rel: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps_abs: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Use the interpolated lookup table for the logistic prox.
    #[arg(long)]
    lookup: bool,
    /// Diagonal of the identity block that carries an l1 penalty
    /// (default: root-mean-square column norm of the data).
    #[arg(long)]
    augment_scale: Option<f64>,
}

impl ConfigArgs {
    fn config(&self, seed: u64) -> SolverConfig {
        let tau = match (self.tau, self.tau_ref) {
            (Some(t), _) => Some(TauRule::Fixed(t)),
            (None, Some(t0)) => Some(TauRule::Proportional {
                m0: TAU_REFERENCE_ROWS,
                tau0: t0,
            }),
            (None, None) => None,
        };
        SolverConfig {
            tau,
            eps_rel: self.eps_rel,
            eps_abs: self.eps_abs,
            max_iter: self.max_iter,
            seed,
            use_lookup: self.lookup,
            augment_scale: self.augment_scale,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value = "transpose")]
    method: MethodArg,
    /// Convergence record CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Also run on heterogenized shards with the same seed.
    #[arg(long)]
    hetero_pair: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RatecheckArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 1.05)]
    slack: f64,
    /// Iterations logged in the checked run.
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    /// Skip the gradient bound.
    #[arg(long)]
    no_gradient: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Lasso,
    Classification,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Binary,
    Text,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
}

fn write_table(header: &[&str], rows: &[Vec<String>], out: Option<&PathBuf>) -> tadmm::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| tadmm::Error::Io(e.into_error()))?;
    match out {
        Some(path) => {
            let dir = path
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(std::path::Path::new("."));
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            std::io::Write::write_all(&mut tmp, &bytes)?;
            tmp.persist(path).map_err(|e| tadmm::Error::Io(e.error))?;
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn solve(args: &SolveArgs) -> tadmm::Result<u8> {
    let problem = build_problem(&args.problem.params())?;
    let cfg = args.config.config(args.problem.seed);
    let run = run_method(&problem, args.method.into(), &cfg)?;
    if let Some(path) = &args.out {
        run.record.write_csv(path)?;
    }
    println!(
        "method={} problem={} status={} iterations={} objective={:.12e}",
        run.method.name(),
        problem.kind,
        run.record.meta.status.name(),
        run.record.iterations(),
        run.objective
    );
    Ok(match run.record.meta.status {
        Status::Converged => 0,
        Status::MaxIter => 2,
        Status::Error => 1,
    })
}

fn compare(args: &CompareArgs) -> tadmm::Result<u8> {
    let cfg = args.config.config(args.problem.seed);
    let variants: &[bool] = if args.hetero_pair {
        &[false, true]
    } else {
        &[args.problem.hetero]
    };
    let mut rows = Vec::new();
    for &hetero in variants {
        let mut params = args.problem.params();
        params.hetero = hetero;
        let problem = build_problem(&params)?;
        for method in [Method::Transpose, Method::Consensus] {
            let run = run_method(&problem, method, &cfg)?;
            rows.push(compare_row(&run, hetero));
        }
    }
    write_table(&COMPARE_COLUMNS, &rows, args.out.as_ref())?;
    Ok(0)
}

fn rate(args: &RatecheckArgs) -> tadmm::Result<u8> {
    let problem = build_problem(&args.problem.params())?;
    let cfg = args.config.config(args.problem.seed);
    let opts = RateCheckOptions {
        slack: args.slack,
        iterations: args.iterations,
        gradient: !args.no_gradient,
        ..Default::default()
    };
    let rep = ratecheck(&problem, &cfg, &opts)?;
    println!(
        "tau={:e} R={:e} rho={} L={} C={}",
        rep.tau,
        rep.initial_distance,
        rep.rho.map_or("-".into(), |v| format!("{v:e}")),
        rep.loss_lipschitz.map_or("-".into(), |v| format!("{v}")),
        rep.bound_constant.map_or("-".into(), |v| format!("{v:e}")),
    );
    println!("{}", rep.iterate_bound.line());
    if let Some(g) = &rep.gradient {
        println!("{}", g.line());
    }
    println!("{}", if rep.passed() { "PASS" } else { "FAIL" });
    Ok(if rep.passed() { 0 } else { 1 })
}

fn generate(args: &GenerateArgs) -> tadmm::Result<u8> {
    let ds = match args.kind {
        Kind::Lasso => {
            let d = gen_lasso(&SyntheticRecipe::lasso(args.m, args.n, args.seed))?;
            Dataset::new(d.matrix, d.targets, TargetKind::Values)?
        }
        Kind::Classification => {
            let (d, l) =
                gen_classification(&SyntheticRecipe::classification(args.m, args.n, args.seed))?;
            Dataset::new(d, l, TargetKind::Labels)?
        }
    };
    let format = match args.format {
        FormatArg::Binary => Format::Binary,
        FormatArg::Text => Format::Text,
    };
    save_dataset(&args.out, &ds, format)?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Compare(a) => compare(a),
        Command::Ratecheck(a) => rate(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
