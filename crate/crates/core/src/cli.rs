//! Command-line front end. Exit status: 0 on success, 1 on invalid input or
//! any other error, 2 when `--strict` is set and a solver did not converge.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::conditions::{evaluate_conditions, spark, BoundParams, SPARK_DEFAULT_MAX_N};
use crate::convex::{lopt_solve, popt_solve, ConvexResult, SolverConfig};
use crate::error::{GmmvError, Result};
use crate::experiments::{compare_mmv_gmmv, run_sweep, summarize, write_sweep_csv, ExperimentSpec};
use crate::io::{load_ensemble, read_matrix, save_ensemble, write_matrix};
use crate::model::{
    generate_gaussian_ensemble, generate_permuted_ensemble, sample_signals, synthesize_observations,
    MeasurementEnsemble, NoiseSpec, Observations, SignalDistribution, SupportSet,
};
use crate::momp::{momp_solve, MompConfig};
use crate::rng::rng_from;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gmmv", version, about = "Joint sparse recovery with one measurement matrix per signal")]
pub struct Cli {
    /// Worker threads for parallel sweeps (defaults to all cores).
    #[arg(long, global = true, env = "GMMV_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an ensemble or a synthetic instance.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Evaluate every recovery condition for an ensemble and support.
    CheckConditions(CheckArgs),
    /// Run a solver on saved observations.
    #[command(subcommand)]
    Solve(SolveCommand),
    /// Run a Monte Carlo sweep described by a JSON spec.
    Sweep(SweepArgs),
    /// Compare a replicated base matrix with random column permutations of it.
    CompareMmv(CompareArgs),
    /// Brute-force spark of a matrix.
    Spark(SparkArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EnsembleKind {
    Gaussian,
    Permuted,
    Mmv,
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Write `d` matrices and a manifest into a directory.
    Ensemble(GenEnsembleArgs),
    /// Draw a support, signals and noisy observations for a saved ensemble.
    Instance(GenInstanceArgs),
}

#[derive(Debug, Args)]
pub struct GenEnsembleArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kind: EnsembleKind,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: usize,
    /// Normalize every column to unit ℓ2 norm (gaussian only).
    #[arg(long)]
    pub unit_columns: bool,
    /// Base matrix file (permuted and mmv).
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenInstanceArgs {
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Random support of this size.
    #[arg(long, conflicts_with = "support", required_unless_present = "support")]
    pub s: Option<usize>,
    /// Fixed support, e.g. `0,2,5`.
    #[arg(long)]
    pub support: Option<String>,
    /// `gaussian`, `rademacher` or `uniform:M`.
    #[arg(long, default_value = "gaussian")]
    pub dist: String,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Comma-separated column indices.
    #[arg(long)]
    pub support: String,
    /// JSON file of bound constants (xi, beta, rho, varsigma, c_sa, c1..c4, varkappa, gamma_reg, epsilon).
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveCommon {
    #[arg(long)]
    pub ensemble: PathBuf,
    /// `m x d` matrix file; column `i` is `y^(i)`.
    #[arg(long)]
    pub observations: PathBuf,
    /// Exit with status 2 when the solver does not converge.
    #[arg(long)]
    pub strict: bool,
    /// Write the estimate (`n x d`) to this matrix file.
    #[arg(long)]
    pub estimate_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvexOpts {
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_obj: Option<f64>,
    #[arg(long)]
    pub tol_feas: Option<f64>,
    #[arg(long)]
    pub admm_rho: Option<f64>,
    /// Disable the least-squares re-fit on the extracted support.
    #[arg(long)]
    pub no_polish: bool,
}

impl ConvexOpts {
    fn config(&self, gamma: Option<f64>) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            gamma_reg: gamma.unwrap_or(d.gamma_reg),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol_obj: self.tol_obj.unwrap_or(d.tol_obj),
            tol_feas: self.tol_feas.unwrap_or(d.tol_feas),
            admm_rho: self.admm_rho.unwrap_or(d.admm_rho),
            step_rule: d.step_rule,
            polish: !self.no_polish,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SolveCommand {
    /// Greedy joint-support pursuit.
    Momp {
        #[command(flatten)]
        common: SolveCommon,
        /// Stop after this many selections.
        #[arg(long, required_unless_present = "eps")]
        sparsity: Option<usize>,
        /// Stop once the joint residual is at most this value.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Mixed-norm minimization under exact measurement constraints.
    Lopt {
        #[command(flatten)]
        common: SolveCommon,
        #[command(flatten)]
        opts: ConvexOpts,
    },
    /// Mixed-norm penalized least squares.
    Popt {
        #[command(flatten)]
        common: SolveCommon,
        /// Penalty weight.
        #[arg(long)]
        gamma: f64,
        #[command(flatten)]
        opts: ConvexOpts,
    },
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every trial record as JSON.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Overrides `base_seed` from the `--spec` file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub s: usize,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SparkArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Refuse matrices with more columns than this.
    #[arg(long, default_value_t = SPARK_DEFAULT_MAX_N)]
    pub max_n: usize,
}

/// Outcome of a successful command.
enum Done {
    Ok,
    NotConverged,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(Done::Ok) => EXIT_OK,
        Ok(Done::NotConverged) => {
            eprintln!("error: solver did not converge");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn execute(cli: Cli) -> Result<Done> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(GmmvError::invalid("--threads must be at least 1"));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| GmmvError::invalid(format!("--threads: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn flag<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        GmmvError::InvalidArgument(m) => GmmvError::InvalidArgument(format!("{name}: {m}")),
        other => other,
    })
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn dispatch(command: Command) -> Result<Done> {
    match command {
        Command::Gen(GenCommand::Ensemble(a)) => gen_ensemble(a),
        Command::Gen(GenCommand::Instance(a)) => gen_instance(a),
        Command::CheckConditions(a) => check_conditions(a),
        Command::Solve(s) => solve(s),
        Command::Sweep(a) => sweep(a),
        Command::CompareMmv(a) => {
            let base = read_matrix(&a.base)?;
            print_json(&flag("--s", compare_mmv_gmmv(&base, a.d, a.s, a.trials, a.seed))?)?;
            Ok(Done::Ok)
        }
        Command::Spark(a) => {
            let m = read_matrix(&a.matrix)?;
            println!("{}", spark(&m, a.max_n)?);
            Ok(Done::Ok)
        }
    }
}

fn gen_ensemble(a: GenEnsembleArgs) -> Result<Done> {
    let need = |v: Option<usize>, name: &str| v.ok_or_else(|| GmmvError::invalid(format!("{name} is required for --kind gaussian")));
    let need_base = || -> Result<DMatrix<f64>> {
        let p = a.base.as_ref().ok_or_else(|| GmmvError::invalid("--base is required for this --kind"))?;
        read_matrix(p)
    };
    let ens = match a.kind {
        EnsembleKind::Gaussian => {
            flag("--m/--n/--d", generate_gaussian_ensemble(need(a.m, "--m")?, need(a.n, "--n")?, a.d, a.unit_columns, a.seed))?
        }
        EnsembleKind::Permuted => flag("--d", generate_permuted_ensemble(&need_base()?, a.d, a.seed))?,
        EnsembleKind::Mmv => flag("--d", MeasurementEnsemble::replicated(&need_base()?, a.d))?,
    };
    save_ensemble(&a.out, &ens)?;
    Ok(Done::Ok)
}

fn parse_dist(text: &str) -> Result<SignalDistribution> {
    match text.split_once(':') {
        None if text == "gaussian" => Ok(SignalDistribution::gaussian()),
        None if text == "rademacher" => Ok(SignalDistribution::rademacher()),
        Some(("uniform", m)) => {
            let bound: f64 = m.parse().map_err(|_| GmmvError::invalid(format!("--dist: bad bound {m:?}")))?;
            flag("--dist", SignalDistribution::uniform_bounded(bound))
        }
        _ => Err(GmmvError::invalid(format!("--dist: expected gaussian, rademacher or uniform:M, got {text:?}"))),
    }
}

fn gen_instance(a: GenInstanceArgs) -> Result<Done> {
    let ens = load_ensemble(&a.ensemble)?;
    let n = ens.cols();
    let support = match (&a.support, a.s) {
        (Some(list), _) => flag("--support", SupportSet::parse(list, n))?,
        (None, Some(s)) => flag("--s", SupportSet::random(n, s, &mut rng_from(a.seed)))?,
        (None, None) => unreachable!("clap requires one of --s/--support"),
    };
    let dist = parse_dist(&a.dist)?;
    let signals = sample_signals(&support, ens.count(), dist, a.seed.wrapping_add(1))?;
    let obs = flag("--eps", synthesize_observations(&ens, &signals, NoiseSpec { epsilon: a.eps }, a.seed.wrapping_add(2)))?;
    std::fs::create_dir_all(&a.out).map_err(|e| GmmvError::io(&a.out, e))?;
    write_matrix(a.out.join("observations.txt"), obs.vectors())?;
    write_matrix(a.out.join("signals.txt"), signals.values())?;
    let meta = json!({
        "support": support.indices(),
        "epsilon": a.eps,
        "seed": a.seed,
        "dist": dist,
    });
    let path = a.out.join("instance.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| GmmvError::io(&path, e))?;
    Ok(Done::Ok)
}

fn check_conditions(a: CheckArgs) -> Result<Done> {
    let ens = load_ensemble(&a.ensemble)?;
    let support = flag("--support", SupportSet::parse(&a.support, ens.cols()))?;
    let params: Option<BoundParams> = match &a.params {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| GmmvError::io(p, e))?;
            Some(serde_json::from_str(&text).map_err(|e| GmmvError::Parse { path: p.clone(), message: e.to_string() })?)
        }
        None => None,
    };
    print_json(&evaluate_conditions(&ens, &support, params.as_ref())?)?;
    Ok(Done::Ok)
}

fn load_problem(c: &SolveCommon, eps: f64) -> Result<(MeasurementEnsemble, Observations)> {
    let ens = load_ensemble(&c.ensemble)?;
    let obs = Observations::new(read_matrix(&c.observations)?, eps)?;
    flag("--observations", obs.check_against(&ens))?;
    Ok((ens, obs))
}

fn write_estimate(path: &Option<PathBuf>, x: &DMatrix<f64>) -> Result<()> {
    match path {
        Some(p) => write_matrix(p, x),
        None => Ok(()),
    }
}

fn convex_json(name: &str, r: &ConvexResult) -> Value {
    json!({
        "solver": name,
        "support": r.support.indices(),
        "converged": r.converged,
        "iterations_used": r.iterations_used,
        "kkt_residual": r.kkt_residual,
        "feasibility_residual": r.feasibility_residual,
        "objective_trace": r.objective_trace,
        "lipschitz": r.lipschitz,
        "polished": r.polished,
        "estimate": rows(&r.estimate),
    })
}

fn finish(strict: bool, converged: bool) -> Done {
    if strict && !converged {
        Done::NotConverged
    } else {
        Done::Ok
    }
}

fn solve(cmd: SolveCommand) -> Result<Done> {
    match cmd {
        SolveCommand::Momp { common, sparsity, eps } => {
            let (ens, obs) = load_problem(&common, eps.unwrap_or(0.0))?;
            let cfg = MompConfig { max_iterations: None, stop_residual: eps.unwrap_or(0.0), known_support_size: sparsity };
            let r = flag("--sparsity/--eps", momp_solve(&ens, &obs, &cfg))?;
            write_estimate(&common.estimate_out, r.estimate.values())?;
            print_json(&json!({
                "solver": "momp",
                "support": r.support().indices(),
                "selected": r.selected,
                "converged": r.converged,
                "rank_deficient": r.rank_deficient,
                "residual_norms": r.residual_norms,
                "estimate": rows(r.estimate.values()),
            }))?;
            Ok(finish(common.strict, r.converged))
        }
        SolveCommand::Lopt { common, opts } => {
            let (ens, obs) = load_problem(&common, 0.0)?;
            let r = lopt_solve(&ens, &obs, &opts.config(None))?;
            write_estimate(&common.estimate_out, &r.estimate)?;
            print_json(&convex_json("lopt", &r))?;
            Ok(finish(common.strict, r.converged))
        }
        SolveCommand::Popt { common, gamma, opts } => {
            let (ens, obs) = load_problem(&common, 0.0)?;
            let r = flag("--gamma", popt_solve(&ens, &obs, &opts.config(Some(gamma))))?;
            write_estimate(&common.estimate_out, &r.estimate)?;
            print_json(&convex_json("popt", &r))?;
            Ok(finish(common.strict, r.converged))
        }
    }
}

fn read_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| GmmvError::io(path, e))?;
    ExperimentSpec::from_json(&text).map_err(|e| match e {
        GmmvError::Json(j) => GmmvError::Parse { path: path.to_path_buf(), message: j.to_string() },
        GmmvError::InvalidArgument(m) => GmmvError::InvalidArgument(format!("--spec: {m}")),
        other => other,
    })
}

fn sweep(a: SweepArgs) -> Result<Done> {
    let mut spec = read_spec(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.base_seed = seed;
    }
    let result = run_sweep(&spec)?;
    write_sweep_csv(&result, &a.out)?;
    if let Some(p) = &a.records {
        std::fs::write(p, serde_json::to_string_pretty(&result)?).map_err(|e| GmmvError::io(p, e))?;
    }
    eprint!("{}", summarize(&result));
    Ok(Done::Ok)
}
