//! Monte Carlo harness: draws instances, runs a solver, and aggregates
//! failure rates over a grid of `(d, epsilon)` cells.
//!
//! Every trial is seeded from `base_seed` and its cell coordinates only, so
//! results do not depend on thread scheduling or on which cells are run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use itertools::Itertools;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{
    evaluate_average_condition, evaluate_worst_case, local_isometry, momp_condition, momp_error_bound,
    momp_noise_budget, momp_varkappa_for_noise, popt_error_bound, BoundParams,
};
use crate::convex::{least_squares_on_support, lopt_solve, popt_solve, SolverConfig};
use crate::error::{GmmvError, Result};
use crate::io::{load_ensemble, read_matrix};
use crate::linalg::{pseudoinverse, select_columns};
use crate::model::{
    generate_gaussian_ensemble, generate_permuted_ensemble, sample_signals, synthesize_observations,
    MeasurementEnsemble, NoiseSpec, Observations, SignalDistribution, SignalEnsemble, SupportSet,
};
use crate::momp::{momp_solve, MompConfig};
use crate::rng::{derive_seed, mix64, rng_from};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
/// Absolute slack added to the greedy noisy error bound.
pub const BOUND_SLACK: f64 = 1e-9;
pub const P0_MAX_N: usize = 20;
pub const P0_MAX_S: usize = 6;

const STREAM_SUPPORT: u64 = 0;
const STREAM_SIGNALS: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_ENSEMBLE: u64 = 3;
/// Stream for the ensemble shared by every trial of a sweep.
const STREAM_SHARED_ENSEMBLE: u64 = u64::MAX;

/// A dense matrix given either as a path to a matrix text file or inline as rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Path(PathBuf),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSource {
    pub fn load(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixSource::Path(p) => read_matrix(p),
            MatrixSource::Rows(rows) => {
                let m = rows.len();
                let n = rows.first().map_or(0, Vec::len);
                if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(GmmvError::invalid("inline matrix must be a non-empty rectangle"));
                }
                Ok(DMatrix::from_fn(m, n, |r, c| rows[r][c]))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleSource {
    /// Independent standard Gaussian matrices.
    Gaussian { m: usize, n: usize, #[serde(default)] unit_columns: bool },
    /// Independent uniformly random column permutations of one base matrix.
    Permuted { base: MatrixSource },
    /// The base matrix repeated `d` times.
    Mmv { base: MatrixSource },
    /// An ensemble saved by `gen`; cells use its first `d` matrices.
    FromFiles { dir: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupportPolicy {
    Fixed { indices: Vec<usize> },
    Random { s: usize },
}

impl SupportPolicy {
    pub fn size(&self) -> usize {
        match self {
            SupportPolicy::Fixed { indices } => indices.len(),
            SupportPolicy::Random { s } => *s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverChoice {
    /// Greedy selection with the true support size as iteration count.
    Momp,
    Lopt,
    Popt { gamma: f64 },
}

fn default_dist() -> SignalDistribution {
    SignalDistribution::gaussian()
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub ensemble: EnsembleSource,
    pub d_values: Vec<usize>,
    pub support: SupportPolicy,
    #[serde(default = "default_dist")]
    pub dist: SignalDistribution,
    #[serde(default = "default_noise")]
    pub noise_eps: Vec<f64>,
    pub solver: SolverChoice,
    pub trials: usize,
    pub base_seed: u64,
    /// Draw a fresh ensemble for every trial instead of one per sweep.
    #[serde(default)]
    pub resample_ensemble: bool,
    /// Constants of the penalized error bound; the bound is enforced only when both are set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c4: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_config: Option<SolverConfig>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(GmmvError::invalid("trials must be at least 1"));
        }
        if self.d_values.is_empty() || self.d_values.contains(&0) {
            return Err(GmmvError::invalid("d_values must be non-empty and positive"));
        }
        if self.noise_eps.is_empty() || self.noise_eps.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(GmmvError::invalid("noise_eps must be non-empty, finite and >= 0"));
        }
        if let SolverChoice::Popt { gamma } = self.solver {
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(GmmvError::invalid(format!("popt gamma = {gamma} must be positive")));
            }
        }
        if let EnsembleSource::Gaussian { m, n, .. } = self.ensemble {
            if m == 0 || n == 0 {
                return Err(GmmvError::invalid("gaussian ensemble needs m, n >= 1"));
            }
        }
        Ok(())
    }

    /// FNV-1a over the canonical JSON encoding, as 16 hex digits.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    fn solver_config(&self) -> SolverConfig {
        let mut cfg = self.solver_config.clone().unwrap_or_default();
        if let SolverChoice::Popt { gamma } = self.solver {
            cfg.gamma_reg = gamma;
        }
        cfg
    }
}

/// Per-trial seed: `base_seed` XOR a hash of `(d, epsilon, trial)`.
pub fn trial_seed(base_seed: u64, d: usize, epsilon: f64, trial: usize) -> u64 {
    let h = mix64(mix64(mix64(d as u64) ^ epsilon.to_bits()) ^ trial as u64);
    base_seed ^ h
}

/// Ensemble material resolved once per sweep.
enum Prepared {
    Shared(MeasurementEnsemble),
    GaussianPerTrial { m: usize, n: usize, unit_columns: bool },
    PermutedPerTrial(DMatrix<f64>),
}

fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    let d_max = *spec.d_values.iter().max().expect("validated non-empty");
    let shared_seed = derive_seed(spec.base_seed, STREAM_SHARED_ENSEMBLE);
    Ok(match &spec.ensemble {
        EnsembleSource::Gaussian { m, n, unit_columns } => {
            if spec.resample_ensemble {
                Prepared::GaussianPerTrial { m: *m, n: *n, unit_columns: *unit_columns }
            } else {
                Prepared::Shared(generate_gaussian_ensemble(*m, *n, d_max, *unit_columns, shared_seed)?)
            }
        }
        EnsembleSource::Permuted { base } => {
            let base = base.load()?;
            if spec.resample_ensemble {
                Prepared::PermutedPerTrial(base)
            } else {
                Prepared::Shared(generate_permuted_ensemble(&base, d_max, shared_seed)?)
            }
        }
        EnsembleSource::Mmv { base } => Prepared::Shared(MeasurementEnsemble::replicated(&base.load()?, d_max)?),
        EnsembleSource::FromFiles { dir } => {
            let e = load_ensemble(dir)?;
            if e.count() < d_max {
                return Err(GmmvError::invalid(format!(
                    "{} holds {} matrices but d = {d_max} was requested",
                    dir.display(),
                    e.count()
                )));
            }
            Prepared::Shared(e)
        }
    })
}

impl Prepared {
    fn ensemble(&self, d: usize, seed: u64) -> Result<MeasurementEnsemble> {
        let seed = derive_seed(seed, STREAM_ENSEMBLE);
        match self {
            Prepared::Shared(e) => e.prefix(d),
            Prepared::GaussianPerTrial { m, n, unit_columns } => generate_gaussian_ensemble(*m, *n, d, *unit_columns, seed),
            Prepared::PermutedPerTrial(base) => generate_permuted_ensemble(base, d, seed),
        }
    }
}

/// One synthetic problem.
#[derive(Clone, Debug)]
pub struct Instance {
    pub seed: u64,
    pub ensemble: MeasurementEnsemble,
    pub signals: SignalEnsemble,
    pub observations: Observations,
}

fn draw_instance(spec: &ExperimentSpec, prepared: &Prepared, d: usize, epsilon: f64, trial: usize) -> Result<Instance> {
    let seed = trial_seed(spec.base_seed, d, epsilon, trial);
    let ensemble = prepared.ensemble(d, seed)?;
    let n = ensemble.cols();
    let support = match &spec.support {
        SupportPolicy::Fixed { indices } => SupportSet::new(indices.iter().copied(), n)?,
        SupportPolicy::Random { s } => SupportSet::random(n, *s, &mut rng_from(derive_seed(seed, STREAM_SUPPORT)))?,
    };
    let signals = sample_signals(&support, d, spec.dist, derive_seed(seed, STREAM_SIGNALS))?;
    let observations =
        synthesize_observations(&ensemble, &signals, NoiseSpec { epsilon }, derive_seed(seed, STREAM_NOISE))?;
    Ok(Instance { seed, ensemble, signals, observations })
}

struct SolveOutcome {
    estimate: DMatrix<f64>,
    support: SupportSet,
    converged: bool,
}

fn run_solver(choice: SolverChoice, cfg: &SolverConfig, inst: &Instance) -> Result<SolveOutcome> {
    let s = inst.signals.support().len();
    Ok(match choice {
        SolverChoice::Momp => {
            let r = momp_solve(&inst.ensemble, &inst.observations, &MompConfig::with_sparsity(s))?;
            SolveOutcome { support: r.support().clone(), converged: r.converged, estimate: r.estimate.into_values() }
        }
        SolverChoice::Lopt => {
            let r = lopt_solve(&inst.ensemble, &inst.observations, cfg)?;
            SolveOutcome { support: r.support, converged: r.converged, estimate: r.estimate }
        }
        SolverChoice::Popt { .. } => {
            let r = popt_solve(&inst.ensemble, &inst.observations, cfg)?;
            SolveOutcome { support: r.support, converged: r.converged, estimate: r.estimate }
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub seed: u64,
    pub d: usize,
    pub epsilon: f64,
    pub support_true: Vec<usize>,
    pub support_recovered: Vec<usize>,
    pub exact_support: bool,
    /// `sqrt(sum_i ||x_hat^(i) - x^(i)||^2)`.
    pub signal_error: f64,
    /// `||X||_F` of the planted signals.
    pub signal_norm: f64,
    pub eq7_holds: bool,
    pub eq9_alpha: f64,
    pub solver_converged: bool,
    /// Error bound the trial was scored against, when one applies.
    pub error_bound: Option<f64>,
    pub failed: bool,
}

fn run_trial(spec: &ExperimentSpec, prepared: &Prepared, cfg: &SolverConfig, d: usize, epsilon: f64, trial: usize) -> Result<TrialRecord> {
    let inst = draw_instance(spec, prepared, d, epsilon, trial)?;
    let wrap = |e: GmmvError| GmmvError::Trial { seed: inst.seed, source: Box::new(e) };
    let support = inst.signals.support();
    let out = run_solver(spec.solver, cfg, &inst).map_err(wrap)?;
    let worst = evaluate_worst_case(&inst.ensemble, support).map_err(wrap)?;
    let avg = evaluate_average_condition(&inst.ensemble, support).map_err(wrap)?;
    let exact = out.support == *support;
    let signal_error = (&out.estimate - inst.signals.values()).norm();

    let error_bound = if epsilon > 0.0 {
        match spec.solver {
            SolverChoice::Momp => {
                let profile = local_isometry(&inst.ensemble, support).map_err(wrap)?;
                momp_error_bound(profile.delta_max, epsilon).ok().map(|b| b + BOUND_SLACK)
            }
            SolverChoice::Popt { gamma } => match (spec.c3, spec.c4) {
                (Some(c3), Some(c4)) => Some(popt_error_bound(epsilon, gamma, support.len(), c3, c4)),
                _ => None,
            },
            SolverChoice::Lopt => None,
        }
    } else {
        None
    };
    let failed = !exact || error_bound.is_some_and(|b| signal_error > b);

    Ok(TrialRecord {
        trial_index: trial,
        seed: inst.seed,
        d,
        epsilon,
        support_true: support.indices().to_vec(),
        support_recovered: out.support.indices().to_vec(),
        exact_support: exact,
        signal_error,
        signal_norm: inst.signals.values().norm(),
        eq7_holds: worst.eq7_holds,
        eq9_alpha: avg.alpha,
        solver_converged: out.converged,
        error_bound,
        failed,
    })
}

/// Wilson score interval for `failures` out of `trials` at normal quantile `z`.
pub fn wilson_interval(failures: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).clamp(0.0, p), (centre + half).clamp(p, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub d: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub mean_error: f64,
}

impl CellResult {
    fn from_records(d: usize, epsilon: f64, records: &[TrialRecord]) -> Self {
        let trials = records.len();
        let failures = records.iter().filter(|r| r.failed).count();
        let (wilson_lo, wilson_hi) = wilson_interval(failures, trials, Z_95);
        let mean_error = records.iter().map(|r| r.signal_error).sum::<f64>() / trials as f64;
        Self {
            d,
            epsilon,
            trials,
            failures,
            failure_rate: failures as f64 / trials as f64,
            wilson_lo,
            wilson_hi,
            mean_error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub spec_hash: String,
    pub base_seed: u64,
    /// Cells in `d_values` order, then `noise_eps` order.
    pub cells: Vec<CellResult>,
    /// `records[k]` holds the trials of `cells[k]` in trial order.
    pub records: Vec<Vec<TrialRecord>>,
}

pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let prepared = prepare(spec)?;
    let cfg = spec.solver_config();
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for (&d, &eps) in spec.d_values.iter().cartesian_product(&spec.noise_eps) {
        let recs = (0..spec.trials)
            .into_par_iter()
            .map(|t| run_trial(spec, &prepared, &cfg, d, eps, t))
            .collect::<Result<Vec<_>>>()?;
        cells.push(CellResult::from_records(d, eps, &recs));
        records.push(recs);
    }
    Ok(SweepResult { spec_hash: spec.hash(), base_seed: spec.base_seed, cells, records })
}

pub fn sweep_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for cell in &result.cells {
        w.serialize(cell)?;
    }
    let bytes = w.into_inner().map_err(|e| GmmvError::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_sweep_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, sweep_csv(result)?).map_err(|e| GmmvError::io(path, e))
}

/// Smallest support explaining the observations, by exhaustive search in
/// order of increasing size and then lexicographic order. A support is
/// accepted when the joint least-squares residual is at most
/// `max(epsilon, 1e-8 ||Y||_F)`.
pub fn solve_p0_exhaustive(
    ensemble: &MeasurementEnsemble,
    observations: &Observations,
    s_max: usize,
    epsilon: f64,
) -> Result<SignalEnsemble> {
    observations.check_against(ensemble)?;
    let n = ensemble.cols();
    if n > P0_MAX_N {
        return Err(GmmvError::LimitExceeded(format!("exhaustive search needs n <= {P0_MAX_N}, got {n}")));
    }
    if s_max > P0_MAX_S {
        return Err(GmmvError::LimitExceeded(format!("exhaustive search needs s_max <= {P0_MAX_S}, got {s_max}")));
    }
    if !(epsilon >= 0.0) {
        return Err(GmmvError::invalid(format!("epsilon {epsilon} must be >= 0")));
    }
    let y = observations.vectors();
    let threshold = epsilon.max(1e-8 * y.norm());
    for k in 0..=s_max.min(n) {
        for cols in (0..n).combinations(k) {
            let mut res_sq = 0.0;
            for (i, a) in ensemble.matrices().iter().enumerate() {
                let a_s = select_columns(a, &cols);
                let fit = &a_s * (pseudoinverse(&a_s).0 * y.column(i));
                res_sq += (y.column(i) - fit).norm_squared();
            }
            if res_sq.sqrt() <= threshold {
                let support = SupportSet::new(cols, n)?;
                let values = least_squares_on_support(ensemble, y, &support);
                return SignalEnsemble::new(values, support);
            }
        }
    }
    Err(GmmvError::NoSupportFound { s_max })
}

/// Fractions over random supports of the average condition holding for the
/// replicated and the column-permuted ensemble, with recovery rates of both
/// solvers on shared noiseless Gaussian signals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub d: usize,
    pub s: usize,
    pub trials: usize,
    pub mmv_alpha_fraction: f64,
    pub permuted_alpha_fraction: f64,
    pub mmv_lopt_recovery: f64,
    pub permuted_lopt_recovery: f64,
    pub mmv_momp_recovery: f64,
    pub permuted_momp_recovery: f64,
    pub mmv_lopt_wilson: (f64, f64),
    pub permuted_lopt_wilson: (f64, f64),
    pub mean_mmv_alpha: f64,
    pub mean_permuted_alpha: f64,
}

struct CompareTrial {
    mmv_alpha: f64,
    perm_alpha: f64,
    mmv_lopt: bool,
    perm_lopt: bool,
    mmv_momp: bool,
    perm_momp: bool,
}

/// Each trial draws its own support, signals and permutations.
pub fn compare_mmv_gmmv(base: &DMatrix<f64>, d: usize, s: usize, trials: usize, seed: u64) -> Result<CompareReport> {
    if trials == 0 || d == 0 {
        return Err(GmmvError::invalid("trials and d must be at least 1"));
    }
    let n = base.ncols();
    if s > base.nrows().min(n) {
        return Err(GmmvError::invalid(format!("s = {s} exceeds min(m, n)")));
    }
    let mmv = MeasurementEnsemble::replicated(base, d)?;
    let cfg = SolverConfig::default();
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<CompareTrial> {
            let ts = derive_seed(seed, t as u64);
            let support = SupportSet::random(n, s, &mut rng_from(derive_seed(ts, STREAM_SUPPORT)))?;
            let perm = generate_permuted_ensemble(base, d, derive_seed(ts, STREAM_ENSEMBLE))?;
            let signals = sample_signals(&support, d, SignalDistribution::gaussian(), derive_seed(ts, STREAM_SIGNALS))?;
            let recovered = |e: &MeasurementEnsemble| -> Result<(bool, bool)> {
                let obs = synthesize_observations(e, &signals, NoiseSpec::noiseless(), 0)?;
                let lopt = lopt_solve(e, &obs, &cfg)?.support == support;
                let momp = *momp_solve(e, &obs, &MompConfig::with_sparsity(s))?.support() == support;
                Ok((lopt, momp))
            };
            let (mmv_lopt, mmv_momp) = recovered(&mmv)?;
            let (perm_lopt, perm_momp) = recovered(&perm)?;
            Ok(CompareTrial {
                mmv_alpha: evaluate_average_condition(&mmv, &support)?.alpha,
                perm_alpha: evaluate_average_condition(&perm, &support)?.alpha,
                mmv_lopt,
                perm_lopt,
                mmv_momp,
                perm_momp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |f: &dyn Fn(&CompareTrial) -> bool| outcomes.iter().filter(|o| f(o)).count();
    let frac = |k: usize| k as f64 / trials as f64;
    let mmv_lopt = count(&|o| o.mmv_lopt);
    let perm_lopt = count(&|o| o.perm_lopt);
    Ok(CompareReport {
        d,
        s,
        trials,
        mmv_alpha_fraction: frac(count(&|o| o.mmv_alpha < 1.0)),
        permuted_alpha_fraction: frac(count(&|o| o.perm_alpha < 1.0)),
        mmv_lopt_recovery: frac(mmv_lopt),
        permuted_lopt_recovery: frac(perm_lopt),
        mmv_momp_recovery: frac(count(&|o| o.mmv_momp)),
        permuted_momp_recovery: frac(count(&|o| o.perm_momp)),
        mmv_lopt_wilson: wilson_interval(mmv_lopt, trials, Z_95),
        permuted_lopt_wilson: wilson_interval(perm_lopt, trials, Z_95),
        mean_mmv_alpha: outcomes.iter().map(|o| o.mmv_alpha).sum::<f64>() / trials as f64,
        mean_permuted_alpha: outcomes.iter().map(|o| o.perm_alpha).sum::<f64>() / trials as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoisyTrial {
    pub d: usize,
    pub epsilon: f64,
    pub trial_index: usize,
    pub seed: u64,
    /// Greedy solver: the noise budget and the margin condition both hold.
    /// Penalized solver: always true.
    pub qualifies: bool,
    pub lhs: Option<f64>,
    pub varkappa: Option<f64>,
    pub delta_max: f64,
    pub mu_max: f64,
    pub exact_support: bool,
    pub signal_error: f64,
    pub error_bound: Option<f64>,
    pub within_bound: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoisyBoundReport {
    pub trials: usize,
    pub qualifying: usize,
    pub exact_among_qualifying: usize,
    /// `exact_among_qualifying / qualifying`; `None` with no qualifying trial.
    pub exact_fraction: Option<f64>,
    pub bound_violations_among_exact: usize,
    pub records: Vec<NoisyTrial>,
}

/// Scores noisy solves against the applicable error bound. For the greedy
/// solver `beta` is required; `varkappa` defaults to the value at which the
/// noise budget equals `epsilon`.
pub fn verify_noisy_bounds(spec: &ExperimentSpec, params: &BoundParams) -> Result<NoisyBoundReport> {
    spec.validate()?;
    if spec.noise_eps.iter().any(|&e| e <= 0.0) {
        return Err(GmmvError::invalid("noisy verification needs every epsilon > 0"));
    }
    let beta = match spec.solver {
        SolverChoice::Momp => Some(params.beta.ok_or_else(|| GmmvError::invalid("beta is required for momp"))?),
        SolverChoice::Popt { .. } => None,
        SolverChoice::Lopt => return Err(GmmvError::invalid("noisy verification supports momp and popt")),
    };
    let prepared = prepare(spec)?;
    let cfg = spec.solver_config();
    let mut records = Vec::new();
    for (&d, &eps) in spec.d_values.iter().cartesian_product(&spec.noise_eps) {
        let cell = (0..spec.trials)
            .into_par_iter()
            .map(|t| -> Result<NoisyTrial> {
                let inst = draw_instance(spec, &prepared, d, eps, t)?;
                let support = inst.signals.support();
                let profile = local_isometry(&inst.ensemble, support)?;
                let out = run_solver(spec.solver, &cfg, &inst)?;
                let exact = out.support == *support;
                let signal_error = (&out.estimate - inst.signals.values()).norm();
                let (qualifies, lhs, varkappa, bound) = match (spec.solver, beta) {
                    (SolverChoice::Momp, Some(beta)) => {
                        let kappa = match params.varkappa {
                            Some(k) => Ok(k),
                            None => momp_varkappa_for_noise(&profile, eps),
                        };
                        match kappa {
                            Ok(kappa) => {
                                let cond = momp_condition(&profile, beta, kappa)?;
                                let budget = momp_noise_budget(&profile, kappa)?;
                                let ok = cond.holds_noisy && eps <= budget * (1.0 + 1e-12);
                                let bound = momp_error_bound(profile.delta_max, eps)?;
                                (ok, Some(cond.lhs_eq22), Some(kappa), Some(bound + BOUND_SLACK))
                            }
                            Err(_) => (false, None, None, None),
                        }
                    }
                    (SolverChoice::Popt { gamma }, _) => {
                        let bound = match (spec.c3, spec.c4) {
                            (Some(c3), Some(c4)) => Some(popt_error_bound(eps, gamma, support.len(), c3, c4)),
                            _ => None,
                        };
                        (true, None, None, bound)
                    }
                    _ => unreachable!("lopt rejected above"),
                };
                Ok(NoisyTrial {
                    d,
                    epsilon: eps,
                    trial_index: t,
                    seed: inst.seed,
                    qualifies,
                    lhs,
                    varkappa,
                    delta_max: profile.delta_max,
                    mu_max: profile.mu_max,
                    exact_support: exact,
                    signal_error,
                    error_bound: bound,
                    within_bound: bound.map(|b| signal_error <= b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.extend(cell);
    }
    let qualifying = records.iter().filter(|r| r.qualifies).count();
    let exact_q = records.iter().filter(|r| r.qualifies && r.exact_support).count();
    let violations = records
        .iter()
        .filter(|r| r.qualifies && r.exact_support && r.within_bound == Some(false))
        .count();
    Ok(NoisyBoundReport {
        trials: records.len(),
        qualifying,
        exact_among_qualifying: exact_q,
        exact_fraction: (qualifying > 0).then(|| exact_q as f64 / qualifying as f64),
        bound_violations_among_exact: violations,
        records,
    })
}

/// One-line human summary of a sweep.
pub fn summarize(result: &SweepResult) -> String {
    let mut out = String::new();
    for c in &result.cells {
        let _ = writeln!(
            out,
            "d={:<4} eps={:<8} failures={}/{} rate={:.4} [{:.4}, {:.4}] mean_error={:.3e}",
            c.d, c.epsilon, c.failures, c.trials, c.failure_rate, c.wilson_lo, c.wilson_hi, c.mean_error
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(solver: SolverChoice) -> ExperimentSpec {
        ExperimentSpec {
            ensemble: EnsembleSource::Gaussian { m: 10, n: 20, unit_columns: true },
            d_values: vec![1, 3],
            support: SupportPolicy::Random { s: 2 },
            dist: SignalDistribution::gaussian(),
            noise_eps: vec![0.0],
            solver,
            trials: 8,
            base_seed: 11,
            resample_ensemble: false,
            c3: None,
            c4: None,
            solver_config: None,
        }
    }

    #[test]
    fn wilson_hand_values() {
        let (lo, hi) = wilson_interval(0, 10, Z_95);
        assert_eq!(lo, 0.0);
        let z2 = Z_95 * Z_95;
        assert!((hi - z2 / (10.0 + z2)).abs() < 1e-15);
        let (lo, hi) = wilson_interval(5, 10, Z_95);
        assert!((lo + hi - 1.0).abs() < 1e-15);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn spec_json_round_trip() {
        let s = spec(SolverChoice::Popt { gamma: 0.05 });
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(ExperimentSpec::from_json(&text).unwrap(), s);
        let bad = text.replace("\"trials\":8", "\"trials\":0");
        assert!(ExperimentSpec::from_json(&bad).is_err());
    }

    #[test]
    fn empty_support_never_fails() {
        let mut sp = spec(SolverChoice::Momp);
        sp.support = SupportPolicy::Random { s: 0 };
        for solver in [SolverChoice::Momp, SolverChoice::Lopt, SolverChoice::Popt { gamma: 0.1 }] {
            sp.solver = solver;
            let r = run_sweep(&sp).unwrap();
            assert!(r.cells.iter().all(|c| c.failures == 0), "{solver:?}");
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let sp = spec(SolverChoice::Momp);
        let a = sweep_csv(&run_sweep(&sp).unwrap()).unwrap();
        let b = sweep_csv(&run_sweep(&sp).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("d,epsilon,trials,failures,failure_rate,wilson_lo,wilson_hi,mean_error\n"));
    }

    #[test]
    fn p0_limits_and_trivial_cases() {
        let e = generate_gaussian_ensemble(5, 8, 2, true, 3).unwrap();
        let zero = Observations::new(DMatrix::zeros(5, 2), 0.0).unwrap();
        assert!(solve_p0_exhaustive(&e, &zero, 2, 0.0).unwrap().support().is_empty());
        assert!(matches!(solve_p0_exhaustive(&e, &zero, 7, 0.0), Err(GmmvError::LimitExceeded(_))));
        let big = generate_gaussian_ensemble(3, 21, 1, true, 3).unwrap();
        let obs = Observations::new(DMatrix::zeros(3, 1), 0.0).unwrap();
        assert!(matches!(solve_p0_exhaustive(&big, &obs, 1, 0.0), Err(GmmvError::LimitExceeded(_))));
    }
}
