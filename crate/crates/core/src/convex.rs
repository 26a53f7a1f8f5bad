//! Convex recovery programs over the row-wise mixed norm
//! `||X||_{2,1} = sum_l ||row_l(X)||_2`:
//!
//! * the penalized form `min 1/2 sum_i ||y^(i) - A^(i) x^(i)||^2 + gamma ||X||_{2,1}`,
//!   solved by monotone accelerated proximal gradient;
//! * the constrained form `min ||X||_{2,1}` s.t. `A^(i) x^(i) = y^(i)`, solved by
//!   ADMM alternating an affine projection with the row-group prox.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GmmvError, Result};
use crate::linalg::{pseudoinverse, select_columns, spectral_norm_sq};
use crate::model::{extract_row_support, MeasurementEnsemble, Observations, SupportSet};

/// A row belongs to the extracted support when its norm exceeds this fraction
/// of the largest row norm.
pub const SUPPORT_REL_TOL: f64 = 1e-6;

/// Constraint residuals above this (relative to `||Y||_F`) mean no exact solution exists.
pub const INFEASIBILITY_TOL: f64 = 1e-8;

const POWER_ITERS: usize = 50;
const POWER_TOL: f64 = 1e-8;
/// Power iteration approaches `||A||^2` from below; the step uses a slightly larger constant.
const LIPSCHITZ_MARGIN: f64 = 1.01;
const ADMM_RELAXATION: f64 = 1.6;
const POLISH_EVERY: usize = 25;
/// Relative row-norm thresholds tried when re-fitting on an extracted support.
const POLISH_THRESHOLDS: &[f64] = &[SUPPORT_REL_TOL, 1e-4, 1e-3, 1e-2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Fixed step `1/L` with `L` estimated by power iteration.
    PowerIteration,
    /// Fixed step `1/L` with the given `L`.
    Fixed(f64),
    Backtracking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub gamma_reg: f64,
    pub max_iters: usize,
    pub tol_obj: f64,
    pub tol_feas: f64,
    pub admm_rho: f64,
    pub step_rule: StepRule,
    /// Re-fit by least squares on the extracted support once the iteration
    /// has settled. Only accepted when the re-fit is at least as good.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma_reg: 0.1,
            max_iters: 50_000,
            tol_obj: 1e-10,
            tol_feas: 1e-9,
            admm_rho: 1.0,
            step_rule: StepRule::PowerIteration,
            polish: true,
        }
    }
}

impl SolverConfig {
    pub fn with_gamma(gamma_reg: f64) -> Self {
        Self { gamma_reg, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol_obj > 0.0) || !(self.tol_feas > 0.0) {
            return Err(GmmvError::invalid("tolerances must be positive"));
        }
        if !(self.admm_rho > 0.0) || !self.admm_rho.is_finite() {
            return Err(GmmvError::invalid(format!("admm_rho = {} must be positive", self.admm_rho)));
        }
        if self.max_iters == 0 {
            return Err(GmmvError::invalid("max_iters must be at least 1"));
        }
        if let StepRule::Fixed(l) = self.step_rule {
            if !(l > 0.0) || !l.is_finite() {
                return Err(GmmvError::invalid(format!("Lipschitz constant {l} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexResult {
    /// `n x d`; column `i` estimates `x^(i)`.
    pub estimate: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    /// Penalized form: first-order optimality violation normalized by `gamma`.
    /// Constrained form: the larger of the relative ADMM primal and dual residuals.
    pub kkt_residual: f64,
    /// Constrained form only: `sqrt(sum_i ||A x - y||^2) / sqrt(sum_i ||y||^2)`.
    pub feasibility_residual: Option<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Step constant actually used by the penalized solver.
    pub lipschitz: Option<f64>,
    pub polished: bool,
    pub support: SupportSet,
}

/// Closed-form prox of `t ||.||_{2,1}`: each row is scaled by `max(0, 1 - t/||row||)`.
pub fn row_group_prox(x: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let mut out = x.clone();
    row_group_prox_in_place(&mut out, t);
    out
}

fn row_group_prox_in_place(x: &mut DMatrix<f64>, t: f64) {
    for r in 0..x.nrows() {
        let mut row = x.row_mut(r);
        let norm = row.norm();
        if norm <= t || norm == 0.0 {
            row.fill(0.0);
        } else {
            row *= 1.0 - t / norm;
        }
    }
}

/// `sum_l ||row_l(X)||_2`.
pub fn mixed_norm(x: &DMatrix<f64>) -> f64 {
    x.row_iter().map(|r| r.norm()).sum()
}

fn check_shapes(ensemble: &MeasurementEnsemble, observations: &Observations) -> Result<()> {
    observations.check_against(ensemble)
}

/// Column `i` is `A^(i) x^(i) - y^(i)`.
fn residual(ensemble: &MeasurementEnsemble, y: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(y.nrows(), y.ncols());
    for (i, a) in ensemble.matrices().iter().enumerate() {
        r.set_column(i, &(a * x.column(i) - y.column(i)));
    }
    r
}

/// Column `i` is `A^(i)^T r^(i)`.
fn adjoint(ensemble: &MeasurementEnsemble, r: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(ensemble.cols(), r.ncols());
    for (i, a) in ensemble.matrices().iter().enumerate() {
        g.set_column(i, &a.tr_mul(&r.column(i)));
    }
    g
}

pub fn popt_objective(ensemble: &MeasurementEnsemble, observations: &Observations, x: &DMatrix<f64>, gamma: f64) -> f64 {
    0.5 * residual(ensemble, observations.vectors(), x).norm_squared() + gamma * mixed_norm(x)
}

/// Gradient of the smooth part at `x`.
pub fn popt_gradient(ensemble: &MeasurementEnsemble, observations: &Observations, x: &DMatrix<f64>) -> DMatrix<f64> {
    adjoint(ensemble, &residual(ensemble, observations.vectors(), x))
}

/// Largest violation of the first-order conditions, divided by `gamma`:
/// nonzero rows need `g_l + gamma x_l / ||x_l|| = 0`, zero rows need `||g_l|| <= gamma`.
pub fn popt_kkt_residual(ensemble: &MeasurementEnsemble, observations: &Observations, x: &DMatrix<f64>, gamma: f64) -> f64 {
    kkt_from_gradient(x, &popt_gradient(ensemble, observations, x), gamma)
}

fn kkt_from_gradient(x: &DMatrix<f64>, g: &DMatrix<f64>, gamma: f64) -> f64 {
    let mut worst = 0.0f64;
    for l in 0..x.nrows() {
        let row = x.row(l);
        let norm = row.norm();
        let g_row = g.row(l);
        let v = if norm > 0.0 {
            (g_row + row * (gamma / norm)).norm()
        } else {
            (g_row.norm() - gamma).max(0.0)
        };
        worst = worst.max(v);
    }
    worst / gamma
}

fn lipschitz_estimate(ensemble: &MeasurementEnsemble) -> f64 {
    ensemble
        .matrices()
        .iter()
        .map(|a| spectral_norm_sq(a, POWER_ITERS, POWER_TOL))
        .fold(0.0, f64::max)
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    let scale = prev.abs().max(cur.abs());
    if scale == 0.0 {
        0.0
    } else {
        (prev - cur).abs() / scale
    }
}

/// Penalized recovery. Monotone FISTA with function-value restart; the
/// objective trace is non-increasing. Stops once the relative objective change
/// is at most `tol_obj` and the KKT residual is at most `10 tol_obj`.
pub fn popt_solve(ensemble: &MeasurementEnsemble, observations: &Observations, config: &SolverConfig) -> Result<ConvexResult> {
    check_shapes(ensemble, observations)?;
    config.validate()?;
    let gamma = config.gamma_reg;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(GmmvError::invalid(format!("gamma_reg = {gamma} must be positive")));
    }
    let (n, d) = (ensemble.cols(), ensemble.count());
    let y = observations.vectors();

    let mut lip = match config.step_rule {
        StepRule::PowerIteration => LIPSCHITZ_MARGIN * lipschitz_estimate(ensemble),
        StepRule::Fixed(l) => l,
        StepRule::Backtracking => lipschitz_estimate(ensemble).max(f64::MIN_POSITIVE) * 0.5,
    };
    if lip == 0.0 {
        // every matrix is zero: the origin is optimal
        lip = 1.0;
    }

    let smooth = |x: &DMatrix<f64>| 0.5 * residual(ensemble, y, x).norm_squared();
    let objective = |x: &DMatrix<f64>| smooth(x) + gamma * mixed_norm(x);

    let mut x = DMatrix::zeros(n, d);
    let mut z_point = x.clone();
    let mut t = 1.0f64;
    let mut f_x = objective(&x);
    let mut trace = vec![f_x];
    let mut kkt = kkt_from_gradient(&x, &popt_gradient(ensemble, observations, &x), gamma);
    let mut converged = false;
    let mut iters = 0;

    for k in 1..=config.max_iters {
        iters = k;
        let grad_y = adjoint(ensemble, &residual(ensemble, y, &z_point));
        let z = loop {
            let mut cand = &z_point - &grad_y * (1.0 / lip);
            row_group_prox_in_place(&mut cand, gamma / lip);
            if config.step_rule != StepRule::Backtracking {
                break cand;
            }
            let diff = &cand - &z_point;
            let model = smooth(&z_point) + grad_y.dot(&diff) + 0.5 * lip * diff.norm_squared();
            if smooth(&cand) <= model * (1.0 + 1e-12) + 1e-300 {
                break cand;
            }
            lip *= 2.0;
        };
        let f_z = objective(&z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let f_prev = f_x;
        // A plain step (no momentum) cannot increase the objective in exact
        // arithmetic, so it is taken even when rounding says otherwise.
        let plain = t == 1.0;
        if f_z <= f_x || plain {
            let x_prev = std::mem::replace(&mut x, z);
            f_x = f_z;
            z_point = &x + (&x - &x_prev) * ((t - 1.0) / t_next);
            t = t_next;
        } else {
            // restart momentum from the best point
            z_point = x.clone();
            t = 1.0;
        }
        trace.push(f_x);
        kkt = kkt_from_gradient(&x, &popt_gradient(ensemble, observations, &x), gamma);
        if relative_change(f_prev, f_x) <= config.tol_obj && kkt <= 10.0 * config.tol_obj {
            converged = true;
            break;
        }
    }

    let support = extract_row_support(&x, SUPPORT_REL_TOL);
    Ok(ConvexResult {
        estimate: x,
        objective_trace: trace,
        kkt_residual: kkt,
        feasibility_residual: None,
        iterations_used: iters,
        converged,
        lipschitz: Some(lip),
        polished: false,
        support,
    })
}

/// Per-matrix pseudoinverses with a feasibility check.
struct AffineProjector {
    pinvs: Vec<DMatrix<f64>>,
}

impl AffineProjector {
    fn new(ensemble: &MeasurementEnsemble, y: &DMatrix<f64>) -> Result<Self> {
        let pinvs: Vec<DMatrix<f64>> = ensemble.matrices().iter().map(|a| pseudoinverse(a).0).collect();
        let mut res_sq = 0.0;
        for (i, (a, p)) in ensemble.matrices().iter().zip(&pinvs).enumerate() {
            res_sq += (a * (p * y.column(i)) - y.column(i)).norm_squared();
        }
        let rel = res_sq.sqrt() / y.norm().max(f64::MIN_POSITIVE);
        if rel > INFEASIBILITY_TOL {
            return Err(GmmvError::Infeasible { residual: rel, threshold: INFEASIBILITY_TOL });
        }
        Ok(Self { pinvs })
    }

    /// `v - pinv(A) (A v - y)` column by column.
    fn project(&self, ensemble: &MeasurementEnsemble, y: &DMatrix<f64>, v: &mut DMatrix<f64>) {
        for (i, (a, p)) in ensemble.matrices().iter().zip(&self.pinvs).enumerate() {
            let r = a * v.column(i) - y.column(i);
            let corr = p * r;
            let mut col = v.column_mut(i);
            col -= corr;
        }
    }
}

fn feasibility(ensemble: &MeasurementEnsemble, y: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let r = residual(ensemble, y, x).norm();
    let ny = y.norm();
    if ny == 0.0 {
        r
    } else {
        r / ny
    }
}

/// Least squares on a fixed row support, per matrix.
pub fn least_squares_on_support(ensemble: &MeasurementEnsemble, y: &DMatrix<f64>, support: &SupportSet) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(ensemble.cols(), ensemble.count());
    for (i, a) in ensemble.matrices().iter().enumerate() {
        let a_s = select_columns(a, support.indices());
        let coef = pseudoinverse(&a_s).0 * y.column(i);
        for (k, &l) in support.indices().iter().enumerate() {
            x[(l, i)] = coef[k];
        }
    }
    x
}

/// Constrained recovery by over-relaxed scaled ADMM on the problem rescaled to
/// `||Y||_F = 1`. Iteration stops when the objective of the feasible iterate
/// changes by at most `tol_obj` (relative) and both residuals are below
/// `sqrt(tol_obj)`; with `polish` the result is then re-fit on its support.
pub fn lopt_solve(ensemble: &MeasurementEnsemble, observations: &Observations, config: &SolverConfig) -> Result<ConvexResult> {
    check_shapes(ensemble, observations)?;
    config.validate()?;
    let (n, d) = (ensemble.cols(), ensemble.count());
    let scale = observations.vectors().norm();
    if scale == 0.0 {
        return Ok(ConvexResult {
            estimate: DMatrix::zeros(n, d),
            objective_trace: vec![0.0],
            kkt_residual: 0.0,
            feasibility_residual: Some(0.0),
            iterations_used: 0,
            converged: true,
            lipschitz: None,
            polished: false,
            support: SupportSet::empty(n),
        });
    }
    let y = observations.vectors() / scale;
    let projector = AffineProjector::new(ensemble, &y)?;
    let rho = config.admm_rho;
    let res_tol = config.tol_obj.sqrt();

    let mut x = DMatrix::zeros(n, d);
    projector.project(ensemble, &y, &mut x);
    let mut z = x.clone();
    let mut u = DMatrix::<f64>::zeros(n, d);
    let mut trace = vec![mixed_norm(&x) * scale];
    let mut prev_obj = mixed_norm(&x);
    let mut converged = false;
    let mut iters = 0;
    let mut pd_residual = f64::INFINITY;
    let mut polished: Option<DMatrix<f64>> = None;

    for k in 1..=config.max_iters {
        iters = k;
        x = &z - &u;
        projector.project(ensemble, &y, &mut x);
        let x_hat = &x * ADMM_RELAXATION + &z * (1.0 - ADMM_RELAXATION);
        let z_old = std::mem::replace(&mut z, &x_hat + &u);
        row_group_prox_in_place(&mut z, 1.0 / rho);
        u += &x_hat - &z;

        let obj = mixed_norm(&x);
        trace.push(obj * scale);
        let primal = (&x - &z).norm() / x.norm().max(z.norm()).max(f64::MIN_POSITIVE);
        let dual = rho * (&z - &z_old).norm() / (rho * u.norm()).max(f64::MIN_POSITIVE);
        pd_residual = primal.max(dual);
        let settled = relative_change(prev_obj, obj) <= config.tol_obj && pd_residual <= res_tol;
        prev_obj = obj;

        if config.polish && (settled || k % POLISH_EVERY == 0) {
            if let Some(p) = try_polish(ensemble, &y, &z, obj, config.tol_feas) {
                if settled || polish_is_stable(&p, &z) {
                    polished = Some(p);
                    converged = true;
                    break;
                }
            }
        }
        if settled {
            converged = true;
            break;
        }
    }

    let was_polished = polished.is_some();
    let mut estimate = polished.unwrap_or(x);
    let feas = feasibility(ensemble, &y, &estimate);
    converged &= feas <= config.tol_feas;
    estimate *= scale;
    if was_polished {
        trace.push(mixed_norm(&estimate));
    }
    let support = extract_row_support(&estimate, SUPPORT_REL_TOL);
    Ok(ConvexResult {
        estimate,
        objective_trace: trace,
        kkt_residual: pd_residual,
        feasibility_residual: Some(feas),
        iterations_used: iters,
        converged,
        lipschitz: None,
        polished: was_polished,
        support,
    })
}

/// Least-squares re-fit on the support of `z` extracted at each of
/// [`POLISH_THRESHOLDS`]. The best re-fit that is feasible and does not
/// increase the objective of the current feasible iterate is returned.
fn try_polish(ensemble: &MeasurementEnsemble, y: &DMatrix<f64>, z: &DMatrix<f64>, feasible_obj: f64, tol_feas: f64) -> Option<DMatrix<f64>> {
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut tried: Vec<SupportSet> = Vec::new();
    for &rel in POLISH_THRESHOLDS {
        let support = extract_row_support(z, rel);
        if support.is_empty() || support.len() > ensemble.rows() || tried.contains(&support) {
            continue;
        }
        let p = least_squares_on_support(ensemble, y, &support);
        tried.push(support);
        if feasibility(ensemble, y, &p) > tol_feas {
            continue;
        }
        let obj = mixed_norm(&p);
        if obj <= feasible_obj * (1.0 + 1e-12) && best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, p));
        }
    }
    best.map(|(_, p)| p)
}

/// An early re-fit is only trusted when the ADMM iterate already agrees with
/// it closely.
fn polish_is_stable(p: &DMatrix<f64>, z: &DMatrix<f64>) -> bool {
    (p - z).norm() <= 1e-4 * p.norm()
}
