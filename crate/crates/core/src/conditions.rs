//! Recovery conditions and success-probability bounds for a given ensemble
//! and support set.
//!
//! Everything here is a pure function of its inputs. The constants `c1..c4`,
//! `c(S, A)` and `varsigma` that the bounds depend on have no closed form and
//! are taken from the caller.

use std::f64::consts::E;
use std::fmt;

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GmmvError, Result};
use crate::linalg::{pseudoinverse, rank, select_columns, singular_values};
use crate::model::{MeasurementEnsemble, SupportSet};

/// Default cap on `n` for the brute-force spark computation.
pub const SPARK_DEFAULT_MAX_N: usize = 20;

fn check_support(ensemble: &MeasurementEnsemble, support: &SupportSet) -> Result<()> {
    if support.ambient_dim() != ensemble.cols() {
        return Err(GmmvError::invalid(format!(
            "support lives in dimension {} but the ensemble has {} columns",
            support.ambient_dim(),
            ensemble.cols()
        )));
    }
    Ok(())
}

/// For every matrix `i` and every `l` outside `S`, the coefficient vector
/// `pinv(A_S^(i)) a_l^(i)` and its ℓ2 and ℓ1 norms.
#[derive(Clone, Debug)]
pub struct PseudoinverseColumnNorms {
    /// Indices `l` outside `S`, increasing; column `j` of every table refers to `off_support[j]`.
    pub off_support: Vec<usize>,
    /// `coefficients[i]` is `s x (n - s)`.
    pub coefficients: Vec<DMatrix<f64>>,
    /// `l2[i][j]`.
    pub l2: Vec<Vec<f64>>,
    /// `l1[i][j]`.
    pub l1: Vec<Vec<f64>>,
    /// `rank_deficient[i]` is set when `A_S^(i)` lacks full column rank.
    pub rank_deficient: Vec<bool>,
}

impl PseudoinverseColumnNorms {
    pub fn any_rank_deficient(&self) -> bool {
        self.rank_deficient.iter().any(|&r| r)
    }
}

pub fn pseudoinverse_column_norms(
    ensemble: &MeasurementEnsemble,
    support: &SupportSet,
) -> Result<PseudoinverseColumnNorms> {
    check_support(ensemble, support)?;
    let off_support = support.complement();
    let mut out = PseudoinverseColumnNorms {
        coefficients: Vec::with_capacity(ensemble.count()),
        l2: Vec::with_capacity(ensemble.count()),
        l1: Vec::with_capacity(ensemble.count()),
        rank_deficient: Vec::with_capacity(ensemble.count()),
        off_support,
    };
    for a in ensemble.matrices() {
        let a_s = select_columns(a, support.indices());
        let (pinv, r) = pseudoinverse(&a_s);
        let coeffs = pinv * select_columns(a, &out.off_support);
        out.l2.push(coeffs.column_iter().map(|c| c.norm()).collect());
        out.l1.push(coeffs.column_iter().map(|c| c.lp_norm(1)).collect());
        out.coefficients.push(coeffs);
        out.rank_deficient.push(r < support.len());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    /// `max_{l not in S} sum_q max_i |[pinv(A_S^(i)) a_l^(i)]_q|`.
    pub worst_case_block: f64,
    /// `max_{l not in S} max_i ||pinv(A_S^(i)) a_l^(i)||_1`.
    pub worst_case_individual: f64,
    pub eq7_holds: bool,
    pub eq8_holds: bool,
    pub rank_deficient: bool,
}

fn worst_case_from(table: &PseudoinverseColumnNorms) -> WorstCase {
    let s = table.coefficients.first().map_or(0, |c| c.nrows());
    let mut block = 0.0f64;
    let mut individual = 0.0f64;
    for j in 0..table.off_support.len() {
        let sum_q: f64 = (0..s)
            .map(|q| {
                table
                    .coefficients
                    .iter()
                    .map(|c| c[(q, j)].abs())
                    .fold(0.0, f64::max)
            })
            .sum();
        block = block.max(sum_q);
        for l1 in &table.l1 {
            individual = individual.max(l1[j]);
        }
    }
    WorstCase {
        worst_case_block: block,
        worst_case_individual: individual,
        eq7_holds: block < 1.0,
        eq8_holds: individual < 1.0,
        rank_deficient: table.any_rank_deficient(),
    }
}

pub fn evaluate_worst_case(ensemble: &MeasurementEnsemble, support: &SupportSet) -> Result<WorstCase> {
    Ok(worst_case_from(&pseudoinverse_column_norms(ensemble, support)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageCondition {
    /// Largest root-mean-square (over `i`) of `||pinv(A_S^(i)) a_l^(i)||_2`, over `l` outside `S`.
    pub alpha: f64,
    /// Largest `||pinv(A_S^(i)) a_l^(i)||_2` over `i` and `l` outside `S`.
    pub gamma_col: f64,
}

fn average_from(table: &PseudoinverseColumnNorms) -> AverageCondition {
    let d = table.l2.len() as f64;
    let mut alpha = 0.0f64;
    let mut gamma = 0.0f64;
    for j in 0..table.off_support.len() {
        let mean_sq = table.l2.iter().map(|row| row[j] * row[j]).sum::<f64>() / d;
        alpha = alpha.max(mean_sq.sqrt());
        for row in &table.l2 {
            gamma = gamma.max(row[j]);
        }
    }
    AverageCondition { alpha, gamma_col: gamma }
}

pub fn evaluate_average_condition(
    ensemble: &MeasurementEnsemble,
    support: &SupportSet,
) -> Result<AverageCondition> {
    Ok(average_from(&pseudoinverse_column_norms(ensemble, support)?))
}

/// Per-matrix local isometry constants `delta_i(S)` and local coherences `mu_i(S)`.
///
/// For the empty support both are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalIsometryProfile {
    pub delta: Vec<f64>,
    pub mu: Vec<f64>,
    pub delta_max: f64,
    pub mu_max: f64,
}

impl LocalIsometryProfile {
    pub fn new(delta: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if delta.len() != mu.len() || delta.is_empty() {
            return Err(GmmvError::invalid("delta and mu must be nonempty and of equal length"));
        }
        if delta.iter().chain(&mu).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(GmmvError::invalid("delta and mu must be finite and non-negative"));
        }
        let delta_max = delta.iter().copied().fold(0.0, f64::max);
        let mu_max = mu.iter().copied().fold(0.0, f64::max);
        Ok(Self { delta, mu, delta_max, mu_max })
    }
}

/// `||A_S^T A_S - I||_2` from the singular values of `A_S`; when `s > m` the
/// Gram matrix has `s - m` zero eigenvalues.
fn gram_deviation(a_s: &DMatrix<f64>) -> f64 {
    let s = a_s.ncols();
    if s == 0 {
        return 0.0;
    }
    let sv = singular_values(a_s);
    let mut dev = sv.iter().map(|&x| (x * x - 1.0).abs()).fold(0.0, f64::max);
    if s > sv.len() {
        dev = dev.max(1.0);
    }
    dev
}

pub fn local_isometry(ensemble: &MeasurementEnsemble, support: &SupportSet) -> Result<LocalIsometryProfile> {
    check_support(ensemble, support)?;
    let mut delta = Vec::with_capacity(ensemble.count());
    let mut mu = Vec::with_capacity(ensemble.count());
    let off = support.complement();
    for a in ensemble.matrices() {
        let a_s = select_columns(a, support.indices());
        delta.push(gram_deviation(&a_s));
        let mut m = 0.0f64;
        if !support.is_empty() {
            for &l in &off {
                m = m.max(a_s.tr_mul(&a.column(l)).norm());
            }
            for &l in support.indices() {
                let rest = select_columns(a, support.without(l).indices());
                m = m.max(rest.tr_mul(&a.column(l)).norm());
            }
        }
        mu.push(m);
    }
    LocalIsometryProfile::new(delta, mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MompCondition {
    /// `sum_i (mu_i/(1-delta_i))^2 / sum_i (1 - mu_i^2/(1-delta_i))^2`.
    pub ratio_eq14: f64,
    /// `sqrt(1-beta) RMS(1 - mu_i^2/(1-delta_i)) - sqrt(1+beta) RMS(mu_i/(1-delta_i))`.
    pub lhs_eq22: f64,
    pub holds_noiseless: bool,
    pub holds_noisy: bool,
}

fn check_profile_applicable(profile: &LocalIsometryProfile) -> Result<()> {
    if let Some((i, d)) = profile.delta.iter().enumerate().find(|(_, &d)| d >= 1.0) {
        return Err(GmmvError::ConditionInapplicable(format!("delta_{i}(S) = {d} is not below 1")));
    }
    Ok(())
}

/// The per-matrix terms `a_i = mu_i / (1 - delta_i)` and `b_i = 1 - mu_i^2 / (1 - delta_i)`.
fn momp_terms(profile: &LocalIsometryProfile) -> (Vec<f64>, Vec<f64>) {
    profile
        .delta
        .iter()
        .zip(&profile.mu)
        .map(|(&d, &m)| (m / (1.0 - d), 1.0 - m * m / (1.0 - d)))
        .unzip()
}

/// `sum_i a_i^2 / sum_i b_i^2`; infinite when every `b_i` vanishes.
pub fn momp_ratio(profile: &LocalIsometryProfile) -> Result<f64> {
    check_profile_applicable(profile)?;
    let (a, b) = momp_terms(profile);
    let num: f64 = a.iter().map(|v| v * v).sum();
    let den: f64 = b.iter().map(|v| v * v).sum();
    Ok(if den == 0.0 { f64::INFINITY } else { num / den })
}

/// Evaluates the greedy-recovery condition in its noiseless ratio form and its
/// noisy difference form with margin `varkappa`. `beta` must lie in `(0, 1]`;
/// above one neither form can hold.
pub fn momp_condition(profile: &LocalIsometryProfile, beta: f64, varkappa: f64) -> Result<MompCondition> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(GmmvError::invalid(format!("beta = {beta} must lie in (0, 1]")));
    }
    if !(varkappa >= 0.0) || !varkappa.is_finite() {
        return Err(GmmvError::invalid(format!("varkappa = {varkappa} must be finite and >= 0")));
    }
    let ratio = momp_ratio(profile)?;
    let (a, b) = momp_terms(profile);
    let d = a.len() as f64;
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / d).sqrt();
    let lhs = (1.0 - beta).sqrt() * rms(&b) - (1.0 + beta).sqrt() * rms(&a);
    Ok(MompCondition {
        ratio_eq14: ratio,
        lhs_eq22: lhs,
        holds_noiseless: ratio <= (1.0 - beta) / (1.0 + beta),
        holds_noisy: lhs >= varkappa,
    })
}

/// Largest noise level admitted by the greedy noisy-recovery theorem for
/// margin `varkappa`: `(1 - dmax) / ((1 - dmax) + (1 - dmax) mu_max) * varkappa`.
pub fn momp_noise_budget(profile: &LocalIsometryProfile, varkappa: f64) -> Result<f64> {
    check_profile_applicable(profile)?;
    let one_minus = 1.0 - profile.delta_max;
    Ok(one_minus / (one_minus + one_minus * profile.mu_max) * varkappa)
}

/// The margin `varkappa` at which [`momp_noise_budget`] equals `epsilon`.
pub fn momp_varkappa_for_noise(profile: &LocalIsometryProfile, epsilon: f64) -> Result<f64> {
    check_profile_applicable(profile)?;
    let one_minus = 1.0 - profile.delta_max;
    Ok(epsilon * (one_minus + one_minus * profile.mu_max) / one_minus)
}

/// `(1 + dmax) / (1 - dmax) * eps`.
pub fn momp_error_bound(delta_max: f64, epsilon: f64) -> Result<f64> {
    if delta_max >= 1.0 {
        return Err(GmmvError::ConditionInapplicable(format!("delta_max = {delta_max} >= 1")));
    }
    Ok((1.0 + delta_max) / (1.0 - delta_max) * epsilon)
}

/// A probability lower bound. `raw` is the literal formula value and can be
/// negative (vacuous); `clamped` is `raw` restricted to `[0, 1]` for display.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub raw: f64,
    pub clamped: f64,
}

impl BoundValue {
    fn new(raw: f64) -> Self {
        Self { raw, clamped: raw.clamp(0.0, 1.0) }
    }
}

fn check_sizes(n: usize, s: usize, d: usize) -> Result<()> {
    if s > n {
        return Err(GmmvError::invalid(format!("s = {s} exceeds n = {n}")));
    }
    if d == 0 {
        return Err(GmmvError::invalid("d must be at least 1"));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(GmmvError::invalid(format!("{name} = {v} must be positive and finite")));
    }
    Ok(())
}

/// `max{1 - c, alpha^2} < xi^2 <= alpha^2 (1 + c)`, except that equality
/// `xi^2 = alpha^2` is let through: the bound is vacuous there and its raw
/// value is still reported.
fn check_xi(alpha: f64, xi: f64, c: f64) -> Result<()> {
    check_positive("xi", xi)?;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(GmmvError::invalid(format!("alpha = {alpha} must be finite and >= 0")));
    }
    let xi2 = xi * xi;
    let a2 = alpha * alpha;
    if xi2 <= 1.0 - c {
        return Err(GmmvError::invalid(format!("xi^2 = {xi2} violates xi^2 > 1 - {c}")));
    }
    if xi2 < a2 {
        return Err(GmmvError::invalid(format!("xi^2 = {xi2} violates xi^2 > alpha^2 = {a2}")));
    }
    if xi2 > a2 * (1.0 + c) {
        return Err(GmmvError::invalid(format!(
            "xi^2 = {xi2} violates xi^2 <= alpha^2 (1 + {c}) = {}",
            a2 * (1.0 + c)
        )));
    }
    Ok(())
}

fn thirty_two_e_rho(rho: f64) -> f64 {
    32.0 * E * rho
}

/// Convex noiseless recovery, sub-Gaussian signals:
/// `1 - (n-s) exp(-d (xi^2-alpha^2)^2 / (2^11 e^2 rho^2 gamma^2 alpha^2)) - s exp(-d (1-xi^2)^2 / (2^11 e^2 rho^2))`.
pub fn bound_lopt_subgaussian(
    n: usize,
    s: usize,
    d: usize,
    alpha: f64,
    gamma_col: f64,
    rho: f64,
    xi: f64,
) -> Result<BoundValue> {
    check_sizes(n, s, d)?;
    check_positive("rho", rho)?;
    check_positive("gamma", gamma_col)?;
    check_xi(alpha, xi, thirty_two_e_rho(rho))?;
    let (df, xi2, a2) = (d as f64, xi * xi, alpha * alpha);
    let k = 2f64.powi(11) * E * E * rho * rho;
    let t1 = (n - s) as f64 * (-df * (xi2 - a2).powi(2) / (k * gamma_col * gamma_col * a2)).exp();
    let t2 = s as f64 * (-df * (1.0 - xi2).powi(2) / k).exp();
    Ok(BoundValue::new(1.0 - t1 - t2))
}

/// Convex noiseless recovery, standard Gaussian signals:
/// `1 - (n-s) exp(-d (xi-alpha)^2 / (2 gamma^2)) - s exp(-d (1-xi^2)^2 / 4)`.
/// `xi` must be admissible for the sub-Gaussian bound with `rho = 1/2`.
pub fn bound_lopt_gaussian(n: usize, s: usize, d: usize, alpha: f64, gamma_col: f64, xi: f64) -> Result<BoundValue> {
    check_sizes(n, s, d)?;
    check_positive("gamma", gamma_col)?;
    check_xi(alpha, xi, thirty_two_e_rho(0.5))?;
    let df = d as f64;
    let t1 = (n - s) as f64 * (-df * (xi - alpha).powi(2) / (2.0 * gamma_col * gamma_col)).exp();
    let t2 = s as f64 * (-df * (1.0 - xi * xi).powi(2) / 4.0).exp();
    Ok(BoundValue::new(1.0 - t1 - t2))
}

/// Greedy noiseless recovery, sub-Gaussian signals:
/// `1 - 2^s (n+1-s) exp(-d beta^2 c(S,A) / (2^11 e^2 rho^2))`, for `0 < beta <= 32 e rho`.
pub fn bound_momp(n: usize, s: usize, d: usize, beta: f64, rho: f64, c_sa: f64) -> Result<BoundValue> {
    check_sizes(n, s, d)?;
    check_positive("rho", rho)?;
    check_positive("c(S,A)", c_sa)?;
    check_positive("beta", beta)?;
    if beta > thirty_two_e_rho(rho) {
        return Err(GmmvError::invalid(format!(
            "beta = {beta} violates beta <= 32 e rho = {}",
            thirty_two_e_rho(rho)
        )));
    }
    let k = 2f64.powi(11) * E * E * rho * rho;
    let t = 2f64.powi(s as i32) * (n + 1 - s) as f64 * (-(d as f64) * beta * beta * c_sa / k).exp();
    Ok(BoundValue::new(1.0 - t))
}

/// Greedy noiseless recovery, standard Gaussian signals:
/// `1 - 2^s ((n-s) exp(-d beta^2 c(S,A)) + exp(-d beta^2 varsigma^2 c(S,A)))`.
pub fn bound_momp_gaussian(n: usize, s: usize, d: usize, beta: f64, varsigma: f64, c_sa: f64) -> Result<BoundValue> {
    check_sizes(n, s, d)?;
    check_positive("c(S,A)", c_sa)?;
    check_positive("beta", beta)?;
    if !(varsigma >= 1.0) || !varsigma.is_finite() {
        return Err(GmmvError::invalid(format!("varsigma = {varsigma} must be >= 1")));
    }
    let df = d as f64;
    let e1 = (n - s) as f64 * (-df * beta * beta * c_sa).exp();
    let e2 = (-df * beta * beta * varsigma * varsigma * c_sa).exp();
    Ok(BoundValue::new(1.0 - 2f64.powi(s as i32) * (e1 + e2)))
}

/// Penalized recovery under noise, Rademacher signals:
/// `1 - exp(-d (xi^2-alpha^2)^2 / (512 e^2 gamma^2 alpha^2))` with `gamma` the
/// penalty weight.
pub fn bound_popt_noisy(d: usize, alpha: f64, gamma_reg: f64, xi: f64) -> Result<BoundValue> {
    if d == 0 {
        return Err(GmmvError::invalid("d must be at least 1"));
    }
    check_positive("gamma", gamma_reg)?;
    check_xi(alpha, xi, 16.0 * E)?;
    let (xi2, a2) = (xi * xi, alpha * alpha);
    let t = (-(d as f64) * (xi2 - a2).powi(2) / (512.0 * E * E * gamma_reg * gamma_reg * a2)).exp();
    Ok(BoundValue::new(1.0 - t))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoptNoiseCondition {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Noise-level condition for penalized recovery:
/// `(c3 eps + gamma c4 sqrt(s)) (2 c2 + 1 - (eps/gamma) c1 - beta) < sqrt(d) (1 - (eps/gamma) c1 - xi)`
/// with `c = [c1, c2, c3, c4]`. Only `xi > 0` is checked here; the full
/// admissibility range needs `alpha` and is enforced by [`bound_popt_noisy`].
#[allow(clippy::too_many_arguments)]
pub fn popt_noise_condition(
    epsilon: f64,
    gamma_reg: f64,
    s: usize,
    d: usize,
    beta: f64,
    xi: f64,
    c: [f64; 4],
) -> Result<PoptNoiseCondition> {
    check_positive("gamma", gamma_reg)?;
    check_positive("xi", xi)?;
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(GmmvError::invalid(format!("epsilon = {epsilon} must be finite and >= 0")));
    }
    if c.iter().any(|v| !v.is_finite()) || !beta.is_finite() {
        return Err(GmmvError::invalid("constants must be finite"));
    }
    let [c1, c2, c3, c4] = c;
    let ratio = epsilon / gamma_reg * c1;
    let lhs = (c3 * epsilon + gamma_reg * c4 * (s as f64).sqrt()) * (2.0 * c2 + 1.0 - ratio - beta);
    let rhs = (d as f64).sqrt() * (1.0 - ratio - xi);
    Ok(PoptNoiseCondition { lhs, rhs, holds: lhs < rhs })
}

/// `c3 eps + gamma c4 sqrt(s)`.
pub fn popt_error_bound(epsilon: f64, gamma_reg: f64, s: usize, c3: f64, c4: f64) -> f64 {
    c3 * epsilon + gamma_reg * c4 * (s as f64).sqrt()
}

/// Size of the smallest linearly dependent column subset, or infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spark {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Spark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spark::Finite(k) => write!(f, "{k}"),
            Spark::Infinite => f.write_str("infinite"),
        }
    }
}

impl Serialize for Spark {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Spark::Finite(k) => s.serialize_u64(*k as u64),
            Spark::Infinite => s.serialize_str("infinite"),
        }
    }
}

/// Brute-force spark. Subsets are tested by increasing size; a subset of `k`
/// columns is dependent when its numerical rank (relative cutoff
/// [`crate::linalg::RANK_TOL`]) is below `k`. Refuses matrices wider than `max_n`.
pub fn spark(matrix: &DMatrix<f64>, max_n: usize) -> Result<Spark> {
    let (m, n) = matrix.shape();
    if n > max_n {
        return Err(GmmvError::LimitExceeded(format!(
            "spark enumeration over n = {n} columns exceeds the limit {max_n}"
        )));
    }
    for k in 1..=n.min(m) {
        for cols in (0..n).combinations(k) {
            if rank(&select_columns(matrix, &cols)) < k {
                return Ok(Spark::Finite(k));
            }
        }
    }
    // any m + 1 columns are dependent
    Ok(if n > m { Spark::Finite(m + 1) } else { Spark::Infinite })
}

/// `(spark - 1 + K) / 2`; the combinatorial program identifies every signal
/// matrix of rank `K` iff `|S|` is strictly below this value.
pub fn p0_mmv_uniqueness_threshold(spark: usize, signal_rank: usize) -> f64 {
    (spark as f64 - 1.0 + signal_rank as f64) / 2.0
}

/// Caller-supplied constants for the bound evaluators. Anything left out is
/// skipped in a [`ConditionReport`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub xi: Option<f64>,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub varsigma: Option<f64>,
    pub c_sa: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub varkappa: Option<f64>,
    pub gamma_reg: Option<f64>,
    pub epsilon: Option<f64>,
}

impl BoundParams {
    pub fn rho_or_default(&self) -> f64 {
        self.rho.unwrap_or(crate::model::DEFAULT_RHO)
    }

    pub fn varsigma_or_default(&self) -> f64 {
        self.varsigma.unwrap_or(1.0)
    }

    pub fn varkappa_or_default(&self) -> f64 {
        self.varkappa.unwrap_or(0.0)
    }
}

/// Outcome of one bound evaluation inside a report.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BoundEntry {
    Value(BoundValue),
    Condition(PoptNoiseCondition),
    Scalar { value: f64 },
    Error { error: String },
    Skipped { skipped: &'static str },
}

impl<T: Into<BoundEntry>> From<Result<T>> for BoundEntry {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => v.into(),
            Err(e) => BoundEntry::Error { error: e.to_string() },
        }
    }
}

impl From<BoundValue> for BoundEntry {
    fn from(v: BoundValue) -> Self {
        BoundEntry::Value(v)
    }
}

impl From<PoptNoiseCondition> for BoundEntry {
    fn from(v: PoptNoiseCondition) -> Self {
        BoundEntry::Condition(v)
    }
}

impl From<f64> for BoundEntry {
    fn from(value: f64) -> Self {
        BoundEntry::Scalar { value }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub lopt_subgaussian: BoundEntry,
    pub lopt_gaussian: BoundEntry,
    pub momp_subgaussian: BoundEntry,
    pub momp_gaussian: BoundEntry,
    pub popt_noisy: BoundEntry,
    pub popt_noise_condition: BoundEntry,
    pub momp_noise_budget: BoundEntry,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionFlags {
    pub eq7_holds: bool,
    pub eq8_holds: bool,
    pub alpha_lt_1: bool,
    /// `None` when no `beta` was supplied or some `delta_i >= 1`.
    pub momp_cond_holds: Option<bool>,
}

/// Every condition quantity for one `(ensemble, S)` pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub n: usize,
    pub s: usize,
    pub d: usize,
    pub support: Vec<usize>,
    pub alpha: f64,
    pub gamma_col: f64,
    pub worst_case_block: f64,
    pub worst_case_individual: f64,
    pub isometry: LocalIsometryProfile,
    /// `None` when some `delta_i >= 1`.
    pub momp_ratio: Option<f64>,
    pub momp_condition: Option<MompCondition>,
    pub rank_deficient: bool,
    pub unit_columns: bool,
    pub flags: ConditionFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundReport>,
}

pub fn evaluate_conditions(
    ensemble: &MeasurementEnsemble,
    support: &SupportSet,
    params: Option<&BoundParams>,
) -> Result<ConditionReport> {
    let table = pseudoinverse_column_norms(ensemble, support)?;
    let worst = worst_case_from(&table);
    let avg = average_from(&table);
    let isometry = local_isometry(ensemble, support)?;
    let ratio = momp_ratio(&isometry).ok();
    let momp_cond = params.and_then(|p| {
        p.beta
            .and_then(|beta| momp_condition(&isometry, beta, p.varkappa_or_default()).ok())
    });
    let (n, s, d) = (ensemble.cols(), support.len(), ensemble.count());
    let bounds = params.map(|p| bound_report(p, n, s, d, &avg, &isometry));
    Ok(ConditionReport {
        n,
        s,
        d,
        support: support.indices().to_vec(),
        alpha: avg.alpha,
        gamma_col: avg.gamma_col,
        worst_case_block: worst.worst_case_block,
        worst_case_individual: worst.worst_case_individual,
        momp_ratio: ratio,
        momp_condition: momp_cond,
        rank_deficient: worst.rank_deficient,
        unit_columns: ensemble.unit_columns(),
        flags: ConditionFlags {
            eq7_holds: worst.eq7_holds,
            eq8_holds: worst.eq8_holds,
            alpha_lt_1: avg.alpha < 1.0,
            momp_cond_holds: momp_cond.map(|c| c.holds_noiseless),
        },
        isometry,
        bounds,
    })
}

fn bound_report(
    p: &BoundParams,
    n: usize,
    s: usize,
    d: usize,
    avg: &AverageCondition,
    iso: &LocalIsometryProfile,
) -> BoundReport {
    const NEED_XI: &str = "xi not supplied";
    const NEED_BETA_C: &str = "beta and c_sa required";
    let rho = p.rho_or_default();
    let lopt_subgaussian = p.xi.map_or(BoundEntry::Skipped { skipped: NEED_XI }, |xi| {
        bound_lopt_subgaussian(n, s, d, avg.alpha, avg.gamma_col, rho, xi).into()
    });
    let lopt_gaussian = p.xi.map_or(BoundEntry::Skipped { skipped: NEED_XI }, |xi| {
        bound_lopt_gaussian(n, s, d, avg.alpha, avg.gamma_col, xi).into()
    });
    let (momp_subgaussian, momp_gaussian) = match (p.beta, p.c_sa) {
        (Some(beta), Some(c)) => (
            bound_momp(n, s, d, beta, rho, c).into(),
            bound_momp_gaussian(n, s, d, beta, p.varsigma_or_default(), c).into(),
        ),
        _ => (
            BoundEntry::Skipped { skipped: NEED_BETA_C },
            BoundEntry::Skipped { skipped: NEED_BETA_C },
        ),
    };
    let popt_noisy = match (p.xi, p.gamma_reg) {
        (Some(xi), Some(g)) => bound_popt_noisy(d, avg.alpha, g, xi).into(),
        _ => BoundEntry::Skipped { skipped: "xi and gamma_reg required" },
    };
    let popt_noise_condition = match (p.xi, p.gamma_reg, p.beta, p.epsilon, p.c1, p.c2, p.c3, p.c4) {
        (Some(xi), Some(g), Some(beta), Some(eps), Some(c1), Some(c2), Some(c3), Some(c4)) => {
            popt_noise_condition(eps, g, s, d, beta, xi, [c1, c2, c3, c4]).into()
        }
        _ => BoundEntry::Skipped { skipped: "xi, gamma_reg, beta, epsilon and c1..c4 required" },
    };
    let momp_noise_budget = match p.varkappa {
        Some(k) => momp_noise_budget(iso, k).into(),
        None => BoundEntry::Skipped { skipped: "varkappa not supplied" },
    };
    BoundReport {
        lopt_subgaussian,
        lopt_gaussian,
        momp_subgaussian,
        momp_gaussian,
        popt_noisy,
        popt_noise_condition,
        momp_noise_budget,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(mats: Vec<DMatrix<f64>>) -> MeasurementEnsemble {
        MeasurementEnsemble::new(mats).unwrap()
    }

    #[test]
    fn orthogonal_columns_give_zero_coefficients() {
        let a = DMatrix::from_row_slice(3, 4, &[1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 1.]);
        let s = SupportSet::new([0, 1], 4).unwrap();
        let t = pseudoinverse_column_norms(&ens(vec![a]), &s).unwrap();
        assert_eq!(t.off_support, vec![2, 3]);
        assert!(t.l2[0].iter().all(|&v| v == 0.0));
        assert!(t.l1[0].iter().all(|&v| v == 0.0));
        assert!(!t.any_rank_deficient());
    }

    #[test]
    fn duplicate_column_has_unit_coefficient() {
        let c = 1.0 / 3f64.sqrt();
        let a = DMatrix::from_row_slice(3, 2, &[c, c, c, c, c, c]);
        let s = SupportSet::new([0], 2).unwrap();
        let t = pseudoinverse_column_norms(&ens(vec![a]), &s).unwrap();
        assert!((t.l2[0][0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_deficiency_is_flagged_not_fatal() {
        let a = DMatrix::from_row_slice(2, 3, &[1., 2., 0., 1., 2., 1.]);
        let s = SupportSet::new([0, 1], 3).unwrap();
        let wc = evaluate_worst_case(&ens(vec![a]), &s).unwrap();
        assert!(wc.rank_deficient);
    }

    #[test]
    fn support_dimension_must_match() {
        let a = DMatrix::identity(3, 4);
        let s = SupportSet::new([0], 5).unwrap();
        assert!(evaluate_worst_case(&ens(vec![a]), &s).is_err());
    }

    #[test]
    fn single_matrix_block_equals_individual() {
        let a = crate::model::gaussian_matrix(5, 8, true, 4).unwrap();
        let s = SupportSet::new([1, 6], 8).unwrap();
        let wc = evaluate_worst_case(&ens(vec![a]), &s).unwrap();
        assert!((wc.worst_case_block - wc.worst_case_individual).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_support_isometry() {
        let a = DMatrix::<f64>::identity(4, 4);
        let s = SupportSet::new([0, 2], 4).unwrap();
        let p = local_isometry(&ens(vec![a.clone(), a]), &s).unwrap();
        assert_eq!(p.delta, vec![0.0, 0.0]);
        assert_eq!(p.mu, vec![0.0, 0.0]);
        let empty = local_isometry(&ens(vec![DMatrix::identity(3, 5)]), &SupportSet::empty(5)).unwrap();
        assert_eq!((empty.delta_max, empty.mu_max), (0.0, 0.0));
    }

    #[test]
    fn momp_condition_errors_and_zero_coherence() {
        let p = LocalIsometryProfile::new(vec![0.2, 0.3], vec![0.0, 0.0]).unwrap();
        let c = momp_condition(&p, 0.5, 0.0).unwrap();
        assert_eq!(c.ratio_eq14, 0.0);
        assert!(c.holds_noiseless && c.holds_noisy);
        let bad = LocalIsometryProfile::new(vec![1.0, 0.3], vec![0.1, 0.1]).unwrap();
        assert!(matches!(momp_condition(&bad, 0.5, 0.0), Err(GmmvError::ConditionInapplicable(_))));
        assert!(momp_condition(&p, 0.0, 0.0).is_err());
        assert!(momp_condition(&p, 1.5, 0.0).is_err());
    }

    #[test]
    fn momp_condition_direct_arithmetic() {
        // (mu, delta) = (0.3, 0.2), (0.1, 0.1); exact rational value 1220/14081
        let p = LocalIsometryProfile::new(vec![0.2, 0.1], vec![0.3, 0.1]).unwrap();
        let c = momp_condition(&p, 0.5, 0.0).unwrap();
        assert!((c.ratio_eq14 - 1220.0 / 14081.0).abs() < 1e-15);
        assert!(c.holds_noiseless);
        assert!(c.holds_noisy);
    }

    #[test]
    fn noise_budget_round_trip() {
        let p = LocalIsometryProfile::new(vec![0.2, 0.4], vec![0.3, 0.1]).unwrap();
        let k = momp_varkappa_for_noise(&p, 0.1).unwrap();
        assert!((momp_noise_budget(&p, k).unwrap() - 0.1).abs() < 1e-15);
        assert!((momp_error_bound(0.0, 0.1).unwrap() - 0.1).abs() < 1e-18);
        assert!(momp_error_bound(1.0, 0.1).is_err());
    }

    #[test]
    fn uniqueness_threshold() {
        assert_eq!(p0_mmv_uniqueness_threshold(3, 1), 1.5);
        assert!(1.0 < p0_mmv_uniqueness_threshold(3, 1));
        assert!(2.0 >= p0_mmv_uniqueness_threshold(3, 1));
        assert_eq!(p0_mmv_uniqueness_threshold(5, 3), 3.5);
        // K = 1 gives spark / 2
        assert_eq!(p0_mmv_uniqueness_threshold(6, 1), 3.0);
    }

    #[test]
    fn spark_small_cases() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, r, 0.0, 1.0, r]);
        assert_eq!(spark(&a, 20).unwrap(), Spark::Finite(3));
        assert_eq!(spark(&DMatrix::identity(3, 3), 20).unwrap(), Spark::Infinite);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(spark(&z, 20).unwrap(), Spark::Finite(1));
        assert!(matches!(spark(&DMatrix::zeros(2, 21), 20), Err(GmmvError::LimitExceeded(_))));
        assert_eq!(Spark::Infinite.to_string(), "infinite");
    }

    #[test]
    fn bounds_reject_bad_inputs() {
        assert!(bound_lopt_subgaussian(10, 2, 4, 0.5, 1.0, 0.5, 0.4).is_err());
        assert!(bound_lopt_subgaussian(10, 2, 4, 0.5, 1.0, 0.5, 10.0).is_err());
        assert!(bound_lopt_subgaussian(10, 12, 4, 0.5, 1.0, 0.5, 0.6).is_err());
        assert!(bound_momp(10, 2, 4, 0.5, 0.5, 0.0).is_err());
        assert!(bound_momp(10, 2, 4, 100.0, 0.5, 1.0).is_err());
        assert!(bound_popt_noisy(4, 0.5, 0.0, 0.6).is_err());
        assert!(bound_popt_noisy(4, 0.5, 1.0, 0.4).is_err());
        assert!(popt_noise_condition(0.1, 0.0, 2, 4, 0.1, 0.5, [0.0; 4]).is_err());
        assert!(bound_momp_gaussian(10, 2, 4, 0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn lopt_reference_values() {
        // n=60, s=4, d=8, alpha=0.8, gamma=1, rho=1/2, xi^2=0.8; 40-digit reference
        let b = bound_lopt_subgaussian(60, 4, 8, 0.8, 1.0, 0.5, 0.8f64.sqrt()).unwrap();
        assert!((b.raw - (-58.994_925_141_508_97)).abs() < 1e-9);
        assert_eq!(b.clamped, 0.0);
    }

    #[test]
    fn momp_reference_values() {
        // s=3, n=20, d=16, beta=0.5, rho=1/2, c=1; 40-digit reference
        let b = bound_momp(20, 3, 16, 0.5, 0.5, 1.0).unwrap();
        assert!((b.raw - (-142.847_828_266_646_7)).abs() < 1e-9);
        let g = bound_momp_gaussian(20, 3, 16, 0.5, 1.0, 1.0).unwrap();
        assert!((g.raw - (-1.637_451_999_977_722)).abs() < 1e-12);
    }

    #[test]
    fn lopt_boundary_returns_raw_vacuous_value() {
        let b = bound_lopt_subgaussian(10, 2, 4, 0.5, 1.0, 0.5, 0.5).unwrap();
        let second = 2.0 * (-4.0 * 0.75f64.powi(2) / (2048.0 * E * E * 0.25)).exp();
        assert!((b.raw - (1.0 - 8.0 - second)).abs() < 1e-15);
        assert_eq!(b.clamped, 0.0);
        let g = bound_lopt_gaussian(10, 2, 4, 0.5, 1.0, 0.5).unwrap();
        assert!(g.raw <= 1.0 - 8.0);
    }

    #[test]
    fn momp_bound_limits() {
        let tiny = bound_momp(20, 3, 16, 1e-12, 0.5, 1.0).unwrap();
        assert!((tiny.raw - (1.0 - 8.0 * 18.0)).abs() < 1e-9);
        let b1 = bound_momp(20, 3, 16, 0.5, 0.5, 1.0).unwrap();
        let b2 = bound_momp(20, 3, 32, 0.5, 0.5, 1.0).unwrap();
        let f1 = (1.0 - b1.raw) / (8.0 * 18.0);
        let f2 = (1.0 - b2.raw) / (8.0 * 18.0);
        assert!((f2 - f1 * f1).abs() < 1e-15);
    }

    #[test]
    fn popt_condition_noiseless_collapse() {
        let (g, c2, c4, s, d, beta, xi) = (0.1, 0.3, 2.0, 4usize, 9usize, 0.2, 0.6);
        let c = popt_noise_condition(0.0, g, s, d, beta, xi, [0.0, c2, 0.0, c4]).unwrap();
        let lhs = g * c4 * 2.0 * (1.0 - beta + 2.0 * c2);
        assert!((c.lhs - lhs).abs() < 1e-15);
        assert!((c.rhs - 3.0 * (1.0 - xi)).abs() < 1e-15);
        assert_eq!(c.holds, lhs < 3.0 * (1.0 - xi));
    }

    #[test]
    fn report_serializes_with_bounds() {
        let e = crate::model::generate_gaussian_ensemble(6, 10, 2, true, 1).unwrap();
        let s = SupportSet::new([0, 3], 10).unwrap();
        let p = BoundParams { xi: Some(0.9), beta: Some(0.2), c_sa: Some(1.0), ..Default::default() };
        let r = evaluate_conditions(&e, &s, Some(&p)).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["isometry"]["delta"].as_array().unwrap().len(), 2);
        assert!(json["bounds"]["momp_subgaussian"]["raw"].is_number());
        assert!(json["bounds"]["popt_noisy"]["skipped"].is_string());
        assert!(r.alpha <= r.gamma_col);
    }
}
