//! Greedy joint-support recovery (MOMP).
//!
//! Each iteration picks the column index whose correlations with all `d`
//! residuals have the largest summed square, adds it to the selected set, and
//! replaces every residual by the component of `y^(i)` orthogonal to the span
//! of the selected columns of `A^(i)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GmmvError, Result};
use crate::linalg::{pseudoinverse, select_columns};
use crate::model::{MeasurementEnsemble, Observations, SignalEnsemble, SupportSet};

/// Stopping rule: the first of `p == known_support_size`, joint residual
/// `<= stop_residual`, or `p == max_iterations` ends the run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MompConfig {
    /// Defaults to `known_support_size` when set, else to `min(m, n)`.
    pub max_iterations: Option<usize>,
    pub stop_residual: f64,
    pub known_support_size: Option<usize>,
}

impl MompConfig {
    pub fn with_sparsity(s: usize) -> Self {
        Self { known_support_size: Some(s), ..Self::default() }
    }

    pub fn with_residual(epsilon: f64) -> Self {
        Self { stop_residual: epsilon, ..Self::default() }
    }

    fn iteration_cap(&self, m: usize, n: usize) -> Result<usize> {
        if !(self.stop_residual >= 0.0) || !self.stop_residual.is_finite() {
            return Err(GmmvError::invalid(format!(
                "stop_residual = {} must be finite and >= 0",
                self.stop_residual
            )));
        }
        let limit = m.min(n);
        let cap = self.max_iterations.or(self.known_support_size).unwrap_or(limit);
        if cap > limit {
            return Err(GmmvError::invalid(format!(
                "at most min(m, n) = {limit} columns can be selected, asked for {cap}"
            )));
        }
        if let Some(k) = self.known_support_size {
            if k > limit {
                return Err(GmmvError::invalid(format!(
                    "known support size {k} exceeds min(m, n) = {limit}"
                )));
            }
        }
        Ok(cap)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MompResult {
    /// Least-squares coefficients on the selected support, zero elsewhere.
    pub estimate: SignalEnsemble,
    /// Indices in the order they were picked.
    pub selected: Vec<usize>,
    /// Joint residual `sqrt(sum_i ||r_p^(i)||^2)` for `p = 0, 1, ...`.
    pub residual_norms: Vec<f64>,
    /// `matrix_residual_norms[p][i] = ||r_p^(i)||`.
    pub matrix_residual_norms: Vec<Vec<f64>>,
    /// False when the iteration cap ended the run.
    pub converged: bool,
    /// Set when some `A_{S_p}^(i)` lost full column rank along the way.
    pub rank_deficient: bool,
}

impl MompResult {
    pub fn support(&self) -> &SupportSet {
        self.estimate.support()
    }
}

pub fn momp_solve(
    ensemble: &MeasurementEnsemble,
    observations: &Observations,
    config: &MompConfig,
) -> Result<MompResult> {
    observations.check_against(ensemble)?;
    let (m, n, d) = (ensemble.rows(), ensemble.cols(), ensemble.count());
    let cap = config.iteration_cap(m, n)?;
    let y = observations.vectors();

    let mut residual = y.clone();
    let mut coefficients: Vec<DVector<f64>> = vec![DVector::zeros(0); d];
    let mut selected: Vec<usize> = Vec::new();
    let mut in_set = vec![false; n];
    let mut rank_deficient = false;

    let per_matrix = |r: &DMatrix<f64>| r.column_iter().map(|c| c.norm()).collect::<Vec<_>>();
    let joint = |norms: &[f64]| norms.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut matrix_trace = vec![per_matrix(&residual)];
    let mut trace = vec![joint(&matrix_trace[0])];

    let converged = loop {
        let p = selected.len();
        if config.known_support_size == Some(p) {
            break true;
        }
        if trace[p] <= config.stop_residual {
            break true;
        }
        if p == cap {
            break false;
        }

        // scores accumulated in matrix order 0..d-1
        let mut scores = vec![0.0f64; n];
        for (i, a) in ensemble.matrices().iter().enumerate() {
            let corr = a.tr_mul(&residual.column(i));
            for (s, c) in scores.iter_mut().zip(corr.iter()) {
                *s += c * c;
            }
        }
        let mut best: Option<usize> = None;
        for l in 0..n {
            if in_set[l] {
                continue;
            }
            if best.is_none_or(|b| scores[l] > scores[b]) {
                best = Some(l);
            }
        }
        let l = best.expect("cap <= n leaves an unselected index");
        selected.push(l);
        in_set[l] = true;

        for (i, a) in ensemble.matrices().iter().enumerate() {
            let a_s = select_columns(a, &selected);
            let (pinv, r) = pseudoinverse(&a_s);
            rank_deficient |= r < selected.len();
            let coef = pinv * y.column(i);
            let fit = &a_s * &coef;
            residual.set_column(i, &(y.column(i) - fit));
            coefficients[i] = coef;
        }
        matrix_trace.push(per_matrix(&residual));
        trace.push(joint(&matrix_trace[p + 1]));
    };

    let mut values = DMatrix::zeros(n, d);
    for (i, coef) in coefficients.iter().enumerate() {
        for (k, &l) in selected.iter().enumerate() {
            values[(l, i)] = coef[k];
        }
    }
    let support = SupportSet::new(selected.iter().copied(), n)?;
    Ok(MompResult {
        estimate: SignalEnsemble::new(values, support)?,
        selected,
        residual_norms: trace,
        matrix_residual_norms: matrix_trace,
        converged,
        rank_deficient,
    })
}
