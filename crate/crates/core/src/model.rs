//! Signals, measurement ensembles, observations and the random samplers
//! behind the probabilistic signal model.
//!
//! The signal ensemble is stored as one `n x d` matrix whose column `i` is the
//! `i`-th signal; every algorithm in the crate works row-wise on the support,
//! so the joint row norms are contiguous in memory.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GmmvError, Result};
use crate::rng::{derive_seed, rng_from, Rng};

/// Columns whose norm is within this distance of one count as unit norm.
pub const UNIT_COLUMN_TOL: f64 = 1e-12;

/// A common row support `S` inside `{0, ..., n-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportSet {
    indices: Vec<usize>,
    ambient_dim: usize,
}

impl SupportSet {
    /// Builds a support from indices in any order. Duplicates and indices
    /// outside `[0, n)` are rejected.
    pub fn new(indices: impl IntoIterator<Item = usize>, ambient_dim: usize) -> Result<Self> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(GmmvError::invalid(format!("duplicate support index {}", w[0])));
        }
        if let Some(&last) = indices.last() {
            if last >= ambient_dim {
                return Err(GmmvError::invalid(format!(
                    "support index {last} out of range for n = {ambient_dim}"
                )));
            }
        }
        Ok(Self { indices, ambient_dim })
    }

    pub fn empty(ambient_dim: usize) -> Self {
        Self { indices: Vec::new(), ambient_dim }
    }

    /// Parses a comma separated index list such as `0,2,5`. An empty string is
    /// the empty support.
    pub fn parse(list: &str, ambient_dim: usize) -> Result<Self> {
        let list = list.trim();
        if list.is_empty() {
            return Ok(Self::empty(ambient_dim));
        }
        let indices = list
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| GmmvError::invalid(format!("bad support index {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, ambient_dim)
    }

    /// Uniformly random support of size `s`.
    pub fn random(ambient_dim: usize, s: usize, rng: &mut Rng) -> Result<Self> {
        if s > ambient_dim {
            return Err(GmmvError::invalid(format!(
                "support size {s} exceeds ambient dimension {ambient_dim}"
            )));
        }
        let picked = rand::seq::index::sample(rng, ambient_dim, s).into_vec();
        Self::new(picked, ambient_dim)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn contains(&self, l: usize) -> bool {
        self.indices.binary_search(&l).is_ok()
    }

    /// Indices of the complement, increasing.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.ambient_dim).filter(|&l| !self.contains(l)).collect()
    }

    /// The support with index `l` removed.
    pub fn without(&self, l: usize) -> Self {
        Self {
            indices: self.indices.iter().copied().filter(|&k| k != l).collect(),
            ambient_dim: self.ambient_dim,
        }
    }
}

/// The `d` measurement matrices, all `m x n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementEnsemble {
    matrices: Vec<DMatrix<f64>>,
    rows: usize,
    cols: usize,
    unit_columns: bool,
    seed: Option<u64>,
    permutations: Option<Vec<Vec<usize>>>,
}

impl MeasurementEnsemble {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| GmmvError::invalid("ensemble needs at least one matrix"))?;
        let (rows, cols) = first.shape();
        if rows == 0 || cols == 0 {
            return Err(GmmvError::invalid(format!("matrix shape {rows}x{cols} has a zero dimension")));
        }
        for (i, a) in matrices.iter().enumerate() {
            if a.shape() != (rows, cols) {
                return Err(GmmvError::invalid(format!(
                    "matrix {i} is {}x{}, expected {rows}x{cols}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(GmmvError::invalid(format!("matrix {i} has non-finite entries")));
            }
        }
        let unit_columns = matrices.iter().all(|a| {
            a.column_iter().all(|c| (c.norm() - 1.0).abs() <= UNIT_COLUMN_TOL)
        });
        Ok(Self { matrices, rows, cols, unit_columns, seed: None, permutations: None })
    }

    /// The MMV special case: `d` copies of one matrix.
    pub fn replicated(base: &DMatrix<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(GmmvError::invalid("d must be at least 1"));
        }
        Self::new(vec![base.clone(); d])
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_permutations(mut self, permutations: Vec<Vec<usize>>) -> Result<Self> {
        if permutations.len() != self.count() {
            return Err(GmmvError::invalid("one permutation per matrix required"));
        }
        self.permutations = Some(permutations);
        Ok(self)
    }

    pub fn count(&self) -> usize {
        self.matrices.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.matrices[i]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn unit_columns(&self) -> bool {
        self.unit_columns
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn permutations(&self) -> Option<&[Vec<usize>]> {
        self.permutations.as_deref()
    }

    /// The first `d` matrices, keeping metadata.
    pub fn prefix(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.count() {
            return Err(GmmvError::invalid(format!(
                "requested {d} matrices from an ensemble of {}",
                self.count()
            )));
        }
        let mut out = Self::new(self.matrices[..d].to_vec())?;
        out.seed = self.seed;
        out.permutations = self.permutations.as_ref().map(|p| p[..d].to_vec());
        Ok(out)
    }
}

/// `d` signals sharing the row support `S`, stored as an `n x d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalEnsemble {
    values: DMatrix<f64>,
    support: SupportSet,
}

impl SignalEnsemble {
    pub fn new(values: DMatrix<f64>, support: SupportSet) -> Result<Self> {
        if values.nrows() != support.ambient_dim() {
            return Err(GmmvError::invalid(format!(
                "signal has {} rows but support lives in dimension {}",
                values.nrows(),
                support.ambient_dim()
            )));
        }
        for l in support.complement() {
            if values.row(l).iter().any(|&v| v != 0.0) {
                return Err(GmmvError::invalid(format!("row {l} is off the support but nonzero")));
            }
        }
        Ok(Self { values, support })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self { values: DMatrix::zeros(n, d), support: SupportSet::empty(n) }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn count(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

/// The measured vectors `y^(i)` as columns of an `m x d` matrix, plus the
/// joint noise budget `eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    vectors: DMatrix<f64>,
    noise_budget: f64,
}

impl Observations {
    pub fn new(vectors: DMatrix<f64>, noise_budget: f64) -> Result<Self> {
        if !(noise_budget >= 0.0) || !noise_budget.is_finite() {
            return Err(GmmvError::invalid(format!("noise budget {noise_budget} must be finite and >= 0")));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(GmmvError::invalid("observations contain non-finite values"));
        }
        Ok(Self { vectors, noise_budget })
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> nalgebra::DVectorView<'_, f64> {
        self.vectors.column(i)
    }

    pub fn count(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn noise_budget(&self) -> f64 {
        self.noise_budget
    }

    /// Checks that these observations fit `ensemble`.
    pub fn check_against(&self, ensemble: &MeasurementEnsemble) -> Result<()> {
        if self.vectors.ncols() != ensemble.count() || self.vectors.nrows() != ensemble.rows() {
            return Err(GmmvError::invalid(format!(
                "observations are {}x{} but the ensemble needs {} vectors of length {}",
                self.vectors.nrows(),
                self.vectors.ncols(),
                ensemble.count(),
                ensemble.rows()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    Gaussian,
    Rademacher,
    /// Uniform on `[-M, M]`, rescaled to unit variance.
    UniformBounded { bound: f64 },
}

/// Default sub-Gaussian parameter. A standard Gaussian has `E[e^{tx}] = e^{t^2/2}`;
/// Rademacher gives `cosh t <= e^{t^2/2}` and the unit-variance uniform on
/// `[-sqrt3, sqrt3]` gives `sinh(at)/(at) <= e^{a^2 t^2 / 6} = e^{t^2/2}`.
pub const DEFAULT_RHO: f64 = 0.5;

/// Zero-mean, unit-variance entry distribution with its sub-Gaussian parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct SignalDistribution {
    kind: DistributionKind,
    rho: f64,
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    #[serde(flatten)]
    kind: DistributionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
}

impl TryFrom<DistributionRepr> for SignalDistribution {
    type Error = GmmvError;

    fn try_from(r: DistributionRepr) -> Result<Self> {
        Self::with_rho(r.kind, r.rho.unwrap_or(DEFAULT_RHO))
    }
}

impl From<SignalDistribution> for DistributionRepr {
    fn from(d: SignalDistribution) -> Self {
        DistributionRepr { kind: d.kind, rho: Some(d.rho) }
    }
}

impl SignalDistribution {
    pub fn gaussian() -> Self {
        Self { kind: DistributionKind::Gaussian, rho: DEFAULT_RHO }
    }

    pub fn rademacher() -> Self {
        Self { kind: DistributionKind::Rademacher, rho: DEFAULT_RHO }
    }

    pub fn uniform_bounded(bound: f64) -> Result<Self> {
        Self::with_rho(DistributionKind::UniformBounded { bound }, DEFAULT_RHO)
    }

    /// A distribution carrying a caller-chosen `rho`. The Gaussian kind only
    /// accepts `rho = 1/2`.
    pub fn with_rho(kind: DistributionKind, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(GmmvError::invalid(format!("rho must be positive, got {rho}")));
        }
        match kind {
            DistributionKind::Gaussian if rho != DEFAULT_RHO => {
                return Err(GmmvError::invalid("a standard Gaussian is sub-Gaussian with rho = 1/2"))
            }
            DistributionKind::UniformBounded { bound } if !(bound > 0.0) || !bound.is_finite() => {
                return Err(GmmvError::invalid(format!("uniform bound must be positive, got {bound}")))
            }
            _ => {}
        }
        Ok(Self { kind, rho })
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn draw(&self, rng: &mut Rng) -> f64 {
        match self.kind {
            DistributionKind::Gaussian => rng.sample(StandardNormal),
            DistributionKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            DistributionKind::UniformBounded { bound } => {
                let u: f64 = rng.random_range(-bound..=bound);
                u * 3f64.sqrt() / bound
            }
        }
    }
}

/// Bounded noise model: Gaussian draws rescaled so that the concatenated
/// noise has ℓ2 norm exactly `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub epsilon: f64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self { epsilon: 0.0 }
    }
}

/// Draws the support rows of `d` signals i.i.d. from `dist`. Column `i` only
/// depends on `(seed, i)`, so a larger `d` extends a smaller one.
pub fn sample_signals(
    support: &SupportSet,
    d: usize,
    dist: SignalDistribution,
    seed: u64,
) -> Result<SignalEnsemble> {
    let n = support.ambient_dim();
    if d == 0 {
        return Err(GmmvError::invalid("d must be at least 1"));
    }
    if n == 0 {
        return Err(GmmvError::invalid("ambient dimension must be at least 1"));
    }
    let mut values = DMatrix::zeros(n, d);
    for i in 0..d {
        let mut rng = rng_from(derive_seed(seed, i as u64));
        for &l in support.indices() {
            values[(l, i)] = dist.draw(&mut rng);
        }
    }
    Ok(SignalEnsemble { values, support: support.clone() })
}

/// `y^(i) = A^(i) x^(i) + e^(i)` with `sum_i ||e^(i)||^2 = eps^2`.
pub fn synthesize_observations(
    ensemble: &MeasurementEnsemble,
    signals: &SignalEnsemble,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Observations> {
    let (m, n, d) = (ensemble.rows(), ensemble.cols(), ensemble.count());
    if signals.values().nrows() != n || signals.count() != d {
        return Err(GmmvError::invalid(format!(
            "signals are {}x{} but the ensemble expects {n}x{d}",
            signals.values().nrows(),
            signals.count()
        )));
    }
    if !(noise.epsilon >= 0.0) || !noise.epsilon.is_finite() {
        return Err(GmmvError::invalid(format!("epsilon {} must be finite and >= 0", noise.epsilon)));
    }
    let mut y = DMatrix::zeros(m, d);
    for i in 0..d {
        y.set_column(i, &(ensemble.matrix(i) * signals.values().column(i)));
    }
    if noise.epsilon > 0.0 {
        let mut rng = rng_from(seed);
        let mut e = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = e.norm();
        if norm == 0.0 {
            return Err(GmmvError::invalid("degenerate noise draw"));
        }
        e *= noise.epsilon / norm;
        y += e;
    }
    Observations::new(y, noise.epsilon)
}

fn check_dims(m: usize, n: usize, d: usize) -> Result<()> {
    if m == 0 || n == 0 || d == 0 {
        return Err(GmmvError::invalid(format!("dimensions m={m}, n={n}, d={d} must all be >= 1")));
    }
    Ok(())
}

/// One `m x n` standard Gaussian matrix, optionally with normalized columns.
pub fn gaussian_matrix(m: usize, n: usize, unit_columns: bool, seed: u64) -> Result<DMatrix<f64>> {
    check_dims(m, n, 1)?;
    let mut rng = rng_from(seed);
    let mut a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    if unit_columns {
        for mut col in a.column_iter_mut() {
            let norm = col.norm();
            if norm == 0.0 {
                return Err(GmmvError::invalid("zero column drawn; cannot normalize"));
            }
            col /= norm;
        }
    }
    Ok(a)
}

/// `d` independent Gaussian matrices; matrix `i` depends only on `(seed, i)`.
pub fn generate_gaussian_ensemble(
    m: usize,
    n: usize,
    d: usize,
    unit_columns: bool,
    seed: u64,
) -> Result<MeasurementEnsemble> {
    check_dims(m, n, d)?;
    let matrices = (0..d)
        .map(|i| gaussian_matrix(m, n, unit_columns, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementEnsemble::new(matrices)?.with_seed(seed))
}

/// Applies a column permutation: column `j` of the result is column
/// `perm[j]` of `base`.
pub fn permute_columns(base: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(base.nrows(), perm.len(), |r, c| base[(r, perm[c])])
}

/// `d` matrices obtained from `base` by independent uniformly random column
/// permutations. The permutations are kept as metadata.
pub fn generate_permuted_ensemble(base: &DMatrix<f64>, d: usize, seed: u64) -> Result<MeasurementEnsemble> {
    check_dims(base.nrows(), base.ncols(), d)?;
    let n = base.ncols();
    let mut perms = Vec::with_capacity(d);
    let mut matrices = Vec::with_capacity(d);
    for i in 0..d {
        let mut rng = rng_from(derive_seed(seed, i as u64));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        matrices.push(permute_columns(base, &perm));
        perms.push(perm);
    }
    MeasurementEnsemble::new(matrices)?.with_seed(seed).with_permutations(perms)
}

/// Rows whose ℓ2 norm exceeds `rel_tol` times the largest row norm.
pub fn extract_row_support(values: &DMatrix<f64>, rel_tol: f64) -> SupportSet {
    let norms: Vec<f64> = values.row_iter().map(|r| r.norm()).collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return SupportSet::empty(values.nrows());
    }
    let idx = norms
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > rel_tol * max)
        .map(|(l, _)| l);
    SupportSet::new(idx, values.nrows()).expect("row indices are distinct and in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_validation() {
        assert!(SupportSet::new([3, 1], 5).is_ok());
        assert_eq!(SupportSet::new([3, 1], 5).unwrap().indices(), &[1, 3]);
        assert!(SupportSet::new([1, 1], 5).is_err());
        assert!(SupportSet::new([5], 5).is_err());
        assert_eq!(SupportSet::parse("0, 2,5", 6).unwrap().indices(), &[0, 2, 5]);
        assert!(SupportSet::parse("", 6).unwrap().is_empty());
        assert!(SupportSet::parse("a", 6).is_err());
        assert_eq!(SupportSet::new([1, 3], 5).unwrap().complement(), vec![0, 2, 4]);
    }

    #[test]
    fn empty_support_gives_zero_signals() {
        let s = SupportSet::empty(6);
        let x = sample_signals(&s, 3, SignalDistribution::gaussian(), 7).unwrap();
        assert_eq!(x.values().shape(), (6, 3));
        assert!(x.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rademacher_single_entry() {
        let s = SupportSet::new([1], 4).unwrap();
        for seed in 0..20 {
            let x = sample_signals(&s, 1, SignalDistribution::rademacher(), seed).unwrap();
            let nz: Vec<f64> = x.values().iter().copied().filter(|&v| v != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert!(nz[0] == 1.0 || nz[0] == -1.0);
            assert_ne!(x.values()[(1, 0)], 0.0);
        }
    }

    #[test]
    fn gaussian_moments() {
        let s = SupportSet::new([0, 2], 3).unwrap();
        let d = 100_000;
        let x = sample_signals(&s, d, SignalDistribution::gaussian(), 1).unwrap();
        for &l in s.indices() {
            let row = x.values().row(l);
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d - 1) as f64;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn uniform_has_unit_variance() {
        let s = SupportSet::new([0], 1).unwrap();
        let dist = SignalDistribution::uniform_bounded(5.0).unwrap();
        let x = sample_signals(&s, 100_000, dist, 3).unwrap();
        let row = x.values().row(0);
        let var = row.iter().map(|v| v * v).sum::<f64>() / 100_000.0;
        assert!((var - 1.0).abs() < 0.03, "var {var}");
        assert!(row.iter().all(|v| v.abs() <= 3f64.sqrt() + 1e-12));
    }

    #[test]
    fn gaussian_rho_is_pinned() {
        assert!(SignalDistribution::with_rho(DistributionKind::Gaussian, 1.0).is_err());
        assert!(SignalDistribution::with_rho(DistributionKind::Rademacher, 1.0).is_ok());
        assert!(SignalDistribution::with_rho(DistributionKind::Rademacher, 0.0).is_err());
    }

    #[test]
    fn sampler_errors() {
        let s = SupportSet::empty(3);
        assert!(sample_signals(&s, 0, SignalDistribution::gaussian(), 1).is_err());
        assert!(sample_signals(&SupportSet::empty(0), 1, SignalDistribution::gaussian(), 1).is_err());
        assert!(generate_gaussian_ensemble(0, 3, 1, false, 1).is_err());
    }

    #[test]
    fn noiseless_and_pure_noise_observations() {
        let a = generate_gaussian_ensemble(4, 6, 2, false, 11).unwrap();
        let s = SupportSet::new([1, 4], 6).unwrap();
        let x = sample_signals(&s, 2, SignalDistribution::gaussian(), 2).unwrap();
        let y = synthesize_observations(&a, &x, NoiseSpec::noiseless(), 3).unwrap();
        for i in 0..2 {
            assert_eq!(y.vector(i).clone_owned(), a.matrix(i) * x.values().column(i));
        }

        let zero = SignalEnsemble::zeros(6, 2);
        let y = synthesize_observations(&a, &zero, NoiseSpec { epsilon: 1.0 }, 3).unwrap();
        assert!((y.vectors().norm_squared() - 1.0).abs() < 1e-14);
        assert_eq!(y.noise_budget(), 1.0);
    }

    #[test]
    fn identity_measurement_picks_column() {
        let a = MeasurementEnsemble::new(vec![DMatrix::from_fn(5, 5, |r, c| (r * 5 + c) as f64)]).unwrap();
        let s = SupportSet::new([3], 5).unwrap();
        let mut v = DMatrix::zeros(5, 1);
        v[(3, 0)] = 1.0;
        let x = SignalEnsemble::new(v, s).unwrap();
        let y = synthesize_observations(&a, &x, NoiseSpec::noiseless(), 0).unwrap();
        assert_eq!(y.vector(0).clone_owned(), a.matrix(0).column(3).clone_owned());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = generate_gaussian_ensemble(4, 6, 2, false, 11).unwrap();
        let x = SignalEnsemble::zeros(6, 3);
        assert!(synthesize_observations(&a, &x, NoiseSpec::noiseless(), 0).is_err());
    }

    #[test]
    fn unit_columns_and_determinism() {
        let a = generate_gaussian_ensemble(4, 8, 2, true, 3).unwrap();
        assert!(a.unit_columns());
        for m in a.matrices() {
            for c in m.column_iter() {
                assert!((c.norm() - 1.0).abs() <= 1e-12);
            }
        }
        let b = generate_gaussian_ensemble(4, 8, 2, true, 3).unwrap();
        assert_eq!(a, b);
        let raw = generate_gaussian_ensemble(4, 8, 2, false, 3).unwrap();
        assert!(!raw.unit_columns());
        // prefix consistency
        let c = generate_gaussian_ensemble(4, 8, 5, true, 3).unwrap();
        assert_eq!(c.prefix(2).unwrap().matrices(), a.matrices());
    }

    #[test]
    fn square_gaussian_is_full_rank() {
        let a = generate_gaussian_ensemble(50, 50, 1, false, 5).unwrap();
        assert_eq!(crate::linalg::rank(a.matrix(0)), 50);
    }

    #[test]
    fn off_support_rows_must_be_zero() {
        let s = SupportSet::new([0], 2).unwrap();
        let v = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        assert!(SignalEnsemble::new(v, s).is_err());
    }

    #[test]
    fn distribution_json() {
        let d: SignalDistribution = serde_json::from_str(r#"{"kind":"rademacher","rho":0.7}"#).unwrap();
        assert_eq!(d.rho(), 0.7);
        let g: SignalDistribution = serde_json::from_str(r#"{"kind":"gaussian"}"#).unwrap();
        assert_eq!(g, SignalDistribution::gaussian());
        let u: SignalDistribution =
            serde_json::from_str(r#"{"kind":"uniform_bounded","bound":2.0}"#).unwrap();
        assert_eq!(u.kind(), DistributionKind::UniformBounded { bound: 2.0 });
        assert!(serde_json::from_str::<SignalDistribution>(r#"{"kind":"gaussian","rho":2.0}"#).is_err());
    }
}
