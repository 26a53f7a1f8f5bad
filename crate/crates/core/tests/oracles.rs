//! Cross-checks against independent reference computations.

use gmmv::conditions::{
    bound_lopt_gaussian, bound_lopt_subgaussian, bound_momp, bound_momp_gaussian, bound_popt_noisy,
    evaluate_average_condition, evaluate_worst_case, local_isometry, momp_condition, pseudoinverse_column_norms, spark,
    LocalIsometryProfile, Spark,
};
use gmmv::convex::{lopt_solve, popt_solve, SolverConfig};
use gmmv::experiments::{compare_mmv_gmmv, solve_p0_exhaustive, wilson_interval, Z_95};
use gmmv::model::{
    gaussian_matrix, generate_gaussian_ensemble, permute_columns, sample_signals, synthesize_observations,
    MeasurementEnsemble, NoiseSpec, Observations, SignalDistribution, SupportSet,
};
use gmmv::momp::{momp_solve, MompConfig};
use gmmv::rng::rng_from;
use nalgebra::{DMatrix, DVector};

fn columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])])
}

/// `(A^T A)^{-1} A^T b` through the normal equations.
fn normal_equations(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    (a.transpose() * a).lu().solve(&(a.transpose() * b)).expect("full column rank")
}

#[test]
fn pseudoinverse_norms_match_normal_equations() {
    let a = gaussian_matrix(6, 10, false, 41).unwrap();
    let e = MeasurementEnsemble::new(vec![a.clone()]).unwrap();
    let sup = SupportSet::new([2, 7], 10).unwrap();
    let t = pseudoinverse_column_norms(&e, &sup).unwrap();
    let a_s = columns(&a, sup.indices());
    for (j, &l) in t.off_support.iter().enumerate() {
        let c = normal_equations(&a_s, &a.column(l).into_owned());
        assert!((t.l2[0][j] - c.norm()).abs() < 1e-10);
        assert!((t.l1[0][j] - c.lp_norm(1)).abs() < 1e-10);
    }
    assert!(!t.any_rank_deficient());
}

#[test]
fn worst_case_matches_direct_loops() {
    let e = generate_gaussian_ensemble(5, 8, 2, false, 17).unwrap();
    let sup = SupportSet::new([1, 4], 8).unwrap();
    let wc = evaluate_worst_case(&e, &sup).unwrap();
    let mut block = 0.0f64;
    let mut individual = 0.0f64;
    for l in (0..8).filter(|l| !sup.contains(*l)) {
        let coeffs: Vec<DVector<f64>> = e
            .matrices()
            .iter()
            .map(|a| normal_equations(&columns(a, sup.indices()), &a.column(l).into_owned()))
            .collect();
        let mut sum = 0.0;
        for q in 0..2 {
            let mut best = 0.0f64;
            for c in &coeffs {
                best = best.max(c[q].abs());
            }
            sum += best;
        }
        block = block.max(sum);
        for c in &coeffs {
            individual = individual.max(c[0].abs() + c[1].abs());
        }
    }
    assert!((wc.worst_case_block - block).abs() < 1e-10);
    assert!((wc.worst_case_individual - individual).abs() < 1e-10);
    assert_eq!(wc.eq7_holds, block < 1.0);
    assert_eq!(wc.eq8_holds, individual < 1.0);
}

#[test]
fn alpha_on_constructed_ensemble() {
    // pinv(a_S) a_1 is 1.2 in matrix 0 and 0.2 in matrix 1
    let a0 = DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 0.0, 0.0]);
    let a1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.0]);
    let e = MeasurementEnsemble::new(vec![a0, a1]).unwrap();
    let avg = evaluate_average_condition(&e, &SupportSet::new([0], 2).unwrap()).unwrap();
    assert!((avg.alpha - (1.48f64 / 2.0).sqrt()).abs() < 1e-12);
    assert!((avg.alpha - 0.860).abs() < 1e-3);
    assert!((avg.gamma_col - 1.2).abs() < 1e-12);
}

#[test]
fn delta_matches_gram_eigenvalues() {
    let a = gaussian_matrix(8, 12, true, 23).unwrap();
    let e = MeasurementEnsemble::new(vec![a.clone()]).unwrap();
    let sup = SupportSet::new([0, 5, 9], 12).unwrap();
    let p = local_isometry(&e, &sup).unwrap();
    let a_s = columns(&a, sup.indices());
    let eig = (a_s.transpose() * &a_s).symmetric_eigen();
    let delta = eig.eigenvalues.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    assert!((p.delta[0] - delta).abs() < 1e-12);
    assert_eq!(p.delta_max, p.delta[0]);
}

#[test]
fn momp_ratio_direct_arithmetic() {
    let p = LocalIsometryProfile::new(vec![0.2, 0.1], vec![0.3, 0.1]).unwrap();
    let c = momp_condition(&p, 0.5, 0.0).unwrap();
    assert!((c.ratio_eq14 - 0.086_641_573_751_864_21).abs() < 1e-15);
    assert!((c.lhs_eq22 - 0.325_656_177_254_374_96).abs() < 1e-15);
    assert!(c.holds_noiseless);
    assert!(c.holds_noisy);
}

// frozen from 40-digit evaluations of the closed forms
#[test]
fn bound_values_frozen() {
    let xi = 0.8f64.sqrt();
    let sub = bound_lopt_subgaussian(60, 4, 8, 0.8, 1.0, 0.5, xi).unwrap();
    assert!((sub.raw - -58.994_925_141_508_97).abs() < 1e-9);
    assert_eq!(sub.clamped, 0.0);
    let sub = bound_lopt_subgaussian(60, 4, 1_000_000, 0.8, 1.0, 0.5, xi).unwrap();
    assert!((sub.raw - 0.998_464_231_605_779).abs() < 1e-9);
    let gauss = bound_lopt_gaussian(60, 4, 8, 0.8, 1.0, xi).unwrap();
    assert!((gauss.raw - -56.730_368_676_525_71).abs() < 1e-9);
    let m = bound_momp(20, 3, 16, 0.5, 0.5, 1.0).unwrap();
    assert!((m.raw - -142.847_828_266_646_7).abs() < 1e-9);
    let mg = bound_momp_gaussian(20, 3, 16, 0.5, 1.5, 1.0).unwrap();
    assert!((mg.raw - -1.491_914_167_300_542).abs() < 1e-12);
    let p = bound_popt_noisy(100, 0.5, 0.1, 0.3f64.sqrt()).unwrap();
    assert!((p.raw - 0.026_086_387_209_985_637).abs() < 1e-14);
}

#[test]
fn gaussian_bound_dominates_subgaussian() {
    for &n in &[20usize, 60, 200] {
        for &d in &[8usize, 1_000, 100_000, 1_000_000] {
            for &alpha in &[0.3f64, 0.6, 0.9] {
                for &gamma in &[alpha, 1.0, 1.5] {
                    for &t in &[0.05f64, 0.2, 0.5, 0.9] {
                        let xi = (alpha * alpha * (1.0 + t)).sqrt();
                        let (Ok(s), Ok(g)) = (
                            bound_lopt_subgaussian(n, 3, d, alpha, gamma, 0.5, xi),
                            bound_lopt_gaussian(n, 3, d, alpha, gamma, xi),
                        ) else {
                            continue;
                        };
                        assert!(g.raw >= s.raw - 1e-12, "n={n} d={d} alpha={alpha} gamma={gamma} xi={xi}");
                    }
                }
            }
        }
    }
}

#[test]
fn spark_brute_force() {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, r, 0.0, 1.0, r]);
    assert_eq!(spark(&a, 20).unwrap(), Spark::Finite(3));
    assert_eq!(spark(&DMatrix::identity(4, 4), 20).unwrap(), Spark::Infinite);
}

/// Single-vector orthogonal matching pursuit.
fn omp(a: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Vec<usize> {
    let mut chosen = Vec::new();
    let mut r = y.clone();
    for _ in 0..k {
        let corr = a.tr_mul(&r);
        let mut best = (0, -1.0);
        for l in (0..a.ncols()).filter(|l| !chosen.contains(l)) {
            if corr[l].abs() > best.1 {
                best = (l, corr[l].abs());
            }
        }
        chosen.push(best.0);
        let a_s = columns(a, &chosen);
        r = y - &a_s * normal_equations(&a_s, y);
    }
    chosen
}

#[test]
fn momp_with_one_matrix_is_omp() {
    for seed in 0..20 {
        let e = generate_gaussian_ensemble(12, 30, 1, true, seed).unwrap();
        let sup = SupportSet::random(30, 4, &mut rng_from(seed)).unwrap();
        let x = sample_signals(&sup, 1, SignalDistribution::gaussian(), seed + 100).unwrap();
        let obs = synthesize_observations(&e, &x, NoiseSpec::noiseless(), 0).unwrap();
        let r = momp_solve(&e, &obs, &MompConfig::with_sparsity(4)).unwrap();
        let reference = omp(e.matrix(0), &obs.vector(0).into_owned(), 4);
        assert_eq!(r.selected, reference, "seed {seed}");
    }
}

fn planted(e: &MeasurementEnsemble, sup: &SupportSet, seed: u64) -> (DMatrix<f64>, Observations) {
    let x = sample_signals(sup, e.count(), SignalDistribution::gaussian(), seed).unwrap();
    let obs = synthesize_observations(e, &x, NoiseSpec::noiseless(), 0).unwrap();
    (x.into_values(), obs)
}

#[test]
fn p0_oracle_agrees_with_momp_on_eq7_instance() {
    let sup = SupportSet::new([8, 9], 10).unwrap();
    let e = (0..200)
        .map(|seed| generate_gaussian_ensemble(6, 10, 3, false, seed).unwrap())
        .find(|e| evaluate_worst_case(e, &sup).unwrap().eq7_holds)
        .expect("some seed satisfies the condition");
    let (x, obs) = planted(&e, &sup, 77);
    let oracle = solve_p0_exhaustive(&e, &obs, 4, 0.0).unwrap();
    assert_eq!(*oracle.support(), sup);
    let r = momp_solve(&e, &obs, &MompConfig::with_sparsity(2)).unwrap();
    assert_eq!(*r.support(), sup);
    assert!((r.estimate.values() - &x).abs().max() < 1e-8);
}

#[test]
fn lopt_recovers_planted_signals_under_eq7() {
    let sup = SupportSet::new([0, 5], 40).unwrap();
    let e = (0..200)
        .map(|seed| generate_gaussian_ensemble(20, 40, 4, true, seed).unwrap())
        .find(|e| evaluate_worst_case(e, &sup).unwrap().eq7_holds)
        .expect("some seed satisfies the condition");
    let (x, obs) = planted(&e, &sup, 5);
    let r = lopt_solve(&e, &obs, &SolverConfig::default()).unwrap();
    assert!(r.converged);
    assert!((&r.estimate - &x).norm() <= 1e-6 * x.norm());
}

#[test]
fn popt_approaches_lopt_as_gamma_shrinks() {
    let e = generate_gaussian_ensemble(10, 20, 3, true, 8).unwrap();
    let sup = SupportSet::new([3, 11], 20).unwrap();
    let (_, obs) = planted(&e, &sup, 12);
    let lopt = lopt_solve(&e, &obs, &SolverConfig::default()).unwrap().estimate;
    let dist: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&g| (popt_solve(&e, &obs, &SolverConfig::with_gamma(g)).unwrap().estimate - &lopt).norm())
        .collect();
    assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
}

#[test]
fn popt_kkt_small_with_noise() {
    let e = generate_gaussian_ensemble(8, 16, 2, false, 31).unwrap();
    let sup = SupportSet::new([0, 13], 16).unwrap();
    let x = sample_signals(&sup, 2, SignalDistribution::gaussian(), 4).unwrap();
    let obs = synthesize_observations(&e, &x, NoiseSpec { epsilon: 0.01 }, 6).unwrap();
    let r = popt_solve(&e, &obs, &SolverConfig::with_gamma(0.05)).unwrap();
    assert!(r.converged);
    assert!(r.kkt_residual <= 1e-6);
}

#[test]
fn average_condition_is_permutation_equivariant() {
    let base = gaussian_matrix(6, 12, true, 3).unwrap();
    let perm: Vec<usize> = vec![5, 0, 11, 2, 7, 1, 9, 3, 10, 4, 8, 6];
    let permuted = permute_columns(&base, &perm);
    // column j of `permuted` is column perm[j] of `base`
    let sup_base = SupportSet::new([0, 2], 12).unwrap();
    let pos = |l: usize| perm.iter().position(|&p| p == l).unwrap();
    let sup_perm = SupportSet::new([pos(0), pos(2)], 12).unwrap();
    let a = evaluate_average_condition(&MeasurementEnsemble::new(vec![base]).unwrap(), &sup_base).unwrap();
    let b = evaluate_average_condition(&MeasurementEnsemble::new(vec![permuted]).unwrap(), &sup_perm).unwrap();
    assert!((a.alpha - b.alpha).abs() < 1e-12);
    assert!((a.gamma_col - b.gamma_col).abs() < 1e-12);
}

#[test]
fn compare_single_matrix_fractions_agree() {
    let base = gaussian_matrix(8, 16, true, 303).unwrap();
    let r = compare_mmv_gmmv(&base, 1, 2, 300, 1).unwrap();
    let mmv = wilson_interval((r.mmv_alpha_fraction * 300.0).round() as usize, 300, Z_95);
    let perm = wilson_interval((r.permuted_alpha_fraction * 300.0).round() as usize, 300, Z_95);
    assert!(mmv.0 <= perm.1 && perm.0 <= mmv.1, "{r:?}");
}

#[test]
fn compare_orthonormal_base_always_satisfies() {
    let r = compare_mmv_gmmv(&DMatrix::identity(6, 6), 4, 2, 40, 2).unwrap();
    assert_eq!(r.mmv_alpha_fraction, 1.0);
    assert_eq!(r.permuted_alpha_fraction, 1.0);
    assert_eq!(r.mmv_momp_recovery, 1.0);
    assert_eq!(r.permuted_lopt_recovery, 1.0);
}
