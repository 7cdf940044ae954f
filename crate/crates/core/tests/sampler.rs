mod common;

use common::*;
use vmet::normal;
use vmet::reference;
use vmet::sampler::vmet_integrand;
use vmet::tilt::TiltProblem;
use vmet::{
    estimate_multilevel, estimate_mvn_prob, sample_tmvn, CovarianceModel, EstimateOptions, KernelFamily, Locations,
    PreparedProblem, ProblemSpec, ReorderMethod, VecchiaFactor,
};

/// scipy's Genz integrator (abseps = releps = 1e-10) on the five-point
/// Matérn-1.5 box below.
const N5_BOX_PROBABILITY: f64 = 0.1967384266;

fn identity(n: usize) -> CovarianceModel {
    let mut m = vec![0.0; n * n];
    (0..n).for_each(|i| m[i * n + i] = 1.0);
    CovarianceModel::dense(n, m).unwrap()
}

fn n5_model() -> CovarianceModel {
    let locs = Locations::from_rows(&[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1], [0.05, 0.2]]).unwrap();
    CovarianceModel::matern(KernelFamily::Matern15, 1.0, 0.1, 0.01, locs).unwrap()
}

fn within(est: f64, truth: f64, se: f64, k: f64) -> bool {
    (est - truth).abs() <= k * se
}

#[test]
fn identity_orthant_integrand_at_midpoint() {
    let n = 7;
    let f = VecchiaFactor::build(&identity(n), 3).unwrap();
    let (a, b) = (vec![-INF; n], vec![0.0; n]);
    let p = TiltProblem::new(&f, &a, &b).unwrap();
    let mut x = vec![0.0; n];
    let lh = vmet_integrand(&p, &vec![0.0; n], &vec![0.5; n], &mut x);
    assert!((lh.0 - n as f64 * 0.5f64.ln()).abs() < 1e-13);
    let q = normal::quantile(0.25);
    assert!(x.iter().all(|v| (v - q).abs() < 1e-14));
}

#[test]
fn remote_interval_keeps_its_log_weight() {
    // Φ(41) − Φ(40) underflows on the linear scale but not in logs.
    let f = VecchiaFactor::build(&identity(2), 1).unwrap();
    let p = TiltProblem::new(&f, &[40.0, -1.0], &[41.0, 1.0]).unwrap();
    let mut x = vec![0.0; 2];
    let lh = vmet_integrand(&p, &[0.0, 0.0], &[0.5, 0.5], &mut x);
    let want = normal::log_interval(40.0, 41.0) + normal::log_interval(-1.0, 1.0);
    assert!(want < -800.0);
    assert!((lh.0 - want).abs() < 1e-12 * want.abs());
    assert!(x[0] > 40.0 && x[0] < 41.0 && x[1].abs() < 1e-15);
}

#[test]
fn fixed_coordinates_consume_no_uniforms() {
    let inst = random_instance(5, 6);
    let f = factor(&inst, 4);
    let (mut a, mut b) = (inst.a.clone(), inst.b.clone());
    a[1] = 0.3;
    b[1] = 0.3;
    let p = TiltProblem::new(&f, &a, &b).unwrap();
    assert_eq!(p.n_free(), 4);
    let mut x = vec![0.0; 5];
    let lh = vmet_integrand(&p, &[0.0; 5], &[0.2, 0.4, 0.6, 0.8], &mut x);
    assert!(lh.0.is_finite());
    assert_eq!(x[1], 0.3);
}

#[test]
fn identity_orthant_qmc_is_exact() {
    let spec = ProblemSpec::new(identity(10), vec![-INF; 10], vec![0.0; 10]).unwrap();
    let opts = EstimateOptions { qmc: true, ..Default::default() };
    let est = estimate_mvn_prob(&spec, 5, 10_000, &opts).unwrap();
    let truth = 2f64.powi(-10);
    assert!(((est.estimate - truth) / truth).abs() < 5e-3, "{}", est.estimate);
}

#[test]
fn five_point_box_matches_oracle() {
    let model = n5_model();
    let spec = ProblemSpec::new(model.clone(), vec![-1.0; 5], vec![1.0; 5]).unwrap();
    let est = estimate_mvn_prob(&spec, 4, 100_000, &EstimateOptions { seed: 3, ..Default::default() }).unwrap();
    assert!(within(est.estimate, N5_BOX_PROBABILITY, est.std_error, 3.0), "{} ± {}", est.estimate, est.std_error);
    // second route: plain dense separation of variables
    let dense =
        reference::dense_sov_estimate(&model.dense_matrix(), 5, &[-1.0; 5], &[1.0; 5], 1_000_000, 4).unwrap();
    assert!(within(dense.estimate, N5_BOX_PROBABILITY, dense.std_error, 3.0), "{} ± {}", dense.estimate, dense.std_error);
}

#[test]
fn unbiased_for_the_vecchia_probability() {
    for (seed, m) in [(1u64, 1usize), (2, 2), (3, 3)] {
        let inst = random_instance(6, seed);
        let spec = ProblemSpec::new(inst.model.clone(), inst.a.clone(), inst.b.clone()).unwrap();
        let opts = EstimateOptions { reorder: ReorderMethod::None, seed, ..Default::default() };
        let prepared = PreparedProblem::new(&spec, m, &opts).unwrap();
        let est = prepared.estimate(1_000_000, seed, false, 0).unwrap();
        let sv = reference::materialize_sigma_v(prepared.factor()).unwrap();
        let oracle = reference::dense_sov_estimate(&sv, 6, &inst.a, &inst.b, 1_000_000, seed + 50).unwrap();
        let se = est.std_error.hypot(oracle.std_error);
        assert!(within(est.estimate, oracle.estimate, se, 3.0), "m={m}: {} vs {} (se {se:e})", est.estimate, oracle.estimate);
    }
}

#[test]
fn tilt_does_not_change_the_expectation() {
    let inst = random_instance(8, 14);
    let spec = ProblemSpec::new(inst.model.clone(), inst.a.clone(), inst.b.clone()).unwrap();
    let tilted = PreparedProblem::new(&spec, 3, &EstimateOptions::default()).unwrap();
    let plain = PreparedProblem::new(&spec, 3, &EstimateOptions { tilt: false, ..Default::default() }).unwrap();
    assert!(tilted.tilt().gamma.iter().any(|g| *g != 0.0));
    let e1 = tilted.estimate(200_000, 1, false, 0).unwrap();
    let e0 = plain.estimate(200_000, 2, false, 0).unwrap();
    let (lo1, hi1) = (e1.estimate - 3.0 * e1.std_error, e1.estimate + 3.0 * e1.std_error);
    let (lo0, hi0) = (e0.estimate - 3.0 * e0.std_error, e0.estimate + 3.0 * e0.std_error);
    assert!(lo1 <= hi0 && lo0 <= hi1, "[{lo1}, {hi1}] vs [{lo0}, {hi0}]");
}

#[test]
fn tail_probability_survives_underflow() {
    // Φ(−40)^30 is far below the smallest double.
    let n = 30;
    let spec = ProblemSpec::new(identity(n), vec![-INF; n], vec![-40.0; n]).unwrap();
    let est = estimate_mvn_prob(&spec, 2, 100, &EstimateOptions::default()).unwrap();
    let want = n as f64 * normal::log_cdf(-40.0);
    assert!(want < -20_000.0);
    assert!((est.log_estimate - want).abs() < 1e-9 * want.abs());
    assert_eq!(est.estimate, 0.0);
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let inst = random_instance(40, 9);
    let spec = ProblemSpec::new(inst.model.clone(), inst.a.clone(), inst.b.clone()).unwrap();
    let run = |threads: usize, qmc: bool| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| estimate_mvn_prob(&spec, 5, 3000, &EstimateOptions { qmc, seed: 4, ..Default::default() }).unwrap())
    };
    for qmc in [false, true] {
        let (a, b) = (run(1, qmc), run(3, qmc));
        assert_eq!(a.log_estimate.to_bits(), b.log_estimate.to_bits());
        assert_eq!(a.log_std_error.to_bits(), b.log_std_error.to_bits());
    }
    let samp = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sample_tmvn(&spec, 5, 50, 1_000_000, &EstimateOptions::default()).unwrap())
    };
    let (s1, s3) = (samp(1), samp(3));
    assert_eq!(s1.samples, s3.samples);
    assert_eq!(s1.attempts, s3.attempts);
}

#[test]
fn too_few_samples_is_an_error() {
    let spec = ProblemSpec::new(identity(2), vec![-INF; 2], vec![0.0; 2]).unwrap();
    assert!(estimate_mvn_prob(&spec, 1, 1, &EstimateOptions::default()).is_err());
}

#[test]
fn univariate_sampling_is_exact() {
    let spec = ProblemSpec::new(identity(1), vec![-INF], vec![0.0]).unwrap();
    let batch = sample_tmvn(&spec, 1, 20_000, 1_000_000, &EstimateOptions { seed: 8, ..Default::default() }).unwrap();
    assert_eq!(batch.len(), 20_000);
    assert!(batch.acceptance_rate > 0.999);
    let xs: Vec<f64> = batch.samples.iter().map(|r| r[0]).collect();
    assert!(xs.iter().all(|&x| x <= 0.0));
    let (d, p) = ks_test(xs, |x| 2.0 * normal::cdf(x));
    assert!(p > 0.01, "KS D = {d}, p = {p}");
}

#[test]
fn proposals_are_dominated_by_psi_max() {
    for seed in 0..6 {
        let inst = random_instance(12, 300 + seed);
        let spec = ProblemSpec::new(inst.model.clone(), inst.a.clone(), inst.b.clone()).unwrap();
        let prepared = PreparedProblem::new(&spec, 4, &EstimateOptions::default()).unwrap();
        assert!(prepared.tilt().converged);
        let batch = prepared.sample(200, 200_000, seed).unwrap();
        assert!(batch.max_log_ratio <= 1e-9, "seed {seed}: {}", batch.max_log_ratio);
        let lw = prepared.log_weights(20_000, seed);
        assert!(lw.iter().all(|&l| l <= prepared.tilt().psi_max + 1e-9));
        for x in &batch.samples {
            assert!(x.iter().zip(&inst.a).zip(&inst.b).all(|((x, a), b)| x >= a && x <= b));
        }
        assert!((batch.acceptance_rate - batch.len() as f64 / batch.attempts as f64).abs() < 1e-15);
    }
}

#[test]
fn empty_batch_when_attempts_run_out() {
    let spec = ProblemSpec::new(n5_model(), vec![-INF; 5], vec![-2.5; 5]).unwrap();
    let batch = sample_tmvn(&spec, 4, 10, 0, &EstimateOptions::default()).unwrap();
    assert!(batch.is_empty());
    assert_eq!(batch.acceptance_rate, 0.0);
}

#[test]
fn three_variable_moments_match_rejection_oracle() {
    let sigma = vec![1.0, 0.6, 0.3, 0.6, 1.5, -0.4, 0.3, -0.4, 0.8];
    let (a, b) = (vec![-0.5, -INF, -1.0], vec![1.5, 0.5, 0.2]);
    let spec = ProblemSpec::new(CovarianceModel::dense(3, sigma.clone()).unwrap(), a.clone(), b.clone()).unwrap();
    let k = 40_000;
    let ours = sample_tmvn(&spec, 2, k, 10_000_000, &EstimateOptions { seed: 21, ..Default::default() }).unwrap();
    let oracle = reference::dense_rejection_sample(&sigma, 3, &a, &b, k, 10_000_000, 22).unwrap();
    assert_eq!((ours.len(), oracle.len()), (k, k));
    let (m1, c1) = moments(&ours.samples);
    let (m2, c2) = moments(&oracle.samples);
    let (sm1, sc1) = moment_ses(&ours.samples, &m1, &c1);
    let (sm2, sc2) = moment_ses(&oracle.samples, &m2, &c2);
    for i in 0..3 {
        assert!(within(m1[i], m2[i], sm1[i].hypot(sm2[i]), 3.0), "mean {i}");
    }
    for e in 0..9 {
        assert!(within(c1[e], c2[e], sc1[e].hypot(sc2[e]), 3.0), "cov {e}");
    }
}

#[test]
fn multilevel_equal_levels_has_zero_correction() {
    let inst = random_instance(20, 31);
    let spec = ProblemSpec::new(inst.model.clone(), inst.a.clone(), inst.b.clone()).unwrap();
    let opts = EstimateOptions::default();
    let ml = estimate_multilevel(&spec, 4, 4, 2000, 200, &opts).unwrap();
    assert_eq!(ml.bias_correction, Some(0.0));
    let plain = estimate_mvn_prob(&spec, 4, 2000, &opts).unwrap();
    assert!((ml.log_estimate - plain.log_estimate).abs() < 1e-12);
}

#[test]
fn multilevel_identity_has_zero_correction() {
    let spec = ProblemSpec::new(identity(12), vec![-1.0; 12], vec![0.7; 12]).unwrap();
    let ml = estimate_multilevel(&spec, 2, 6, 1000, 100, &EstimateOptions::default()).unwrap();
    assert!(ml.bias_correction.unwrap().abs() < 1e-15);
}

#[test]
fn multilevel_rejects_bad_levels() {
    let spec = ProblemSpec::new(identity(3), vec![-1.0; 3], vec![1.0; 3]).unwrap();
    let opts = EstimateOptions::default();
    assert!(estimate_multilevel(&spec, 3, 2, 100, 10, &opts).is_err());
    assert!(estimate_multilevel(&spec, 1, 2, 10, 100, &opts).is_err());
}
