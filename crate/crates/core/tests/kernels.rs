mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vmet::{io, reference, CovarianceModel, KernelFamily, Locations};

const FAMILIES: [KernelFamily; 3] = [KernelFamily::Matern05, KernelFamily::Matern15, KernelFamily::Matern25];

fn random_locations(n: usize, d: usize, seed: u64) -> Locations {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Locations::new(d, (0..n * d).map(|_| r.random::<f64>()).collect()).unwrap()
}

#[test]
fn matern_matrices_factor_up_to_200() {
    for (k, fam) in FAMILIES.into_iter().enumerate() {
        for (n, d) in [(10, 1), (80, 2), (200, 2), (150, 3)] {
            let model = CovarianceModel::matern(fam, 1.3, 0.2, 0.01, random_locations(n, d, k as u64 + n as u64)).unwrap();
            let s = model.dense_matrix();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(s[i * n + j], s[j * n + i]);
                }
            }
            assert!(reference::dense_cholesky(&s, n).is_ok(), "{fam:?} n = {n} d = {d}");
        }
    }
}

#[test]
fn anisotropic_model_is_positive_definite() {
    let locs = random_locations(120, 3, 4);
    let model = CovarianceModel::matern(KernelFamily::Matern15, 2.0, 0.1, 0.05, locs)
        .unwrap()
        .with_anisotropy(vec![0, 0, 1], vec![0.1, 0.5])
        .unwrap();
    assert!(reference::dense_cholesky(&model.dense_matrix(), 120).is_ok());
}

#[test]
fn csv_locations_feed_the_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("locs.csv");
    std::fs::write(&path, "x1,x2\n0,0\n0.1,0\n0,0.3\n").unwrap();
    let locs = io::read_locations_csv(&path).unwrap();
    let model = CovarianceModel::matern(KernelFamily::Matern05, 1.0, 0.1, 0.0, locs).unwrap();
    assert!((model.cov(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
    assert!((model.cov(0, 2) - (-3.0f64).exp()).abs() < 1e-15);
    assert_eq!(model.cov(2, 2), 1.0);
}

#[test]
fn csv_matrix_builds_a_dense_model() {
    let (n, m) = io::read_matrix("2,0.5,0\n0.5,1,0.2\n0,0.2,1\n".as_bytes()).unwrap();
    let model = CovarianceModel::dense(n, m).unwrap();
    assert_eq!(model.cov(1, 0), 0.5);
    assert_eq!(model.cov(0, 0), 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn correlation_decreases_with_distance(fam in 0usize..3, range in 0.01f64..2.0, d1 in 0.0f64..3.0, d2 in 0.0f64..3.0) {
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let locs = Locations::new(1, vec![0.0, near, far]).unwrap();
        let model = CovarianceModel::matern(FAMILIES[fam], 1.0, range, 0.0, locs).unwrap();
        let (cn, cf) = (model.cov(0, 1), model.cov(0, 2));
        prop_assert!(cf <= cn + 1e-15);
        prop_assert!(cn <= 1.0 && cf >= 0.0);
    }

    #[test]
    fn small_random_models_are_pd(fam in 0usize..3, n in 1usize..40, seed in 0u64..10_000, range in 0.02f64..0.5) {
        let model = CovarianceModel::matern(FAMILIES[fam], 1.0, range, 1e-4, random_locations(n, 2, seed)).unwrap();
        prop_assert!(reference::dense_cholesky(&model.dense_matrix(), n).is_ok());
    }
}
