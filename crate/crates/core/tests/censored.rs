use vmet::censored::{self, FitOptions, Likelihood, ParamBounds, Region};
use vmet::{scenarios, CensoredDataset, CovarianceModel, EstimateOptions, KernelFamily, KernelParams, Locations};

/// Scipy: dense Gaussian log-density of the three observed values plus the log
/// of the conditional orthant probability (Genz, abseps 1e-12) of the rest.
const N6_LOGLIK: f64 = -5.2127886851069185;

fn six_point() -> (CensoredDataset, CovarianceModel) {
    let locs = Locations::from_rows(&[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1], [0.05, 0.2], [0.2, 0.05]]).unwrap();
    let model = CovarianceModel::matern(KernelFamily::Matern15, 1.0, 0.1, 0.01, locs.clone()).unwrap();
    let values = vec![0.4, f64::NAN, 1.1, f64::NAN, -0.2, f64::NAN];
    let thresholds = vec![0.0, 0.3, -0.5, 0.1, -0.6, -0.2];
    (CensoredDataset::new(locs, values, thresholds).unwrap(), model)
}

fn small_field(n: usize, seed: u64) -> (censored::SyntheticCensored, CovarianceModel) {
    let model = scenarios::scenario_model(scenarios::grid_locations(n)).unwrap();
    (censored::simulate_censored(&model, vec![0.0; n], seed).unwrap(), model)
}

#[test]
fn six_point_likelihood_matches_dense_oracle() {
    let (data, model) = six_point();
    let got = censored::censored_loglik(&data, &model, 5, 100_000, 1).unwrap();
    assert!((got - N6_LOGLIK).abs() < 5e-3, "{got} vs {N6_LOGLIK}");
}

#[test]
fn likelihood_is_smooth_along_a_range_ray() {
    let (syn, model) = small_field(100, 3);
    let opts = FitOptions { m: 10, n_samples: 2000, seed: 4, ..Default::default() };
    let betas: Vec<f64> = (0..21).map(|k| 0.08 + 0.002 * k as f64).collect();
    let ll = censored::profile_range(&syn.data, &model, 0, &betas, Likelihood::Censored, &opts).unwrap();
    // fixed seed, ordering and neighbor sets: second differences stay at the curvature scale
    let worst = ll.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).fold(0.0, f64::max);
    let span = ll.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    assert!(worst < 0.3 * span, "second difference {worst} vs step {span}");
}

#[test]
fn buffer_covering_the_domain_reproduces_global_sampling() {
    let (syn, model) = small_field(64, 8);
    let opts = EstimateOptions { seed: 2, ..Default::default() };
    let region = Region::new(vec![0.4, 0.4], vec![0.6, 0.6]).unwrap();
    let reg = censored::regional_sample(&syn.data, &model, &region, Some(1.0), 10, 50, 10_000_000, &opts).unwrap();
    let glob = censored::global_sample(&syn.data, &model, 10, 50, 10_000_000, &opts).unwrap();
    assert_eq!(reg.indices, glob.indices);
    assert_eq!(reg.batch.samples, glob.batch.samples);
}

#[test]
fn imputed_draws_respect_thresholds() {
    let (syn, model) = small_field(100, 5);
    let region = Region::new(vec![0.0, 0.5], vec![0.5, 1.0]).unwrap();
    let s = censored::regional_sample(&syn.data, &model, &region, None, 10, 100, 10_000_000, &EstimateOptions::default())
        .unwrap();
    assert_eq!(s.batch.samples.len(), 100);
    for row in &s.batch.samples {
        for (v, &i) in row.iter().zip(&s.indices) {
            assert!(*v <= syn.data.thresholds()[i]);
        }
    }
    let grown = region.with_default_buffer();
    assert!(s.indices.iter().all(|&i| grown.contains(syn.data.locations().row(i))));
}

#[test]
fn kriging_from_imputed_draws_beats_lod_at_censored_sites() {
    let (syn, model) = small_field(225, 11);
    let data = &syn.data;
    let region = Region::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let s = censored::regional_sample(data, &model, &region, Some(0.0), 15, 200, 100_000_000, &EstimateOptions::default())
        .unwrap();
    let test = data.locations().select(&s.indices);
    let ours = censored::krige_predict(data, &s, &model, &test, 15).unwrap();
    let lod = censored::krige_lod(data, &model, &test, 15).unwrap();
    let rmse = |p: &[f64]| {
        (p.iter().zip(&s.indices).map(|(v, &i)| (v - syn.truth[i]).powi(2)).sum::<f64>() / p.len() as f64).sqrt()
    };
    assert!(rmse(&ours.mean) < rmse(&lod.mean), "{} vs {}", rmse(&ours.mean), rmse(&lod.mean));
    assert!(ours.sd.iter().all(|&v| v >= 0.0));
}

#[test]
fn fitting_the_range_improves_the_likelihood() {
    let (syn, model) = small_field(100, 21);
    let init = KernelParams { variance: 1.0, ranges: vec![0.3], nugget: 0.01 };
    let bounds = ParamBounds {
        lower: KernelParams { variance: 1.0, ranges: vec![0.01], nugget: 0.01 },
        upper: KernelParams { variance: 1.0, ranges: vec![1.0], nugget: 0.01 },
    };
    let opts = FitOptions { m: 10, n_samples: 1000, seed: 1, max_evals: 80, ..Default::default() };
    for which in [Likelihood::Censored, Likelihood::Lod] {
        let start = censored::loglik(&syn.data, &init.apply(&model).unwrap(), which, &opts).unwrap();
        let fit = censored::fit_params(&syn.data, &model, &init, &bounds, which, &opts).unwrap();
        assert!(fit.loglik >= start, "{which:?}: {} < {start}", fit.loglik);
        assert!(fit.evaluations <= 80);
        assert_eq!(fit.params.variance, 1.0);
        assert!(fit.params.ranges[0] >= 0.01 && fit.params.ranges[0] <= 1.0);
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn csv_file_round_trip() {
    let (data, _) = six_point();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    std::fs::write(&path, &buf).unwrap();
    let back = CensoredDataset::read_csv_path(&path).unwrap();
    assert_eq!(back.censored_mask(), data.censored_mask());
    assert_eq!(back.thresholds(), data.thresholds());
    assert_eq!(back.observed_indices(), vec![0, 2, 4]);
}
