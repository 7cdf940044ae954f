#![allow(dead_code)]

use rand::Rng;
use vmet::rng::{self, Stream};
use vmet::{CovarianceModel, KernelFamily, Locations, VecchiaFactor};

pub const INF: f64 = f64::INFINITY;

/// Random Matérn instance on [0,1]² with mixed one- and two-sided limits.
pub struct Instance {
    pub model: CovarianceModel,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn random_instance(n: usize, seed: u64) -> Instance {
    let mut r = rng::stream_rng(seed, Stream::Data, 100);
    let coords: Vec<f64> = (0..2 * n).map(|_| r.random::<f64>()).collect();
    let family = [KernelFamily::Matern05, KernelFamily::Matern15, KernelFamily::Matern25][r.random_range(0..3)];
    let variance = r.random_range(0.5..2.0);
    let range = r.random_range(0.05..0.4);
    let nugget = r.random_range(0.01..0.1);
    let model = CovarianceModel::matern(family, variance, range, nugget, Locations::new(2, coords).unwrap()).unwrap();
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let lo = r.random_range(-1.5..0.5);
        let width = r.random_range(0.3..2.0);
        match r.random_range(0..3) {
            0 => {
                a.push(-INF);
                b.push(lo + width);
            }
            1 => {
                a.push(lo);
                b.push(INF);
            }
            _ => {
                a.push(lo);
                b.push(lo + width);
            }
        }
    }
    Instance { model, a, b }
}

/// A point strictly inside the box and a moderate random tilt.
pub fn random_state(inst: &Instance, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::stream_rng(seed, Stream::Data, 200);
    let x = inst
        .a
        .iter()
        .zip(&inst.b)
        .map(|(&a, &b)| {
            let u: f64 = r.random_range(0.1..0.9);
            match (a.is_finite(), b.is_finite()) {
                (true, true) => a + u * (b - a),
                (true, false) => a + 2.0 * u,
                (false, true) => b - 2.0 * u,
                _ => 0.0,
            }
        })
        .collect();
    let gamma = (0..inst.a.len()).map(|_| r.random_range(-0.8..0.8)).collect();
    (x, gamma)
}

pub fn factor(inst: &Instance, m: usize) -> VecchiaFactor {
    VecchiaFactor::build(&inst.model, m).unwrap()
}

/// ‖a − b‖_∞ / max(‖b‖_∞, floor).
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(floor);
    num / den
}

/// Central difference with one Richardson step: (4 D(h/2) − D(h)) / 3.
pub fn richardson<F: FnMut(f64) -> Vec<f64>>(mut f: F, h: f64) -> Vec<f64> {
    let central = |f: &mut F, h: f64| -> Vec<f64> {
        let (p, m) = (f(h), f(-h));
        p.iter().zip(&m).map(|(p, m)| (p - m) / (2.0 * h)).collect()
    };
    let d1 = central(&mut f, h);
    let d2 = central(&mut f, h / 2.0);
    d1.iter().zip(&d2).map(|(d1, d2)| (4.0 * d2 - d1) / 3.0).collect()
}

/// Row-major matrix-vector product.
pub fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..m.len() / n).map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum()).collect()
}

/// One-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_test(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0f64, |m, (i, &x)| {
        let f = cdf(x);
        m.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    (d, kolmogorov_sf((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d))
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> (f64, f64) {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    (d, kolmogorov_sf((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d))
}

/// P(K > λ) for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let t = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += t;
        if t.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Column means and covariance (row-major) of a sample.
pub fn moments(xs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let (k, n) = (xs.len() as f64, xs[0].len());
    let mean: Vec<f64> = (0..n).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / k).collect();
    let mut cov = vec![0.0; n * n];
    for x in xs {
        for i in 0..n {
            for j in 0..n {
                cov[i * n + j] += (x[i] - mean[i]) * (x[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= k - 1.0);
    (mean, cov)
}

/// Standard errors of the column means and of each covariance entry, the latter
/// from the empirical spread of the centered products.
pub fn moment_ses(xs: &[Vec<f64>], mean: &[f64], cov: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (k, n) = (xs.len() as f64, mean.len());
    let mse = (0..n).map(|i| (cov[i * n + i] / k).sqrt()).collect();
    let mut var = vec![0.0; n * n];
    for x in xs {
        for i in 0..n {
            for j in 0..n {
                let d = (x[i] - mean[i]) * (x[j] - mean[j]) - cov[i * n + j];
                var[i * n + j] += d * d;
            }
        }
    }
    let cse = var.iter().map(|v| (v / (k - 1.0) / k).sqrt()).collect();
    (mse, cse)
}
