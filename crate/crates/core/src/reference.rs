//! Dense brute-force oracles: exact Cholesky, separation of variables with the
//! full factor, explicit dense conditional moments, naive rejection sampling
//! and the explicit Vecchia-implied covariance. Matrices are row-major.
//!
//! Everything here is O(n²)–O(n³) and single-threaded; intended for tests and
//! for regenerating reference values, not for production use.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::{log_moments, ProbabilityEstimate, SampleBatch};
use crate::normal;
use crate::rng::{self, Stream};
use crate::sampler::BATCH;
use crate::vecchia::VecchiaFactor;

const CHOLESKY_MAX_N: usize = 4096;
const SIGMA_V_MAX_N: usize = 2048;

fn square(sigma: &[f64], n: usize) -> Result<DMatrix<f64>> {
    if sigma.len() != n * n {
        return Err(Error::param(format!("expected {} entries, got {}", n * n, sigma.len())));
    }
    Ok(DMatrix::from_row_slice(n, n, sigma))
}

fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Lower Cholesky factor L with L Lᵀ = Σ.
pub fn dense_cholesky(sigma: &[f64], n: usize) -> Result<Vec<f64>> {
    if n > CHOLESKY_MAX_N {
        return Err(Error::param(format!("dense Cholesky limited to n ≤ {CHOLESKY_MAX_N}")));
    }
    let chol = square(sigma, n)?
        .cholesky()
        .ok_or_else(|| Error::Factorization { index: 0, reason: "matrix is not positive definite".into() })?;
    Ok(to_row_major(&chol.l()))
}

/// Conditional moments of x ~ N(0, Σ) along the natural order:
/// E[x_i | x_{<i}] = Σ_j A_ij x_j and sd(x_i | x_{<i}) = l_i, via A = I − diag(L) L⁻¹.
pub fn dense_conditional_moments(sigma: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = DMatrix::from_row_slice(n, n, &dense_cholesky(sigma, n)?);
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            a[(i, j)] = -l[(i, i)] * linv[(i, j)];
        }
    }
    Ok((to_row_major(&a), (0..n).map(|i| l[(i, i)]).collect()))
}

/// One separation-of-variables path with exact factor L (row-major) and tilt γ,
/// parameterized in y = L⁻¹x. Returns (ln h, x).
pub fn dense_met_integrand(l: &[f64], a: &[f64], b: &[f64], gamma: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
    let n = a.len();
    let mut y = vec![0.0; n];
    let log_h = dense_log_h(l, a, b, gamma, w, &mut y);
    let x = (0..n).map(|i| dot(&l[i * n..i * n + i + 1], &y[..=i])).collect();
    (log_h, x)
}

/// ln h only, filling `y` as scratch.
fn dense_log_h(l: &[f64], a: &[f64], b: &[f64], gamma: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
    let n = a.len();
    let mut log_h = 0.0;
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &y[..i]);
        let d = l[i * n + i];
        let g = gamma[i];
        let (ta, tb) = ((a[i] - s) / d - g, (b[i] - s) / d - g);
        let lp = normal::log_interval(ta, tb);
        y[i] = normal::truncated_inverse(ta, tb, lp, w[i]) + g;
        log_h += lp + 0.5 * g * g - g * y[i];
    }
    log_h
}

/// Dot product with four independent accumulators so long rows pipeline.
fn dot(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (uc, vc) = (u.chunks_exact(4), v.chunks_exact(4));
    let tail: f64 = uc.remainder().iter().zip(vc.remainder()).map(|(p, q)| p * q).sum();
    for (p, q) in uc.zip(vc) {
        for k in 0..4 {
            acc[k] += p[k] * q[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Dense ψ(y; γ) = Σ_i ln(Φ(b̂_i − γ_i) − Φ(â_i − γ_i)) + γ_i²/2 − γ_i y_i, with
/// â_i = (a_i − Σ_{j<i} L_ij y_j)/L_ii, and its gradient (∂ψ/∂y, ∂ψ/∂γ).
pub fn dense_met_psi(l: &[f64], a: &[f64], b: &[f64], y: &[f64], gamma: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut psi = 0.0;
    let mut gy = vec![0.0; n];
    let mut gg = vec![0.0; n];
    let mut big = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|j| l[i * n + j] * y[j]).sum();
        let d = l[i * n + i];
        let g = gamma[i];
        let (ta, tb) = ((a[i] - s) / d - g, (b[i] - s) / d - g);
        let lp = normal::log_interval(ta, tb);
        psi += lp + 0.5 * g * g - g * y[i];
        let pa = if ta.is_finite() { (normal::log_pdf(ta) - lp).exp() } else { 0.0 };
        let pb = if tb.is_finite() { (normal::log_pdf(tb) - lp).exp() } else { 0.0 };
        big[i] = pa - pb;
        gg[i] = g - y[i] + big[i];
    }
    for j in 0..n {
        gy[j] = -gamma[j] + (j + 1..n).map(|i| big[i] * l[i * n + j] / l[i * n + i]).sum::<f64>();
    }
    (psi, gy, gg)
}

/// Genz separation of variables with the exact Cholesky factor and
/// pseudo-random uniforms.
pub fn dense_sov_estimate(
    sigma: &[f64],
    n: usize,
    a: &[f64],
    b: &[f64],
    count: usize,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    if a.len() != n || b.len() != n {
        return Err(Error::param("limit lengths do not match the covariance dimension"));
    }
    if count < 2 {
        return Err(Error::param("need at least two samples"));
    }
    let start = std::time::Instant::now();
    let l = dense_cholesky(sigma, n)?;
    let zero = vec![0.0; n];
    let batches = count.div_ceil(BATCH);
    let per: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|bi| {
            let mut r = rng::stream_rng(seed, Stream::W, bi as u64);
            let size = BATCH.min(count - bi * BATCH);
            let (mut w, mut y) = (vec![0.0; n], vec![0.0; n]);
            (0..size)
                .map(|_| {
                    w.iter_mut().for_each(|v| *v = rng::open01(&mut r));
                    dense_log_h(&l, a, b, &zero, &w, &mut y)
                })
                .collect()
        })
        .collect();
    let lw = per.concat();
    let mom = log_moments(&lw);
    let mut est = ProbabilityEstimate::from_log(mom.log_mean, mom.log_se, count, n.saturating_sub(1), mom.ess);
    est.elapsed_sec = start.elapsed().as_secs_f64();
    Ok(est)
}

/// Draw x = L z with standard normal z and keep draws inside [a, b].
pub fn dense_rejection_sample(
    sigma: &[f64],
    n: usize,
    a: &[f64],
    b: &[f64],
    k: usize,
    max_attempts: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let l = dense_cholesky(sigma, n)?;
    let mut r = rng::stream_rng(seed, Stream::W, 0);
    let mut samples = Vec::new();
    let mut attempts = 0;
    let mut z = vec![0.0; n];
    while samples.len() < k && attempts < max_attempts {
        attempts += 1;
        z.iter_mut().for_each(|v| *v = rng::std_normal(&mut r));
        let x: Vec<f64> = (0..n).map(|i| (0..=i).map(|j| l[i * n + j] * z[j]).sum()).collect();
        if x.iter().zip(a).zip(b).all(|((x, a), b)| x >= a && x <= b) {
            samples.push(x);
        }
    }
    let rate = if attempts > 0 { samples.len() as f64 / attempts as f64 } else { 0.0 };
    Ok(SampleBatch { samples, attempts, acceptance_rate: rate, max_log_ratio: f64::NEG_INFINITY })
}

/// Σ_V = (V Vᵀ)⁻¹ = V⁻ᵀ V⁻¹ formed explicitly.
pub fn materialize_sigma_v(factor: &VecchiaFactor) -> Result<Vec<f64>> {
    let n = factor.n();
    if n > SIGMA_V_MAX_N {
        return Err(Error::param(format!("explicit Σ_V limited to n ≤ {SIGMA_V_MAX_N}")));
    }
    let mut v = DMatrix::zeros(n, n);
    for i in 0..n {
        let (rows, vals) = factor.v_column(i);
        for (r, val) in rows.iter().zip(vals) {
            v[(*r, i)] = *val;
        }
    }
    let vinv = v
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("V is singular".into()))?;
    Ok(to_row_major(&(vinv.transpose() * vinv)))
}
