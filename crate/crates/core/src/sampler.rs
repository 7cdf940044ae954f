//! The VMET integrand, probability estimation and accept-reject TMVN sampling.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::{log_moments, LogWeight, ProbabilityEstimate, SampleBatch};
use crate::normal;
use crate::problem::ProblemSpec;
use crate::qmc::ShiftedSobol;
use crate::reorder::{self, Permutation, ReorderMethod};
use crate::rng::{self, Stream};
use crate::tilt::{self, TiltOptions, TiltProblem, TiltSolution};
use crate::vecchia::VecchiaFactor;

/// Integrand evaluations per RNG stream / parallel work item.
pub const BATCH: usize = 256;

/// One sample of the tilted separation-of-variables integrand.
///
/// `w` has one entry per free (non-fixed) coordinate. The path is written to
/// `x`; the return value is ln h, or −∞ if some interval probability underflows.
pub fn vmet_integrand(problem: &TiltProblem, gamma: &[f64], w: &[f64], x: &mut [f64]) -> LogWeight {
    let factor = problem.factor();
    let (lower, upper, l) = (problem.lower(), problem.upper(), factor.l());
    let mut log_h = 0.0;
    let mut k = 0;
    for i in 0..problem.n() {
        if problem.is_fixed(i) {
            x[i] = lower[i];
            continue;
        }
        let mu = factor.cond_mean(x, i);
        let g = gamma[i];
        let ta = (lower[i] - mu) / l[i] - g;
        let tb = (upper[i] - mu) / l[i] - g;
        let lp = normal::log_interval(ta, tb);
        let y = if lp == f64::NEG_INFINITY {
            log_h = f64::NEG_INFINITY;
            // keep a finite path inside the box
            0.5 * (ta.max(-1e300) + tb.min(1e300)) + g
        } else {
            normal::truncated_inverse(ta, tb, lp, w[k]) + g
        };
        k += 1;
        x[i] = mu + y * l[i];
        log_h += lp + 0.5 * g * g - g * y;
    }
    LogWeight(log_h)
}

#[derive(Clone, Debug)]
pub struct EstimateOptions {
    pub reorder: ReorderMethod,
    pub seed: u64,
    pub qmc: bool,
    /// Independent randomizations used for the QMC standard error.
    pub qmc_shifts: usize,
    /// `false` skips the saddle-point solve (γ = 0), i.e. plain separation of variables.
    pub tilt: bool,
    pub tilt_options: TiltOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            reorder: ReorderMethod::Vecchia,
            seed: 0,
            qmc: false,
            qmc_shifts: 10,
            tilt: true,
            tilt_options: TiltOptions::default(),
        }
    }
}

/// Everything that precedes the Monte Carlo stage: ordering, Vecchia factor
/// and tilt. Reusable across seeds and sample sizes.
#[derive(Clone, Debug)]
pub struct PreparedProblem {
    perm: Permutation,
    mean: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    factor: VecchiaFactor,
    tilt: TiltSolution,
    m: usize,
}

impl PreparedProblem {
    pub fn new(spec: &ProblemSpec, m: usize, options: &EstimateOptions) -> Result<Self> {
        let (a, b) = spec.centered_limits();
        let perm = reorder::reorder(options.reorder, spec.covariance(), &a, &b, m)?;
        Self::with_permutation(spec, m, perm, options)
    }

    /// Skip reordering and use `perm` as the variable order.
    pub fn with_permutation(spec: &ProblemSpec, m: usize, perm: Permutation, options: &EstimateOptions) -> Result<Self> {
        let permuted = spec.permuted(&perm)?;
        let factor = VecchiaFactor::build(permuted.covariance(), m)?;
        Self::from_parts(&permuted, perm, spec.mean().to_vec(), factor, options)
    }

    /// Assemble from an already permuted problem and its factor.
    pub(crate) fn from_parts(
        permuted: &ProblemSpec,
        perm: Permutation,
        mean: Vec<f64>,
        factor: VecchiaFactor,
        options: &EstimateOptions,
    ) -> Result<Self> {
        let (lower, upper) = permuted.centered_limits();
        let problem = TiltProblem::new(&factor, &lower, &upper)?;
        let tilt = if options.tilt {
            tilt::solve_tilting(&problem, &options.tilt_options)?
        } else {
            TiltSolution::zero(&problem)?
        };
        let m = factor.sets().m();
        Ok(PreparedProblem { perm, mean, lower, upper, factor, tilt, m })
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    pub fn factor(&self) -> &VecchiaFactor {
        &self.factor
    }

    pub fn tilt(&self) -> &TiltSolution {
        &self.tilt
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.factor.n()
    }

    pub fn problem(&self) -> TiltProblem<'_> {
        TiltProblem::new(&self.factor, &self.lower, &self.upper).expect("limits validated at construction")
    }

    fn n_free(&self) -> usize {
        self.problem().n_free()
    }

    /// ln h for `count` pseudo-random samples of `stream`, in batch order.
    pub fn log_weights(&self, count: usize, seed: u64) -> Vec<f64> {
        self.log_weights_stream(count, seed, Stream::W, &self.tilt.gamma)
    }

    fn log_weights_stream(&self, count: usize, seed: u64, stream: Stream, gamma: &[f64]) -> Vec<f64> {
        let problem = self.problem();
        let (n, d) = (self.n(), self.n_free());
        let batches = count.div_ceil(BATCH);
        let per: Vec<Vec<f64>> = (0..batches)
            .into_par_iter()
            .map(|bi| {
                let mut r = rng::stream_rng(seed, stream, bi as u64);
                let size = BATCH.min(count - bi * BATCH);
                let (mut w, mut x) = (vec![0.0; d], vec![0.0; n]);
                (0..size)
                    .map(|_| {
                        w.iter_mut().for_each(|v| *v = rng::open01(&mut r));
                        vmet_integrand(&problem, gamma, &w, &mut x).0
                    })
                    .collect()
            })
            .collect();
        per.concat()
    }

    /// ln h at each point of one shifted Sobol set, in order.
    fn log_weights_qmc(&self, count: usize, sobol: &ShiftedSobol) -> Vec<f64> {
        let problem = self.problem();
        let n = self.n();
        let gamma = &self.tilt.gamma;
        let batches = count.div_ceil(BATCH);
        let per: Vec<Vec<f64>> = (0..batches)
            .into_par_iter()
            .map(|bi| {
                let size = BATCH.min(count - bi * BATCH);
                let mut x = vec![0.0; n];
                let mut out = Vec::with_capacity(size);
                sobol.for_each_point((bi * BATCH) as u32, size as u32, |w| {
                    out.push(vmet_integrand(&problem, gamma, w, &mut x).0);
                });
                out
            })
            .collect();
        per.concat()
    }

    /// Monte Carlo (or randomized QMC) estimate with `count` integrand evaluations.
    /// `elapsed_sec` covers this stage only.
    pub fn estimate(&self, count: usize, seed: u64, qmc: bool, qmc_shifts: usize) -> Result<ProbabilityEstimate> {
        if count < 2 {
            return Err(Error::param("need at least two samples"));
        }
        let start = Instant::now();
        let d = self.n_free();
        let sobol_ok = qmc && d <= crate::qmc::MAX_SOBOL_DIM;
        let mut est = if sobol_ok {
            let shifts = qmc_shifts.max(2);
            let per = count.div_ceil(shifts);
            let mut means = Vec::with_capacity(shifts);
            let mut ess = 0.0;
            for s in 0..shifts {
                let sobol = ShiftedSobol::new(d, seed, s as u64).expect("dimension checked");
                let mom = log_moments(&self.log_weights_qmc(per, &sobol));
                means.push(mom.log_mean);
                ess += mom.ess;
            }
            let all = log_moments(&means);
            ProbabilityEstimate::from_log(all.log_mean, all.log_se, per * shifts, self.m, ess)
        } else {
            let mom = log_moments(&self.log_weights(count, seed));
            ProbabilityEstimate::from_log(mom.log_mean, mom.log_se, count, self.m, mom.ess)
        };
        est.elapsed_sec = start.elapsed().as_secs_f64();
        Ok(est)
    }

    /// Accept-reject draws from the Vecchia-approximate TMVN, returned in the
    /// original variable order and on the original (uncentered) scale.
    pub fn sample(&self, target_k: usize, max_attempts: usize, seed: u64) -> Result<SampleBatch> {
        const ROUND: usize = 16;
        let problem = self.problem();
        let (n, d) = (self.n(), self.n_free());
        let (gamma, psi_max) = (&self.tilt.gamma, self.tilt.psi_max);
        let mut samples = Vec::new();
        let mut attempts = 0usize;
        let mut max_ratio = f64::NEG_INFINITY;
        let mut next_batch = 0usize;
        while samples.len() < target_k && attempts < max_attempts {
            let round: Vec<(Vec<(usize, Vec<f64>)>, f64, usize)> = (next_batch..next_batch + ROUND)
                .into_par_iter()
                .map(|bi| {
                    let first = bi * BATCH;
                    let size = BATCH.min(max_attempts.saturating_sub(first));
                    let mut rw = rng::stream_rng(seed, Stream::W, bi as u64);
                    let mut ru = rng::stream_rng(seed, Stream::Acceptance, bi as u64);
                    let (mut w, mut x) = (vec![0.0; d], vec![0.0; n]);
                    let mut acc = Vec::new();
                    let mut worst = f64::NEG_INFINITY;
                    for k in 0..size {
                        w.iter_mut().for_each(|v| *v = rng::open01(&mut rw));
                        let lh = vmet_integrand(&problem, gamma, &w, &mut x).0;
                        worst = worst.max(lh - psi_max);
                        if rng::open01(&mut ru).ln() + psi_max < lh {
                            acc.push((first + k, x.clone()));
                        }
                    }
                    (acc, worst, size)
                })
                .collect();
            next_batch += ROUND;
            for (acc, worst, size) in round {
                if samples.len() >= target_k || size == 0 {
                    break;
                }
                max_ratio = max_ratio.max(worst);
                let mut consumed = size;
                for (pos, x) in acc {
                    samples.push(x);
                    if samples.len() == target_k {
                        consumed = pos % BATCH + 1;
                        break;
                    }
                }
                attempts += consumed;
            }
        }
        let rows = samples
            .into_iter()
            .map(|x| {
                let orig = self.perm.unapply(&x);
                orig.iter().zip(&self.mean).map(|(v, m)| v + m).collect()
            })
            .collect::<Vec<Vec<f64>>>();
        let rate = if attempts > 0 { rows.len() as f64 / attempts as f64 } else { 0.0 };
        Ok(SampleBatch { samples: rows, attempts, acceptance_rate: rate, max_log_ratio: max_ratio })
    }
}

/// Reorder, factor, tilt, then `count` integrand draws.
pub fn estimate_mvn_prob(spec: &ProblemSpec, m: usize, count: usize, options: &EstimateOptions) -> Result<ProbabilityEstimate> {
    let start = Instant::now();
    let prepared = PreparedProblem::new(spec, m, options)?;
    let mut est = prepared.estimate(count, options.seed, options.qmc, options.qmc_shifts)?;
    est.elapsed_sec = start.elapsed().as_secs_f64();
    Ok(est)
}

/// Two-level estimator: mean of `n1` level-m1 samples minus the mean
/// difference between `n2` paired (m1, m2) samples sharing the same w.
pub fn estimate_multilevel(
    spec: &ProblemSpec,
    m1: usize,
    m2: usize,
    n1: usize,
    n2: usize,
    options: &EstimateOptions,
) -> Result<ProbabilityEstimate> {
    if m1 > m2 {
        return Err(Error::param(format!("multilevel needs m1 ≤ m2, got {m1} > {m2}")));
    }
    if n2 > n1 || n2 < 2 {
        return Err(Error::param(format!("multilevel needs 2 ≤ N2 ≤ N1, got N1 = {n1}, N2 = {n2}")));
    }
    let start = Instant::now();
    let coarse = PreparedProblem::new(spec, m1, options)?;
    let fine = PreparedProblem::with_permutation(spec, m2, coarse.perm.clone(), options)?;
    let base = coarse.log_weights(n1, options.seed);
    let pc = coarse.log_weights_stream(n2, options.seed, Stream::Pairs, &coarse.tilt.gamma);
    let pf = fine.log_weights_stream(n2, options.seed, Stream::Pairs, &fine.tilt.gamma);
    let top = base.iter().chain(&pc).chain(&pf).copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        let mut est = ProbabilityEstimate::from_log(f64::NEG_INFINITY, f64::NEG_INFINITY, n1, m1, 0.0);
        est.bias_correction = Some(0.0);
        return Ok(est);
    }
    let scaled = |v: &[f64]| v.iter().map(|x| (x - top).exp()).collect::<Vec<f64>>();
    let (h1, c1, c2) = (scaled(&base), scaled(&pc), scaled(&pf));
    let (mean1, var1) = mean_var(&h1);
    let diffs: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a - b).collect();
    let (eps, var_eps) = mean_var(&diffs);
    let value = mean1 - eps;
    let se = (var1 / n1 as f64 + var_eps / n2 as f64).sqrt();
    let log_value = if value > 0.0 { top + value.ln() } else { f64::NEG_INFINITY };
    let s1: f64 = h1.iter().sum();
    let s2: f64 = h1.iter().map(|h| h * h).sum();
    let mut est = ProbabilityEstimate::from_log(log_value, top + se.ln(), n1, m1, s1 * s1 / s2);
    est.estimate = value * top.exp();
    est.bias_correction = Some(eps * top.exp());
    est.elapsed_sec = start.elapsed().as_secs_f64();
    Ok(est)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Prepare (with reordering per `options`) and draw up to `target_k` samples.
pub fn sample_tmvn(
    spec: &ProblemSpec,
    m: usize,
    target_k: usize,
    max_attempts: usize,
    options: &EstimateOptions,
) -> Result<SampleBatch> {
    let prepared = PreparedProblem::new(spec, m, options)?;
    prepared.sample(target_k, max_attempts, options.seed)
}
