//! Result types and log-domain aggregation of importance weights.

use serde::Serialize;

/// ln h for one integrand sample; −∞ marks a zero-weight path.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct LogWeight(pub f64);

impl LogWeight {
    pub fn value(self) -> f64 {
        self.0.exp()
    }
}

/// Mean of exp(lw) with its standard error, both in logs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogMoments {
    pub log_mean: f64,
    /// ln of the standard error of the mean (−∞ when the spread is zero).
    pub log_se: f64,
    /// Kish effective sample size (Σh)² / Σh².
    pub ess: f64,
}

/// Two-pass mean and variance of exp(lw), scaled by the largest weight so that
/// nothing overflows or underflows.
pub fn log_moments(lw: &[f64]) -> LogMoments {
    let n = lw.len();
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n == 0 || top == f64::NEG_INFINITY {
        return LogMoments { log_mean: f64::NEG_INFINITY, log_se: f64::NEG_INFINITY, ess: 0.0 };
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for &v in lw {
        let e = (v - top).exp();
        s1 += e;
        s2 += e * e;
    }
    let mean = s1 / n as f64;
    let var = if n > 1 {
        lw.iter().map(|&v| ((v - top).exp() - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    LogMoments { log_mean: top + mean.ln(), log_se: top + 0.5 * (var / n as f64).ln(), ess: s1 * s1 / s2 }
}

/// Mean of independent replicate estimates (each given by its log) and the
/// standard error across them.
pub fn combine_replicates(log_means: &[f64]) -> (f64, f64) {
    let m = log_moments(log_means);
    (m.log_mean, m.log_se)
}

/// Aggregated probability estimate.
#[derive(Clone, Debug, Serialize)]
pub struct ProbabilityEstimate {
    /// ln p̂; −∞ when the estimate is zero or (multilevel) non-positive.
    pub log_estimate: f64,
    /// p̂ on the linear scale (underflows to 0 for remote regions; use `log_estimate`).
    pub estimate: f64,
    pub std_error: f64,
    pub log_std_error: f64,
    /// Number of integrand evaluations at the base level.
    pub n_samples: usize,
    pub m: usize,
    pub elapsed_sec: f64,
    pub ess: f64,
    /// Multilevel bias estimate ε̂ that was subtracted, if any.
    pub bias_correction: Option<f64>,
}

impl ProbabilityEstimate {
    pub(crate) fn from_log(log_estimate: f64, log_se: f64, n_samples: usize, m: usize, ess: f64) -> Self {
        ProbabilityEstimate {
            log_estimate,
            estimate: log_estimate.exp(),
            std_error: log_se.exp(),
            log_std_error: log_se,
            n_samples,
            m,
            elapsed_sec: 0.0,
            ess,
            bias_correction: None,
        }
    }

    /// Standard error relative to the estimate.
    pub fn relative_std_error(&self) -> f64 {
        (self.log_std_error - self.log_estimate).exp()
    }
}

/// Accepted truncated-normal draws (rows, in the caller's variable order).
#[derive(Clone, Debug, Serialize)]
pub struct SampleBatch {
    pub samples: Vec<Vec<f64>>,
    pub attempts: usize,
    pub acceptance_rate: f64,
    /// max over proposals of ln h − ψ_max; positive values mean the bound was violated.
    pub max_log_ratio: f64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Write one row per draw.
    pub fn write_csv<W: std::io::Write>(&self, out: W, header: &[String]) -> crate::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if !header.is_empty() {
            w.write_record(header)?;
        }
        for s in &self.samples {
            w.write_record(s.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}
