//! Integration problems: covariance, box limits and mean.

use crate::error::{Error, Result};
use crate::kernels::CovarianceModel;
use crate::reorder::Permutation;

/// Φ_n(a, b; μ, Σ): probability that x ~ N(μ, Σ) lies in [a, b].
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    covariance: CovarianceModel,
    lower: Vec<f64>,
    upper: Vec<f64>,
    mean: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(covariance: CovarianceModel, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = covariance.n();
        let spec = ProblemSpec { covariance, lower, upper, mean: vec![0.0; n] };
        spec.validate(false)?;
        Ok(spec)
    }

    /// Like [`ProblemSpec::new`] but also accepts degenerate coordinates with
    /// `lower[i] == upper[i]`, which are treated as fixed (conditioned-on) values.
    pub fn with_fixed(covariance: CovarianceModel, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = covariance.n();
        let spec = ProblemSpec { covariance, lower, upper, mean: vec![0.0; n] };
        spec.validate(true)?;
        Ok(spec)
    }

    pub fn with_mean(mut self, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != self.n() {
            return Err(Error::param(format!("mean has length {}, expected {}", mean.len(), self.n())));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("mean must be finite"));
        }
        self.mean = mean;
        Ok(self)
    }

    fn validate(&self, allow_fixed: bool) -> Result<()> {
        let n = self.covariance.n();
        if n == 0 {
            return Err(Error::param("problem dimension must be positive"));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::param(format!(
                "limits have lengths {} and {}, expected {n}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for i in 0..n {
            let (a, b) = (self.lower[i], self.upper[i]);
            if a.is_nan() || b.is_nan() || a == f64::INFINITY || b == f64::NEG_INFINITY {
                return Err(Error::param(format!("invalid limits ({a}, {b}) at {i}")));
            }
            let ok = if allow_fixed && a == b { a.is_finite() } else { a < b };
            if !ok {
                return Err(Error::param(format!("lower limit {a} is not below upper limit {b} at {i}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.covariance.n()
    }

    pub fn covariance(&self) -> &CovarianceModel {
        &self.covariance
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// (a − μ, b − μ).
    pub fn centered_limits(&self) -> (Vec<f64>, Vec<f64>) {
        let a = self.lower.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let b = self.upper.iter().zip(&self.mean).map(|(b, m)| b - m).collect();
        (a, b)
    }

    /// The same probability with variables relabelled so that new variable k is old `perm[k]`.
    pub fn permuted(&self, perm: &Permutation) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::param("permutation length does not match problem dimension"));
        }
        Ok(ProblemSpec {
            covariance: self.covariance.select(perm.as_slice())?,
            lower: perm.apply(&self.lower),
            upper: perm.apply(&self.upper),
            mean: perm.apply(&self.mean),
        })
    }
}
