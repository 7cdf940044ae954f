//! The log likelihood ratio ψ(x; γ) of the tilted proposal, its derivatives
//! under the Vecchia parameterization, and the saddle-point solve.
//!
//! For free coordinate i, with μ_i = A_{i,:}x, ã_i = (a_i − μ_i)/l_i,
//! b̃_i = (b_i − μ_i)/l_i and y_i = (x_i − μ_i)/l_i,
//!
//! ψ = Σ_i [ ln(Φ(b̃_i − γ_i) − Φ(ã_i − γ_i)) + γ_i²/2 − γ_i y_i ].
//!
//! Coordinates with a_i = b_i are fixed at that value: they contribute no
//! term, have zero tilt and are excluded from the optimization, but still
//! enter the conditional means of later coordinates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lbfgs::{self, Eval, LbfgsOptions, Stop};
use crate::normal;
use crate::vecchia::VecchiaFactor;

/// ψ, its gradient and the diagonal Ψ′ needed for Hessian products.
#[derive(Clone, Debug)]
pub struct PsiEval {
    pub psi: f64,
    pub grad_x: Vec<f64>,
    pub grad_gamma: Vec<f64>,
    psi_prime: Vec<f64>,
}

impl PsiEval {
    /// max over both gradient blocks of |∂ψ|.
    pub fn grad_norm_inf(&self) -> f64 {
        self.grad_x.iter().chain(&self.grad_gamma).fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

/// Box limits (already centered by the mean) on top of a Vecchia factor.
#[derive(Clone, Debug)]
pub struct TiltProblem<'a> {
    factor: &'a VecchiaFactor,
    lower: &'a [f64],
    upper: &'a [f64],
}

impl<'a> TiltProblem<'a> {
    pub fn new(factor: &'a VecchiaFactor, lower: &'a [f64], upper: &'a [f64]) -> Result<Self> {
        let n = factor.n();
        if lower.len() != n || upper.len() != n {
            return Err(Error::param("limit lengths do not match the factor dimension"));
        }
        for i in 0..n {
            if !(lower[i] < upper[i] || (lower[i] == upper[i] && lower[i].is_finite())) {
                return Err(Error::param(format!("invalid limits ({}, {}) at {i}", lower[i], upper[i])));
            }
        }
        Ok(TiltProblem { factor, lower, upper })
    }

    pub fn n(&self) -> usize {
        self.factor.n()
    }

    pub fn factor(&self) -> &VecchiaFactor {
        self.factor
    }

    pub fn lower(&self) -> &[f64] {
        self.lower
    }

    pub fn upper(&self) -> &[f64] {
        self.upper
    }

    #[inline]
    pub fn is_fixed(&self, i: usize) -> bool {
        self.lower[i] == self.upper[i]
    }

    /// Number of coordinates that are not fixed.
    pub fn n_free(&self) -> usize {
        (0..self.n()).filter(|&i| !self.is_fixed(i)).count()
    }

    fn check_dims(&self, x: &[f64], gamma: &[f64]) -> Result<()> {
        if x.len() != self.n() || gamma.len() != self.n() {
            return Err(Error::param("state dimension does not match the problem"));
        }
        Ok(())
    }

    pub fn psi(&self, x: &[f64], gamma: &[f64]) -> Result<f64> {
        self.check_dims(x, gamma)?;
        let mut psi = 0.0;
        for i in 0..self.n() {
            if self.is_fixed(i) {
                continue;
            }
            let (mu, l) = (self.factor.cond_mean(x, i), self.factor.l()[i]);
            let g = gamma[i];
            let ta = (self.lower[i] - mu) / l - g;
            let tb = (self.upper[i] - mu) / l - g;
            let lp = normal::log_interval(ta, tb);
            if lp == f64::NEG_INFINITY {
                return Err(underflow(i));
            }
            psi += lp + 0.5 * g * g - g * (x[i] - mu) / l;
        }
        Ok(psi)
    }

    /// ψ together with ∂ψ/∂x = −(I−A)ᵀD⁻¹γ + AᵀD⁻¹Ψ and ∂ψ/∂γ = γ − y + Ψ.
    pub fn evaluate(&self, x: &[f64], gamma: &[f64]) -> Result<PsiEval> {
        self.check_dims(x, gamma)?;
        let n = self.n();
        let l = self.factor.l();
        let mut psi = 0.0;
        let mut grad_gamma = vec![0.0; n];
        let mut psi_prime = vec![0.0; n];
        // r = D⁻¹(Ψ + γ), fed to Aᵀ
        let mut r = vec![0.0; n];
        let mut gx_diag = vec![0.0; n];
        for i in 0..n {
            if self.is_fixed(i) {
                continue;
            }
            let mu = self.factor.cond_mean(x, i);
            let g = gamma[i];
            let ta = (self.lower[i] - mu) / l[i] - g;
            let tb = (self.upper[i] - mu) / l[i] - g;
            let lp = normal::log_interval(ta, tb);
            if lp == f64::NEG_INFINITY {
                return Err(underflow(i));
            }
            let y = (x[i] - mu) / l[i];
            psi += lp + 0.5 * g * g - g * y;
            let (ra, rb) = (density_ratio(ta, lp), density_ratio(tb, lp));
            let big_psi = ra - rb;
            psi_prime[i] = tail_product(ta, ra) - tail_product(tb, rb) - big_psi * big_psi;
            grad_gamma[i] = g - y + big_psi;
            r[i] = (big_psi + g) / l[i];
            gx_diag[i] = -g / l[i];
        }
        let mut grad_x = vec![0.0; n];
        self.factor.at_mul_into(&r, &mut grad_x);
        for i in 0..n {
            grad_x[i] = if self.is_fixed(i) { 0.0 } else { grad_x[i] + gx_diag[i] };
        }
        Ok(PsiEval { psi, grad_x, grad_gamma, psi_prime })
    }

    pub fn gradient(&self, x: &[f64], gamma: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let e = self.evaluate(x, gamma)?;
        Ok((e.grad_x, e.grad_gamma))
    }

    /// H·v for the 2n × 2n Hessian of ψ in (x, γ), using Ψ′ from `eval`.
    pub fn hessian_product_at(&self, eval: &PsiEval, v_x: &[f64], v_gamma: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let l = self.factor.l();
        let mut out_gamma = vec![0.0; n];
        let mut r = vec![0.0; n];
        for i in 0..n {
            if self.is_fixed(i) {
                continue;
            }
            let w = self.factor.cond_mean(v_x, i) / l[i];
            let q = eval.psi_prime[i] * (w + v_gamma[i]);
            out_gamma[i] = v_gamma[i] - v_x[i] / l[i] + w + q;
            r[i] = (q + v_gamma[i]) / l[i];
        }
        let mut out_x = vec![0.0; n];
        self.factor.at_mul_into(&r, &mut out_x);
        for i in 0..n {
            out_x[i] = if self.is_fixed(i) { 0.0 } else { out_x[i] - v_gamma[i] / l[i] };
        }
        (out_x, out_gamma)
    }

    pub fn hessian_product(&self, x: &[f64], gamma: &[f64], v_x: &[f64], v_gamma: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if v_x.len() != self.n() || v_gamma.len() != self.n() {
            return Err(Error::param("direction dimension does not match the problem"));
        }
        let e = self.evaluate(x, gamma)?;
        let mut vx = v_x.to_vec();
        for i in 0..self.n() {
            if self.is_fixed(i) {
                vx[i] = 0.0;
            }
        }
        Ok(self.hessian_product_at(&e, &vx, v_gamma))
    }

    /// Feasible interior starting point: midpoint, finite limit ∓ l_i/2, or 0.
    pub fn initial_state(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.factor.l();
        let x = (0..self.n())
            .map(|i| {
                let (a, b) = (self.lower[i], self.upper[i]);
                match (a.is_finite(), b.is_finite()) {
                    (true, true) => 0.5 * (a + b),
                    (true, false) => a + 0.5 * l[i],
                    (false, true) => b - 0.5 * l[i],
                    (false, false) => 0.0,
                }
            })
            .collect();
        (x, vec![0.0; self.n()])
    }
}

fn underflow(i: usize) -> Error {
    Error::Numerical(format!("interval probability of variable {i} underflows"))
}

/// φ(t) / P, computed in logs; zero at infinite t.
#[inline]
fn density_ratio(t: f64, log_p: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        (normal::log_pdf(t) - log_p).exp()
    }
}

/// t·φ(t)/P with the convention that it vanishes at infinite t.
#[inline]
fn tail_product(t: f64, ratio: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        t * ratio
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TiltOptions {
    pub max_iter: usize,
    /// Stop once ‖∇ψ‖_∞ falls below this.
    pub grad_tol: f64,
    /// Stop when g = ‖∇ψ‖² decreases by less than this fraction in one step.
    pub rel_tol: f64,
    pub memory: usize,
    /// Extra iterations after projecting an infeasible solution into the box.
    pub polish_iter: usize,
}

impl Default for TiltOptions {
    fn default() -> Self {
        TiltOptions { max_iter: 1000, grad_tol: 1e-6, rel_tol: 1e-12, memory: 10, polish_iter: 50 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TiltSolution {
    pub x: Vec<f64>,
    pub gamma: Vec<f64>,
    /// ψ(x̂; γ̂), the log of the dominating constant for accept-reject sampling.
    pub psi_max: f64,
    /// ‖∇ψ(x̂; γ̂)‖_∞.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The optimizer left the box and the solution was projected back and re-polished.
    pub projected: bool,
    /// Values of g = ‖∇ψ‖² at accepted iterates.
    pub trace: Vec<f64>,
}

impl TiltSolution {
    /// Untilted solution (γ = 0) at the default starting point; turns the
    /// sampler into plain separation of variables.
    pub fn zero(problem: &TiltProblem) -> Result<Self> {
        let (x, gamma) = problem.initial_state();
        let psi = problem.psi(&x, &gamma)?;
        Ok(TiltSolution {
            x,
            gamma,
            psi_max: psi,
            grad_norm: f64::NAN,
            iterations: 0,
            converged: false,
            projected: false,
            trace: Vec::new(),
        })
    }

    /// JSON diagnostics: iterations, g trajectory, final gradient norm and ψ_max.
    pub fn diagnostics_json(&self) -> serde_json::Value {
        serde_json::json!({
            "iterations": self.iterations,
            "converged": self.converged,
            "projected": self.projected,
            "grad_norm": self.grad_norm,
            "psi_max": self.psi_max,
            "g_trace": self.trace,
        })
    }
}

/// Minimize g(x, γ) = ‖∇ψ‖² by L-BFGS with ∇g = 2H∇ψ, starting from `initial_state`.
pub fn solve_tilting(problem: &TiltProblem, options: &TiltOptions) -> Result<TiltSolution> {
    let (x0, g0) = problem.initial_state();
    let mut trace = Vec::new();
    let (mut u, mut iters, mut stop) = run(problem, pack(&x0, &g0), options.max_iter, options, &mut trace)?;
    let n = problem.n();
    let mut projected = false;
    let outside = (0..n).any(|i| !problem.is_fixed(i) && !(u[i] >= problem.lower[i] && u[i] <= problem.upper[i]));
    if outside {
        projected = true;
        for i in 0..n {
            if !problem.is_fixed(i) {
                let (a, b) = (problem.lower[i], problem.upper[i]);
                let eps = 1e-9 * (b - a).min(1.0);
                u[i] = u[i].clamp(a + eps, b - eps);
            }
        }
        let (u2, it2, s2) = run(problem, u, options.polish_iter, options, &mut trace)?;
        u = u2;
        iters += it2;
        stop = s2;
    }
    let (x, gamma) = (u[..n].to_vec(), u[n..].to_vec());
    let e = problem.evaluate(&x, &gamma)?;
    let grad_norm = e.grad_norm_inf();
    Ok(TiltSolution {
        x,
        gamma,
        psi_max: e.psi,
        grad_norm,
        iterations: iters,
        converged: stop == Stop::Converged || grad_norm <= options.grad_tol,
        projected,
        trace,
    })
}

fn pack(x: &[f64], gamma: &[f64]) -> Vec<f64> {
    let mut u = x.to_vec();
    u.extend_from_slice(gamma);
    u
}

fn run(
    problem: &TiltProblem,
    u0: Vec<f64>,
    max_iter: usize,
    options: &TiltOptions,
    trace: &mut Vec<f64>,
) -> Result<(Vec<f64>, usize, Stop)> {
    let n = problem.n();
    let obj = |u: &[f64]| -> Result<Option<Eval>> {
        let (x, gamma) = u.split_at(n);
        let e = match problem.evaluate(x, gamma) {
            Ok(e) => e,
            Err(Error::Numerical(_)) => return Ok(None),
            Err(other) => return Err(other),
        };
        let f = e.grad_x.iter().chain(&e.grad_gamma).map(|g| g * g).sum::<f64>();
        let (hx, hg) = problem.hessian_product_at(&e, &e.grad_x, &e.grad_gamma);
        let grad: Vec<f64> = hx.iter().chain(&hg).map(|v| 2.0 * v).collect();
        Ok(Some(Eval { f, grad, stat: e.grad_norm_inf() }))
    };
    let opts = LbfgsOptions {
        memory: options.memory,
        max_iter,
        stat_tol: options.grad_tol,
        rel_f_tol: options.rel_tol,
    };
    let out = lbfgs::minimize(obj, u0, &opts, trace)?;
    Ok((out.x, out.iterations, out.stop))
}
