//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Objective value, gradient and a stationarity measure used for stopping.
pub(crate) struct Eval {
    pub f: f64,
    pub grad: Vec<f64>,
    pub stat: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    pub stat_tol: f64,
    pub rel_f_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Stop {
    Converged,
    Stalled,
    MaxIter,
    LineSearch,
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub stop: Stop,
}

/// Minimize `obj` from `x0`. `obj` returns `Ok(None)` where the objective is
/// undefined, which the line search treats as a failed trial point.
pub(crate) fn minimize<F>(mut obj: F, x0: Vec<f64>, opts: &LbfgsOptions, trace: &mut Vec<f64>) -> Result<Outcome>
where
    F: FnMut(&[f64]) -> Result<Option<Eval>>,
{
    let mut x = x0;
    let mut cur = obj(&x)?.ok_or_else(|| Error::Optimization("objective undefined at the starting point".into()))?;
    check(&cur)?;
    trace.push(cur.f);
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iter = 0;
    let mut stop = Stop::MaxIter;
    while iter < opts.max_iter {
        if cur.stat <= opts.stat_tol {
            stop = Stop::Converged;
            break;
        }
        let mut d = direction(&cur.grad, &mem);
        let mut slope = dot(&d, &cur.grad);
        if !(slope < 0.0) {
            mem.clear();
            d = cur.grad.iter().map(|g| -g).collect();
            slope = -dot(&cur.grad, &cur.grad);
        }
        let mut step = if mem.is_empty() { (1.0 / norm_inf(&d)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            if let Some(e) = obj(&trial)? {
                check(&e)?;
                if e.f <= cur.f + 1e-4 * step * slope {
                    accepted = Some((trial, e));
                    break;
                }
            }
            step *= 0.5;
        }
        iter += 1;
        let Some((xn, en)) = accepted else {
            if mem.is_empty() {
                stop = Stop::LineSearch;
                break;
            }
            mem.clear();
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = en.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let rel = (cur.f - en.f) / cur.f.abs().max(f64::MIN_POSITIVE);
        x = xn;
        cur = en;
        trace.push(cur.f);
        if cur.stat <= opts.stat_tol {
            stop = Stop::Converged;
            break;
        }
        if rel < opts.rel_f_tol {
            stop = Stop::Stalled;
            break;
        }
    }
    Ok(Outcome { x, iterations: iter, stop })
}

fn check(e: &Eval) -> Result<()> {
    if e.f.is_nan() || e.grad.iter().any(|g| g.is_nan()) {
        return Err(Error::Optimization("objective or gradient is NaN".into()));
    }
    Ok(())
}

/// Two-loop recursion.
fn direction(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alpha = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        axpy(-a, y, &mut q);
        alpha.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alpha.into_iter().rev()) {
        let b = rho * dot(y, &q);
        axpy(a - b, s, &mut q);
    }
    q
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE)
}
