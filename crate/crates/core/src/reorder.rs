//! Greedy integration-variable reordering.
//!
//! All three heuristics repeatedly pick the unselected variable with the
//! smallest conditional interval probability, then plug in its truncated
//! normal mean when conditioning later choices. They differ only in what each
//! candidate conditions on: every selected variable (univariate), the m selected
//! variables it correlates with most strongly (Vecchia), or the first m selected
//! variables followed by a single ranking pass (FIC).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::CovarianceModel;
use crate::linalg;
use crate::normal;

/// Relative tolerance under which two conditional log-probabilities count as tied.
const TIE_TOL: f64 = 1e-10;

/// Bijection on 0..n; new position k holds original variable `r[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn new(r: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; r.len()];
        for &i in &r {
            if i >= r.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::param(format!("{r:?} is not a permutation")));
            }
        }
        Ok(Permutation(r))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    /// `out[k] = v[r[k]]`.
    pub fn apply<T: Clone>(&self, v: &[T]) -> Vec<T> {
        self.0.iter().map(|&i| v[i].clone()).collect()
    }

    /// Inverse of `apply`: `out[r[k]] = v[k]`.
    pub fn unapply<T: Clone + Default>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); v.len()];
        for (k, &i) in self.0.iter().enumerate() {
            out[i] = v[k].clone();
        }
        out
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (k, &i) in self.0.iter().enumerate() {
            inv[i] = k;
        }
        Permutation(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(k, &i)| k == i)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReorderMethod {
    None,
    Univariate,
    #[default]
    Vecchia,
    Fic,
}

impl std::str::FromStr for ReorderMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "off" => Ok(ReorderMethod::None),
            "univariate" => Ok(ReorderMethod::Univariate),
            "vecchia" | "on" => Ok(ReorderMethod::Vecchia),
            "fic" => Ok(ReorderMethod::Fic),
            other => Err(Error::param(format!("unknown reordering '{other}'"))),
        }
    }
}

impl std::fmt::Display for ReorderMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReorderMethod::None => "none",
            ReorderMethod::Univariate => "univariate",
            ReorderMethod::Vecchia => "vecchia",
            ReorderMethod::Fic => "fic",
        })
    }
}

/// Dispatch on `method`; `m` is ignored by `None` and `Univariate`.
pub fn reorder(method: ReorderMethod, model: &CovarianceModel, a: &[f64], b: &[f64], m: usize) -> Result<Permutation> {
    match method {
        ReorderMethod::None => Ok(Permutation::identity(model.n())),
        ReorderMethod::Univariate => univariate_reorder(model, a, b),
        ReorderMethod::Vecchia => vecchia_reorder(model, a, b, m),
        ReorderMethod::Fic => fic_reorder(model, a, b, m),
    }
}

fn check_inputs(model: &CovarianceModel, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != model.n() || b.len() != model.n() {
        return Err(Error::param("limit lengths do not match the covariance dimension"));
    }
    Ok(())
}

/// ln P(a < x < b) for x ~ N(mean, var); −∞ for a fixed coordinate (a == b).
#[inline]
fn cand_log_prob(a: f64, b: f64, mean: f64, var: f64) -> f64 {
    if a == b {
        return f64::NEG_INFINITY;
    }
    let s = var.sqrt();
    normal::log_interval((a - mean) / s, (b - mean) / s)
}

/// Standardized plug-in value for a selected variable: the mean of its
/// truncated conditional distribution (or the fixed value itself).
#[inline]
fn plug_standardized(a: f64, b: f64, mean: f64, sd: f64) -> f64 {
    if a == b {
        (a - mean) / sd
    } else {
        normal::truncated_mean((a - mean) / sd, (b - mean) / sd)
    }
}

/// Smallest index among the candidates whose log-probability is within
/// tolerance of the minimum.
fn pick(cands: impl Iterator<Item = (usize, f64)> + Clone) -> Option<usize> {
    let min = cands.clone().map(|(_, lp)| lp).fold(f64::INFINITY, f64::min);
    if min == f64::INFINITY {
        return cands.map(|(j, _)| j).next();
    }
    let cut = if min == f64::NEG_INFINITY { min } else { min + TIE_TOL * (1.0 + min.abs()) };
    cands.filter(|&(_, lp)| lp <= cut).map(|(j, _)| j).next()
}

fn variance_error(step: usize, j: usize) -> Error {
    Error::Numerical(format!("conditional variance of variable {j} is not positive at reordering step {step}"))
}

/// Classic greedy reordering with incremental Cholesky conditioning, O(n³).
pub fn univariate_reorder(model: &CovarianceModel, a: &[f64], b: &[f64]) -> Result<Permutation> {
    check_inputs(model, a, b)?;
    let n = model.n();
    // rows[j] holds L[j, 0..k] for the k variables selected so far
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut var: Vec<f64> = (0..n).map(|j| model.cov(j, j)).collect();
    let mut mean = vec![0.0; n];
    let mut free = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for step in 0..n {
        let mut scores = Vec::with_capacity(n - step);
        for j in (0..n).filter(|&j| free[j]) {
            if !(var[j] > 0.0) {
                return Err(variance_error(step, j));
            }
            scores.push((j, cand_log_prob(a[j], b[j], mean[j], var[j])));
        }
        let p = pick(scores.iter().copied()).expect("a free variable remains");
        free[p] = false;
        order.push(p);
        let d = var[p].sqrt();
        let y = plug_standardized(a[p], b[p], mean[p], d);
        let lp = std::mem::take(&mut rows[p]);
        for j in (0..n).filter(|&j| free[j]) {
            let lj = (model.cov(j, p) - linalg::dot(&rows[j], &lp)) / d;
            rows[j].push(lj);
            var[j] -= lj * lj;
            mean[j] += lj * y;
        }
    }
    Permutation::new(order)
}

/// Per-candidate state of the Vecchia-based greedy loop.
struct Candidate {
    /// Selected variables conditioned on, in insertion order.
    set: Vec<usize>,
    /// |ρ| between the candidate and each member of `set`.
    corr: Vec<f64>,
    /// L⁻¹ Σ_{set, j} while the set is the prefix of the selection order.
    z: Vec<f64>,
    mean: f64,
    var: f64,
}

struct Greedy<'a> {
    model: &'a CovarianceModel,
    a: &'a [f64],
    b: &'a [f64],
    m: usize,
    cands: Vec<Option<Candidate>>,
    order: Vec<usize>,
    /// Plugged-in (centered) values of selected variables, by variable index.
    plug: Vec<f64>,
    /// Cholesky rows of the first m selections against their predecessors.
    prefix_rows: Vec<Vec<f64>>,
}

impl<'a> Greedy<'a> {
    fn new(model: &'a CovarianceModel, a: &'a [f64], b: &'a [f64], m: usize) -> Self {
        let n = model.n();
        let cands = (0..n)
            .map(|j| {
                Some(Candidate { set: Vec::new(), corr: Vec::new(), z: Vec::new(), mean: 0.0, var: model.cov(j, j) })
            })
            .collect();
        Greedy {
            model,
            a,
            b,
            m,
            cands,
            order: Vec::with_capacity(n),
            plug: vec![0.0; n],
            prefix_rows: Vec::new(),
        }
    }

    fn scores(&self) -> Result<Vec<(usize, f64)>> {
        let step = self.order.len();
        let mut out = Vec::new();
        for (j, c) in self.cands.iter().enumerate() {
            if let Some(c) = c {
                if !(c.var > 0.0) {
                    return Err(variance_error(step, j));
                }
                out.push((j, cand_log_prob(self.a[j], self.b[j], c.mean, c.var)));
            }
        }
        Ok(out)
    }

    fn select(&mut self, p: usize) -> Result<()> {
        let step = self.order.len();
        let cp = self.cands[p].take().expect("selected variable was free");
        let d = cp.var.sqrt();
        let y = plug_standardized(self.a[p], self.b[p], cp.mean, d);
        self.plug[p] = if self.a[p] == self.b[p] { self.a[p] } else { cp.mean + d * y };
        self.order.push(p);
        let prefix = step < self.m;
        if prefix {
            self.prefix_rows.push(cp.z);
        }
        for j in 0..self.cands.len() {
            let Some(c) = self.cands[j].as_mut() else { continue };
            let r = self.model.correlation(j, p).abs();
            if prefix {
                // Set is still the whole selection prefix: extend the shared factor by one row.
                let lj = (self.model.cov(j, p) - linalg::dot(&c.z, &self.prefix_rows[step])) / d;
                c.z.push(lj);
                c.set.push(p);
                c.corr.push(r);
                c.var -= lj * lj;
                c.mean += lj * y;
                continue;
            }
            // Weakest member; on equal |ρ| the most recently added one goes first.
            let (w, rw) = c
                .corr
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (k, &rk)| if rk <= acc.1 { (k, rk) } else { acc });
            if r > rw {
                c.set.remove(w);
                c.corr.remove(w);
                c.set.push(p);
                c.corr.push(r);
                let (mean, var) = conditional_moments(self.model, j, &c.set, &self.plug)
                    .map_err(|_| variance_error(step, j))?;
                c.mean = mean;
                c.var = var;
                c.z.clear();
            }
        }
        Ok(())
    }
}

/// Mean and variance of x_j given x_set = plug[set], from a fresh local Cholesky.
fn conditional_moments(model: &CovarianceModel, j: usize, set: &[usize], plug: &[f64]) -> Result<(f64, f64)> {
    let k = set.len();
    let mut s = model.block(set);
    linalg::cholesky_in_place(&mut s, k).map_err(|p| Error::Factorization {
        index: set[p],
        reason: "conditioning block is singular during reordering".into(),
    })?;
    let mut z: Vec<f64> = set.iter().map(|&t| model.cov(t, j)).collect();
    let mut y: Vec<f64> = set.iter().map(|&t| plug[t]).collect();
    linalg::forward_solve(&s, k, &mut z);
    linalg::forward_solve(&s, k, &mut y);
    let var = model.cov(j, j) - linalg::dot(&z, &z);
    if !(var > 0.0) {
        return Err(Error::Numerical("non-positive conditional variance".into()));
    }
    Ok((linalg::dot(&z, &y), var))
}

/// Greedy reordering where each candidate conditions on at most m selected
/// variables, those with the largest |ρ| (earlier selections win ties).
pub fn vecchia_reorder(model: &CovarianceModel, a: &[f64], b: &[f64], m: usize) -> Result<Permutation> {
    check_inputs(model, a, b)?;
    if m < 1 {
        return Err(Error::param("reordering needs m ≥ 1"));
    }
    let n = model.n();
    let mut g = Greedy::new(model, a, b, m);
    for _ in 0..n {
        let scores = g.scores()?;
        let p = pick(scores.iter().copied()).expect("a free variable remains");
        g.select(p)?;
    }
    Permutation::new(g.order)
}

/// First m positions by the Vecchia greedy loop, the rest ranked in one pass
/// by their probability conditional on those m.
pub fn fic_reorder(model: &CovarianceModel, a: &[f64], b: &[f64], m: usize) -> Result<Permutation> {
    check_inputs(model, a, b)?;
    if m < 1 {
        return Err(Error::param("reordering needs m ≥ 1"));
    }
    let n = model.n();
    let mut g = Greedy::new(model, a, b, m);
    for _ in 0..m.min(n) {
        let scores = g.scores()?;
        let p = pick(scores.iter().copied()).expect("a free variable remains");
        g.select(p)?;
    }
    let mut rest = g.scores()?;
    rest.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    let mut order = g.order;
    order.extend(rest.into_iter().map(|(j, _)| j));
    Permutation::new(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn permutation_helpers() {
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(p.apply(&['a', 'b', 'c']), vec!['c', 'a', 'b']);
        assert_eq!(p.unapply(&p.apply(&[1, 2, 3])), vec![1, 2, 3]);
        assert_eq!(p.inverse().apply(&p.apply(&[5, 6, 7])), vec![5, 6, 7]);
        assert!(Permutation::new(vec![0, 0]).is_err());
    }

    #[test]
    fn single_variable() {
        let m = CovarianceModel::constant_correlation(1, 0.0).unwrap();
        for method in [ReorderMethod::Univariate, ReorderMethod::Vecchia, ReorderMethod::Fic] {
            assert_eq!(reorder(method, &m, &[-INF], &[0.0], 1).unwrap().as_slice(), &[0]);
        }
    }

    #[test]
    fn exchangeable_ties_keep_identity() {
        let m = CovarianceModel::constant_correlation(7, 0.4).unwrap();
        let (a, b) = (vec![-INF; 7], vec![0.3; 7]);
        assert!(univariate_reorder(&m, &a, &b).unwrap().is_identity());
        assert!(vecchia_reorder(&m, &a, &b, 2).unwrap().is_identity());
        assert!(fic_reorder(&m, &a, &b, 3).unwrap().is_identity());
    }

    #[test]
    fn three_variable_greedy() {
        // An independent greedy implementation using explicit Schur complements gives [1, 2, 0].
        let sigma = vec![1.0, 0.8, 0.2, 0.8, 1.0, 0.5, 0.2, 0.5, 1.0];
        let m = CovarianceModel::dense(3, sigma).unwrap();
        let (a, b) = (vec![-INF; 3], vec![0.1, -1.0, 0.5]);
        let r = univariate_reorder(&m, &a, &b).unwrap();
        assert_eq!(r.as_slice(), THREE_VARIABLE_ORACLE);
    }

    const THREE_VARIABLE_ORACLE: &[usize] = &[1, 2, 0];

    #[test]
    fn fixed_coordinates_go_first() {
        let m = CovarianceModel::constant_correlation(4, 0.3).unwrap();
        let a = vec![-INF, 0.5, -INF, -1.0];
        let b = vec![0.0, 0.5, 2.0, -1.0];
        let r = univariate_reorder(&m, &a, &b).unwrap();
        assert_eq!(&r.as_slice()[..2], &[1, 3]);
        assert_eq!(vecchia_reorder(&m, &a, &b, 3).unwrap(), r);
    }
}
