//! Vecchia approximation: nearest-previous conditioning sets, the sparse
//! inverse Cholesky factor V and the conditional-moment coefficients (A, l).
//!
//! Under the approximation, x_i | x_{c(i)} ~ N(A_{i,:} x, l_i²) with A_{i,:}
//! supported on c(i), and Σ⁻¹ ≈ V Vᵀ where column i of V lives on [i, c(i)].

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::CovarianceModel;
use crate::linalg;
use crate::normal;

/// c(i) for every i, stored compressed. Entries of c(i) are all < i and are
/// sorted by increasing neighbor distance (ties by index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditioningSets {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    m: usize,
}

impl ConditioningSets {
    /// The min(m, i) nearest previously ordered variables of each i.
    pub fn build(model: &CovarianceModel, m: usize) -> Result<Self> {
        Self::build_restricted(model, m, model.n())
    }

    /// As [`ConditioningSets::build`], except that variables at positions
    /// `pool` and beyond only condition on the first `pool` variables. Used for
    /// prediction, where test points are ordered last.
    pub fn build_restricted(model: &CovarianceModel, m: usize, pool: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::param("conditioning set size m must be at least 1"));
        }
        let n = model.n();
        let lists: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|i| nearest_previous(model, m, i, i.min(pool)))
            .collect();
        Ok(Self::from_lists_unchecked(lists, m))
    }

    /// Explicit conditioning sets. Every entry of `lists[i]` must be < i.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let mut m = 0;
        for (i, c) in lists.iter().enumerate() {
            if let Some(&j) = c.iter().find(|&&j| j >= i) {
                return Err(Error::param(format!("c({i}) contains {j}, which is not a previous index")));
            }
            let mut sorted = c.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != c.len() {
                return Err(Error::param(format!("c({i}) contains duplicates")));
            }
            m = m.max(c.len());
        }
        Ok(Self::from_lists_unchecked(lists, m.max(1)))
    }

    fn from_lists_unchecked(lists: Vec<Vec<usize>>, m: usize) -> Self {
        let mut ptr = Vec::with_capacity(lists.len() + 1);
        ptr.push(0);
        let mut idx = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for c in lists {
            idx.extend_from_slice(&c);
            ptr.push(idx.len());
        }
        ConditioningSets { ptr, idx, m }
    }

    pub fn n(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[usize] {
        &self.idx[self.ptr[i]..self.ptr[i + 1]]
    }

    /// Total number of conditioning entries, Σ |c(i)|.
    pub fn nnz(&self) -> usize {
        self.idx.len()
    }
}

/// Drops the low 12 mantissa bits so that distances equal up to rounding
/// (equidistant grid points) tie and fall back to the index order.
#[inline]
fn snap(d: f64) -> f64 {
    f64::from_bits(d.to_bits() & !0xfff)
}

/// Nearest `m` indices among 0..limit to variable i, by neighbor distance then index.
fn nearest_previous(model: &CovarianceModel, m: usize, i: usize, limit: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = (0..limit).map(|j| (snap(model.neighbor_dist(i, j)), j)).collect();
    let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
    if cand.len() > m {
        cand.select_nth_unstable_by(m - 1, cmp);
        cand.truncate(m);
    }
    cand.sort_unstable_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Convenience wrapper for [`ConditioningSets::build`].
pub fn build_conditioning_sets(model: &CovarianceModel, m: usize) -> Result<ConditioningSets> {
    ConditioningSets::build(model, m)
}

/// Sparse V together with the conditional-mean coefficients A and conditional
/// standard deviations l. Immutable once built.
#[derive(Clone, Debug)]
pub struct VecchiaFactor {
    sets: ConditioningSets,
    /// Column i occupies `v[ptr[i] + i ..= ptr[i + 1] + i]`, rows [i, c(i)].
    v: Vec<f64>,
    /// Row i aligned with c(i).
    a: Vec<f64>,
    l: Vec<f64>,
}

impl VecchiaFactor {
    /// Nearest-neighbor sets of size m followed by the factor.
    pub fn build(model: &CovarianceModel, m: usize) -> Result<Self> {
        let sets = ConditioningSets::build(model, m)?;
        inverse_cholesky_columns(model, sets)
    }

    pub fn n(&self) -> usize {
        self.l.len()
    }

    pub fn sets(&self) -> &ConditioningSets {
        &self.sets
    }

    /// Conditional standard deviations.
    pub fn l(&self) -> &[f64] {
        &self.l
    }

    /// (row indices [i, c(i)], values) of column i of V.
    pub fn v_column(&self, i: usize) -> (Vec<usize>, &[f64]) {
        let mut rows = Vec::with_capacity(self.sets.get(i).len() + 1);
        rows.push(i);
        rows.extend_from_slice(self.sets.get(i));
        let lo = self.sets.ptr[i] + i;
        let hi = self.sets.ptr[i + 1] + i + 1;
        (rows, &self.v[lo..hi])
    }

    /// (column indices c(i), values) of row i of A.
    #[inline]
    pub fn a_row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.sets.ptr[i], self.sets.ptr[i + 1]);
        (&self.sets.idx[lo..hi], &self.a[lo..hi])
    }

    /// A_{i,:} x; reads only entries of x at indices below i.
    #[inline]
    pub fn cond_mean(&self, x: &[f64], i: usize) -> f64 {
        let (c, a) = self.a_row(i);
        let mut s = 0.0;
        for (&j, &aij) in c.iter().zip(a) {
            s += aij * x[j];
        }
        s
    }

    /// A x.
    pub fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.cond_mean(x, i)).collect()
    }

    /// Aᵀ r, accumulated into `out` (which is overwritten).
    pub fn at_mul_into(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n() {
            if r[i] == 0.0 {
                continue;
            }
            let (c, a) = self.a_row(i);
            for (&j, &aij) in c.iter().zip(a) {
                out[j] += aij * r[i];
            }
        }
    }

    /// Vecchia Gaussian log-density of a zero-mean vector x.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| {
                let z = (x[i] - self.cond_mean(x, i)) / self.l[i];
                normal::log_pdf(z) - self.l[i].ln()
            })
            .sum()
    }

    /// Sequential draw x_i = A_{i,:} x + l_i z_i from standard normals z.
    pub fn simulate(&self, z: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        for i in 0..self.n() {
            x[i] = self.cond_mean(&x, i) + self.l[i] * z[i];
        }
        x
    }

    /// Write V and A as `row,col,value` coordinate lists (0-based).
    pub fn write_coo(&self, v_path: &Path, a_path: &Path) -> Result<()> {
        let mut fv = std::io::BufWriter::new(std::fs::File::create(v_path)?);
        writeln!(fv, "row,col,value")?;
        for i in 0..self.n() {
            let (rows, vals) = self.v_column(i);
            for (r, v) in rows.iter().zip(vals) {
                writeln!(fv, "{r},{i},{v:e}")?;
            }
        }
        let mut fa = std::io::BufWriter::new(std::fs::File::create(a_path)?);
        writeln!(fa, "row,col,value")?;
        for i in 0..self.n() {
            let (c, a) = self.a_row(i);
            for (j, v) in c.iter().zip(a) {
                writeln!(fa, "{i},{j},{v:e}")?;
            }
        }
        Ok(())
    }
}

/// Column i of V is u / √u₁ with u = (Σ_{c̄(i),c̄(i)})⁻¹ e₁ and c̄(i) = [i, c(i)].
pub fn inverse_cholesky_columns(model: &CovarianceModel, sets: ConditioningSets) -> Result<VecchiaFactor> {
    if sets.n() != model.n() {
        return Err(Error::param(format!(
            "conditioning sets cover {} variables, model has {}",
            sets.n(),
            model.n()
        )));
    }
    let cols: Vec<Vec<f64>> = (0..sets.n())
        .into_par_iter()
        .map(|i| {
            let c = sets.get(i);
            let k = c.len() + 1;
            let mut cbar = Vec::with_capacity(k);
            cbar.push(i);
            cbar.extend_from_slice(c);
            let mut s = model.block(&cbar);
            linalg::cholesky_in_place(&mut s, k).map_err(|p| Error::Factorization {
                index: i,
                reason: format!(
                    "covariance of variable {i} and its conditioning set is singular at local pivot {p} (variable {})",
                    cbar[p]
                ),
            })?;
            let mut u = vec![0.0; k];
            u[0] = 1.0;
            linalg::forward_solve(&s, k, &mut u);
            linalg::backward_solve(&s, k, &mut u);
            let scale = u[0].sqrt();
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::Factorization { index: i, reason: "non-positive leading entry".into() });
            }
            Ok(u.into_iter().map(|x| x / scale).collect())
        })
        .collect::<Result<_>>()?;
    let mut v = Vec::with_capacity(sets.nnz() + sets.n());
    for col in cols {
        v.extend_from_slice(&col);
    }
    let (a, l) = cond_coeffs(&sets, &v);
    Ok(VecchiaFactor { sets, v, a, l })
}

/// l_i = 1 / V_ii and A_ij = −V_ji l_i for j ∈ c(i).
fn cond_coeffs(sets: &ConditioningSets, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = sets.n();
    let mut a = Vec::with_capacity(sets.nnz());
    let mut l = Vec::with_capacity(n);
    for i in 0..n {
        let col = &v[sets.ptr[i] + i..sets.ptr[i + 1] + i + 1];
        let li = 1.0 / col[0];
        l.push(li);
        a.extend(col[1..].iter().map(|vji| -vji * li));
    }
    (a, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, Locations};

    fn line(n: usize) -> CovarianceModel {
        let rows: Vec<[f64; 1]> = (0..n).map(|i| [i as f64]).collect();
        CovarianceModel::matern(KernelFamily::Matern05, 1.0, 1.0, 0.0, Locations::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn trivial_sets() {
        let s = ConditioningSets::build(&line(1), 3).unwrap();
        assert_eq!(s.n(), 1);
        assert!(s.get(0).is_empty());
        let s = ConditioningSets::build(&line(6), 5).unwrap();
        for i in 0..6 {
            let mut c = s.get(i).to_vec();
            c.sort_unstable();
            assert_eq!(c, (0..i).collect::<Vec<_>>());
        }
        assert!(ConditioningSets::build(&line(3), 0).is_err());
    }

    #[test]
    fn line_of_five_m2() {
        // brute force: distances from point 3 to 0,1,2 are 3,2,1
        let s = ConditioningSets::build(&line(5), 2).unwrap();
        assert_eq!(s.get(3), &[2, 1]);
        assert_eq!(s.get(4), &[3, 2]);
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let m = CovarianceModel::constant_correlation(6, 0.3).unwrap();
        let s = ConditioningSets::build(&m, 2).unwrap();
        assert_eq!(s.get(5), &[0, 1]);
    }

    #[test]
    fn bivariate_closed_form() {
        let rho: f64 = 0.5;
        let m = CovarianceModel::dense(2, vec![1.0, rho, rho, 1.0]).unwrap();
        let f = VecchiaFactor::build(&m, 1).unwrap();
        let s = (1.0 - rho * rho).sqrt();
        let (rows, v1) = f.v_column(1);
        assert_eq!(rows, vec![1, 0]);
        assert!((v1[0] - 1.0 / s).abs() < 1e-15);
        assert!((v1[1] + rho / s).abs() < 1e-15);
        assert!((f.v_column(0).1[0] - 1.0).abs() < 1e-15);
        assert!((f.l()[1] - 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.l()[0], 1.0);
        assert!((f.a_row(1).1[0] - 0.5).abs() < 1e-15);
        assert!((f.cond_mean(&[2.0, 123.0], 1) - 1.0).abs() < 1e-15);
        assert_eq!(f.cond_mean(&[2.0, 123.0], 0), 0.0);
    }

    #[test]
    fn identity_gives_identity() {
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 5] = 1.0;
        }
        let f = VecchiaFactor::build(&CovarianceModel::dense(4, eye).unwrap(), 2).unwrap();
        for i in 0..4 {
            assert_eq!(f.l()[i], 1.0);
            assert!(f.a_row(i).1.iter().all(|&a| a == 0.0));
            let (_, col) = f.v_column(i);
            assert_eq!(col[0], 1.0);
        }
    }

    #[test]
    fn singular_block_names_index() {
        let locs = Locations::from_rows(&[[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let m = CovarianceModel::matern(KernelFamily::Matern15, 1.0, 0.5, 0.0, locs).unwrap();
        match VecchiaFactor::build(&m, 2) {
            Err(Error::Factorization { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected factorization error, got {other:?}"),
        }
    }

    #[test]
    fn simulate_inverts_log_density_residuals() {
        let f = VecchiaFactor::build(&line(8), 3).unwrap();
        let z: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = f.simulate(&z);
        let want: f64 = z.iter().zip(f.l()).map(|(z, l)| normal::log_pdf(*z) - l.ln()).sum();
        assert!((f.log_density(&x) - want).abs() < 1e-12);
    }

    #[test]
    fn coo_dump_has_one_line_per_entry() {
        let f = VecchiaFactor::build(&line(5), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (pv, pa) = (dir.path().join("v.csv"), dir.path().join("a.csv"));
        f.write_coo(&pv, &pa).unwrap();
        let nv = std::fs::read_to_string(&pv).unwrap().lines().count();
        let na = std::fs::read_to_string(&pa).unwrap().lines().count();
        assert_eq!(nv, 1 + 5 + f.sets().nnz());
        assert_eq!(na, 1 + f.sets().nnz());
    }
}
