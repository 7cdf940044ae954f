//! Small dense kernels on row-major k × k blocks (k ≈ m + 1).

/// In-place lower Cholesky of a row-major k × k matrix. On failure returns the
/// local pivot position whose Schur complement was not positive.
pub(crate) fn cholesky_in_place(a: &mut [f64], k: usize) -> Result<(), usize> {
    for j in 0..k {
        let mut d = a[j * k + j];
        for t in 0..j {
            d -= a[j * k + t] * a[j * k + t];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for t in 0..j {
                s -= a[i * k + t] * a[j * k + t];
            }
            a[i * k + j] = s / d;
        }
        for i in 0..j {
            a[i * k + j] = 0.0;
        }
    }
    Ok(())
}

/// Solve L z = r in place for lower-triangular L.
pub(crate) fn forward_solve(l: &[f64], k: usize, r: &mut [f64]) {
    for i in 0..k {
        let mut s = r[i];
        for t in 0..i {
            s -= l[i * k + t] * r[t];
        }
        r[i] = s / l[i * k + i];
    }
}

/// Solve Lᵀ z = r in place for lower-triangular L.
pub(crate) fn backward_solve(l: &[f64], k: usize, r: &mut [f64]) {
    for i in (0..k).rev() {
        let mut s = r[i];
        for t in i + 1..k {
            s -= l[t * k + i] * r[t];
        }
        r[i] = s / l[i * k + i];
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
