//! Dense linear-algebra helpers shared by the spectral modules.
//!
//! Symmetric eigendecompositions are delegated to `faer`; everything else here
//! is small enough to do by hand on `ndarray` storage.

use faer::{Mat, Side};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
///
/// Each eigenvector is oriented so that its entry of largest magnitude is
/// positive (first such entry on ties), which makes persisted models and
/// golden tests reproducible.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            what: "symmetric matrix columns",
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(
            "non-finite entry in symmetric eigenproblem".into(),
        ));
    }
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[[i, j]]);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();

    // faer returns ascending order
    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for k in 0..n {
        let src = n - 1 - k;
        values[k] = s[src];
        let mut col = vectors.column_mut(k);
        for i in 0..n {
            col[i] = u[(i, src)];
        }
    }
    for mut col in vectors.columns_mut() {
        orient(col.view_mut());
    }
    Ok((values, vectors))
}

/// Leading `k` eigenpairs of a symmetric matrix.
pub fn symmetric_eigen_top(a: ArrayView2<f64>, k: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    let (values, vectors) = symmetric_eigen(a)?;
    let k = k.min(values.len());
    Ok((
        values.slice(ndarray::s![..k]).to_owned(),
        vectors.slice(ndarray::s![.., ..k]).to_owned(),
    ))
}

/// Flip the sign of `v` so its largest-magnitude entry is positive.
pub fn orient(mut v: ndarray::ArrayViewMut1<f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if best_abs > 0.0 && v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Squared Euclidean distance between two equal-length vectors.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Returns a standard-layout copy with one point per row.
///
/// `points` is laid out with one point per column (features x samples).
pub fn points_as_rows(points: ArrayView2<f64>) -> Array2<f64> {
    points.t().as_standard_layout().into_owned()
}

/// Upper-triangle squared distances between the rows of `rows`.
pub fn pairwise_sq_distances_upper(rows: ArrayView2<f64>) -> Vec<f64> {
    let n = rows.nrows();
    let rows = rows.as_standard_layout();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        let a = rows.row(i);
        let a = a.as_slice().expect("standard layout");
        for j in (i + 1)..n {
            let b = rows.row(j);
            out.push(sq_dist(a, b.as_slice().expect("standard layout")));
        }
    }
    out
}

/// Median of a non-empty slice (mean of the two central order statistics
/// for even lengths). Reorders the slice.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Mean over columns and unbiased (N-1) covariance of a features x samples matrix.
pub fn mean_and_covariance(data: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n_samples = data.ncols();
    let mean = data.mean_axis(Axis(1)).expect("at least one sample");
    let centered = &data - &mean.view().insert_axis(Axis(1));
    let denom = (n_samples.max(2) - 1) as f64;
    let cov = centered.dot(&centered.t()) / denom;
    (mean, cov)
}

/// In-place Cholesky factorization of a small dense SPD matrix stored
/// row-major in `a` (dimension `n`). Returns `false` if a pivot is not positive.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut factor: Vec<f64> = a.as_standard_layout().iter().copied().collect();
    if !cholesky_in_place(&mut factor, n) {
        return Err(Error::NumericalFailure(
            "matrix is not positive definite".into(),
        ));
    }
    let mut inv = Array2::zeros((n, n));
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        cholesky_solve(&factor, n, &mut col);
        for i in 0..n {
            inv[[i, j]] = col[i];
        }
    }
    Ok(inv)
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest absolute deviation of `a` from the identity.
pub fn identity_error(a: ArrayView2<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for ((i, j), v) in a.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_descending_and_oriented() {
        // eigenvalues (5 ± sqrt 5) / 2, eigenvector entries of distinct magnitude
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let (vals, vecs) = symmetric_eigen(a.view()).unwrap();
        assert!((vals[0] - (5.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((vals[1] - (5.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
        for col in vecs.columns() {
            let best = col
                .iter()
                .copied()
                .max_by(|x, y| x.abs().total_cmp(&y.abs()))
                .unwrap();
            assert!(best > 0.0);
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn spd_inverse_round_trip() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let inv = spd_inverse(a.view()).unwrap();
        assert!(identity_error(a.dot(&inv).view()) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2));
    }
}
