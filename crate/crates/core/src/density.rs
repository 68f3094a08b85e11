//! Modified Gaussian kernel density estimate with closed-form bandwidths,
//! its log-density gradient (the sampler force) and the product joint density.
//!
//! The mixture places a Gaussian of standard deviation `s_hat` at each shrunk
//! centre `(s_hat / s) eta_j`. For standardized centres (zero mean, identity
//! covariance) the mixture itself has zero mean and identity covariance.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Terms this far below the largest exponent are below f64 resolution of the sum.
const NEGLIGIBLE_EXPONENT: f64 = -50.0;

/// Silverman-type bandwidth `s` and its shrunk counterpart `s_hat` for
/// `n_samples` centres in `dim` dimensions.
pub fn bandwidths(n_samples: usize, dim: usize) -> Result<(f64, f64)> {
    if n_samples < 2 || dim < 1 {
        return Err(Error::invalid(format!(
            "bandwidths need N >= 2 and nu >= 1 (got N = {n_samples}, nu = {dim})"
        )));
    }
    let n = n_samples as f64;
    let nu = dim as f64;
    let s = (4.0 / (n * (2.0 + nu))).powf(1.0 / (nu + 4.0));
    let s_hat = s / (s * s + (n - 1.0) / n).sqrt();
    Ok((s, s_hat))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    centers: Array2<f64>,
    s: f64,
    s_hat: f64,
    /// Shrunk centres `(s_hat / s) eta_j`, one per row.
    shrunk: Array2<f64>,
}

impl KdeModel {
    /// Builds the estimate on `centers` (nu x N, one centre per column).
    pub fn new(centers: Array2<f64>) -> Result<KdeModel> {
        let (dim, n) = centers.dim();
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("KDE centres must be finite"));
        }
        let (s, s_hat) = bandwidths(n, dim)?;
        let ratio = s_hat / s;
        let shrunk = centers.t().mapv(|v| ratio * v).as_standard_layout().into_owned();
        Ok(KdeModel {
            centers,
            s,
            s_hat,
            shrunk,
        })
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn dim(&self) -> usize {
        self.centers.nrows()
    }

    pub fn n_centers(&self) -> usize {
        self.centers.ncols()
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn s_hat(&self) -> f64 {
        self.s_hat
    }

    fn exponents(&self, eta: &[f64], out: &mut [f64]) -> f64 {
        let inv = -0.5 / (self.s_hat * self.s_hat);
        let mut max = f64::NEG_INFINITY;
        for (row, o) in self.shrunk.rows().into_iter().zip(out.iter_mut()) {
            let mut d2 = 0.0;
            for (c, x) in row.iter().zip(eta) {
                d2 += (c - x) * (c - x);
            }
            *o = inv * d2;
            max = max.max(*o);
        }
        max
    }

    fn check_dim(&self, len: usize) {
        assert_eq!(len, self.dim(), "query dimension must match the KDE dimension");
    }

    /// Natural log of the density at `eta`, via log-sum-exp.
    pub fn log_pdf(&self, eta: ArrayView1<f64>) -> f64 {
        self.check_dim(eta.len());
        let eta = eta.to_vec();
        let mut buf = vec![0.0; self.n_centers()];
        let max = self.exponents(&eta, &mut buf);
        let sum: f64 = buf
            .iter()
            .filter(|a| **a - max > NEGLIGIBLE_EXPONENT)
            .map(|a| (a - max).exp())
            .sum();
        let nu = self.dim() as f64;
        max + sum.ln() - (self.n_centers() as f64).ln() - 0.5 * nu * (2.0 * PI * self.s_hat * self.s_hat).ln()
    }

    pub fn pdf(&self, eta: ArrayView1<f64>) -> f64 {
        self.log_pdf(eta).exp()
    }

    /// `grad log q(u)`: `(sum_j w_j c_j - u) / s_hat^2` with softmax weights
    /// `w_j` over the shrunk centres `c_j`.
    pub fn force(&self, u: ArrayView1<f64>) -> Array1<f64> {
        self.check_dim(u.len());
        let u = u.to_vec();
        let mut out = vec![0.0; self.dim()];
        let mut buf = vec![0.0; self.n_centers()];
        self.force_into(&u, &mut out, &mut buf);
        Array1::from(out)
    }

    /// Allocation-free [`KdeModel::force`]; `scratch` must hold `N` values.
    pub fn force_into(&self, u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let max = self.exponents(u, scratch);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut total = 0.0;
        for (row, a) in self.shrunk.rows().into_iter().zip(scratch.iter()) {
            let rel = a - max;
            if rel <= NEGLIGIBLE_EXPONENT {
                continue;
            }
            let w = rel.exp();
            total += w;
            for (o, c) in out.iter_mut().zip(row.iter()) {
                *o += w * c;
            }
        }
        let inv_h2 = 1.0 / (self.s_hat * self.s_hat);
        for (o, x) in out.iter_mut().zip(u) {
            *o = (*o / total - x) * inv_h2;
        }
    }

    /// Force for every column of `u` (nu x M).
    pub fn force_matrix(&self, u: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(u.raw_dim());
        self.force_matrix_into(u, &mut out);
        out
    }

    /// Column-parallel [`KdeModel::force_matrix`] into a preallocated buffer.
    pub fn force_matrix_into(&self, u: ArrayView2<f64>, out: &mut Array2<f64>) {
        self.check_dim(u.nrows());
        let n = self.n_centers();
        let dim = self.dim();
        out.axis_iter_mut(Axis(1))
            .into_par_iter()
            .zip(u.axis_iter(Axis(1)).into_par_iter())
            .for_each_init(
                || (vec![0.0; n], vec![0.0; dim], vec![0.0; dim]),
                |(scratch, q, f), (mut out_col, u_col)| {
                    q.iter_mut().zip(u_col.iter()).for_each(|(a, b)| *a = *b);
                    self.force_into(q, f, scratch);
                    out_col.iter_mut().zip(f.iter()).for_each(|(a, b)| *a = *b);
                },
            );
    }

    /// Sum of `log pdf` over the columns of `u`, the product joint density in log form.
    pub fn joint_log_density(&self, u: ArrayView2<f64>) -> f64 {
        u.columns().into_iter().map(|c| self.log_pdf(c)).sum()
    }

    /// Closed-form mean and second moment `E[eta eta^T]` of the mixture.
    pub fn mixture_moments(&self) -> (Array1<f64>, Array2<f64>) {
        let n = self.n_centers() as f64;
        let mean = self.shrunk.mean_axis(Axis(0)).expect("non-empty");
        let mut second = self.shrunk.t().dot(&self.shrunk) / n;
        for k in 0..self.dim() {
            second[[k, k]] += self.s_hat * self.s_hat;
        }
        (mean, second)
    }
}
