//! Geometric harmonics: a truncated kernel eigenbasis on latent points,
//! extended off the training set with the Nyström formula, and the lift from
//! latent coordinates back to ambient features built on it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmaps::{gaussian_kernel_rows, KernelDenominator};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhConfig {
    /// `eps2 = eps_factor * median squared pairwise latent distance`.
    pub eps_factor: f64,
    /// Modes with `sigma >= delta * sigma_1` are retained.
    pub delta: f64,
    pub denominator: KernelDenominator,
}

impl Default for GhConfig {
    fn default() -> Self {
        Self {
            eps_factor: 1.0,
            delta: 1e-6,
            denominator: KernelDenominator::TwoEps,
        }
    }
}

impl GhConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_factor > 0.0 && self.eps_factor.is_finite()) {
            return Err(Error::invalid("GH epsilon factor must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("GH delta must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Fitted multi-output geometric-harmonics interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct GhInterpolant {
    /// N x m training inputs, one point per row.
    inputs: Array2<f64>,
    eps2: f64,
    delta: f64,
    denominator: KernelDenominator,
    /// Retained eigenvalues, descending.
    sigma: Array1<f64>,
    /// N x r retained orthonormal eigenvectors.
    psi: Array2<f64>,
    /// r x p projection coefficients `<f_p, psi_a>`.
    coefficients: Array2<f64>,
    /// N x p `psi diag(1/sigma) C`, so an evaluation is one kernel row times this.
    weights: Array2<f64>,
}

impl GhInterpolant {
    /// Fits on `inputs` (N x m) and `outputs` (N x p), one sample per row.
    pub fn fit(
        inputs: ArrayView2<f64>,
        outputs: ArrayView2<f64>,
        eps2: f64,
        delta: f64,
        denominator: KernelDenominator,
    ) -> Result<GhInterpolant> {
        let n = inputs.nrows();
        if outputs.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "GH output rows",
                expected: n,
                found: outputs.nrows(),
            });
        }
        if n < 1 || inputs.ncols() < 1 {
            return Err(Error::invalid("GH needs at least one point and one input dimension"));
        }
        if !(eps2 > 0.0 && eps2.is_finite()) {
            return Err(Error::invalid("GH kernel scale must be positive"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("GH delta must lie in (0, 1)"));
        }
        if inputs.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("GH inputs and outputs must be finite"));
        }
        let inputs = inputs.as_standard_layout().into_owned();
        let k = gaussian_kernel_rows(inputs.view(), eps2 * denominator.factor());
        let (values, vectors) = linalg::symmetric_eigen(k.view())?;
        drop(k);
        let top = values[0];
        if !(top > 0.0) {
            return Err(Error::NumericalFailure("GH kernel has no positive eigenvalue".into()));
        }
        let keep = values.iter().take_while(|s| **s >= delta * top).count();
        let sigma = values.slice(ndarray::s![..keep]).to_owned();
        let psi = vectors.slice(ndarray::s![.., ..keep]).to_owned();
        let coefficients = psi.t().dot(&outputs);
        let weights = weights(&psi, &sigma, &coefficients);
        Ok(GhInterpolant {
            inputs,
            eps2,
            delta,
            denominator,
            sigma,
            psi,
            coefficients,
            weights,
        })
    }

    /// Rebuilds an interpolant from stored parts.
    pub fn from_parts(
        inputs: Array2<f64>,
        eps2: f64,
        delta: f64,
        denominator: KernelDenominator,
        sigma: Array1<f64>,
        psi: Array2<f64>,
        coefficients: Array2<f64>,
    ) -> Result<GhInterpolant> {
        let n = inputs.nrows();
        let r = sigma.len();
        if psi.dim() != (n, r) {
            return Err(Error::DimensionMismatch {
                what: "GH eigenvector rows",
                expected: n,
                found: psi.nrows(),
            });
        }
        if coefficients.nrows() != r {
            return Err(Error::DimensionMismatch {
                what: "GH coefficient rows",
                expected: r,
                found: coefficients.nrows(),
            });
        }
        let weights = weights(&psi, &sigma, &coefficients);
        Ok(GhInterpolant {
            inputs,
            eps2,
            delta,
            denominator,
            sigma,
            psi,
            coefficients,
            weights,
        })
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn eps2(&self) -> f64 {
        self.eps2
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn denominator(&self) -> KernelDenominator {
        self.denominator
    }

    pub fn sigma(&self) -> &Array1<f64> {
        &self.sigma
    }

    pub fn psi(&self) -> &Array2<f64> {
        &self.psi
    }

    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn n_modes(&self) -> usize {
        self.sigma.len()
    }

    fn kernel_row(&self, g: ArrayView1<f64>) -> Result<Array1<f64>> {
        if g.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "GH query dimension",
                expected: self.input_dim(),
                found: g.len(),
            });
        }
        let q = g.to_vec();
        let scale = self.eps2 * self.denominator.factor();
        Ok(self
            .inputs
            .rows()
            .into_iter()
            .map(|row| (-linalg::sq_dist(row.as_slice().expect("standard layout"), &q) / scale).exp())
            .collect())
    }

    /// Nyström extension `Psi_a(g) = sigma_a^{-1} sum_i K(g, g_i) psi_a(i)`.
    pub fn nystrom_extend(&self, g: ArrayView1<f64>) -> Result<Array1<f64>> {
        let k = self.kernel_row(g)?;
        Ok(self.psi.t().dot(&k) / &self.sigma)
    }

    /// `sum_a c_{a,p} Psi_a(g)` for every output `p`.
    pub fn evaluate(&self, g: ArrayView1<f64>) -> Result<Array1<f64>> {
        let k = self.kernel_row(g)?;
        Ok(self.weights.t().dot(&k))
    }

    /// Evaluates at every row of `queries` (M x m); returns M x p.
    pub fn evaluate_batch(&self, queries: ArrayView2<f64>) -> Result<Array2<f64>> {
        if queries.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "GH query dimension",
                expected: self.input_dim(),
                found: queries.ncols(),
            });
        }
        let mut out = Array2::zeros((queries.nrows(), self.output_dim()));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(queries.axis_iter(Axis(0)).into_par_iter())
            .try_for_each(|(mut o, q)| {
                o.assign(&self.evaluate(q)?);
                Ok::<(), Error>(())
            })?;
        Ok(out)
    }

    /// The truncated projection `P_delta f` at the training points (N x p).
    pub fn training_projection(&self) -> Array2<f64> {
        self.psi.dot(&self.coefficients)
    }
}

fn weights(psi: &Array2<f64>, sigma: &Array1<f64>, coefficients: &Array2<f64>) -> Array2<f64> {
    let mut scaled = coefficients.clone();
    for (mut row, s) in scaled.rows_mut().into_iter().zip(sigma.iter()) {
        row.mapv_inplace(|v| v / s);
    }
    psi.dot(&scaled)
}

/// `eps2_factor` times the median squared pairwise distance between rows.
pub fn latent_epsilon(latents: ArrayView2<f64>, eps_factor: f64) -> Result<f64> {
    if latents.nrows() < 2 {
        return Err(Error::invalid("need at least two latent points"));
    }
    let rows = latents.as_standard_layout();
    let mut d2 = linalg::pairwise_sq_distances_upper(rows.view());
    let med = linalg::median_in_place(&mut d2);
    if !(med > 0.0) {
        return Err(Error::invalid("latent points coincide; GH scale is zero"));
    }
    Ok(eps_factor * med)
}

/// Lift from latent coordinates (N x m) to ambient data (n x N, one sample
/// per column).
pub fn fit_lift(
    latents: ArrayView2<f64>,
    ambient: ArrayView2<f64>,
    config: &GhConfig,
) -> Result<GhInterpolant> {
    config.validate()?;
    if latents.ncols() == 0 {
        return Err(Error::invalid("lift needs at least one latent coordinate"));
    }
    if ambient.ncols() != latents.nrows() {
        return Err(Error::DimensionMismatch {
            what: "ambient samples",
            expected: latents.nrows(),
            found: ambient.ncols(),
        });
    }
    let eps2 = latent_epsilon(latents, config.eps_factor)?;
    GhInterpolant::fit(latents, ambient.t(), eps2, config.delta, config.denominator)
}
