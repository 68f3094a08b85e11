//! Diffusion maps with density normalization, scaled diffusion coordinates and
//! parsimonious (non-harmonic) eigenvector selection.
//!
//! Eigenvector indices are zero-based throughout: index 0 is the trivial
//! eigenvector with eigenvalue 1 and is never selected.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// How the median pairwise distance turns into the kernel scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MedianConvention {
    /// `eps = multiplier * median(|x_i - x_j|^2)`.
    #[default]
    SquaredDistances,
    /// `eps = multiplier * median(|x_i - x_j|)^2`.
    DistancesThenSquare,
}

/// Denominator in the Gaussian kernel exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelDenominator {
    /// `exp(-d^2 / (4 eps))`, the diffusion-maps kernel.
    FourEps,
    /// `exp(-d^2 / (2 eps))`, the latent-harmonics kernel.
    TwoEps,
}

impl KernelDenominator {
    pub fn factor(self) -> f64 {
        match self {
            KernelDenominator::FourEps => 4.0,
            KernelDenominator::TwoEps => 2.0,
        }
    }
}

/// Diagonal used to turn symmetric eigenvectors into diffusion coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CoordinateScaling {
    /// `g = lambda^kappa * b^{-1/2} phi` with `b` the row sums of `K`.
    #[default]
    KernelRowSums,
    /// `g = lambda^kappa * d^{-1/2} phi` with `d` the row sums of the
    /// normalized kernel; these are right eigenvectors of `P`.
    NormalizedRowSums,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    /// The `m` largest residuals.
    TopM(usize),
    /// Every residual at least `theta * max(r)`.
    RatioThreshold(f64),
}

impl Default for Selection {
    fn default() -> Self {
        Selection::RatioThreshold(0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmapsConfig {
    pub eps_multiplier: f64,
    pub median_convention: MedianConvention,
    pub denominator: KernelDenominator,
    /// Density-normalization exponent; 1 factors out the sampling density.
    pub alpha_norm: f64,
    pub kappa: u32,
    /// Number of eigenpairs kept, the trivial one included.
    pub n_eigen: usize,
    pub coordinate_scaling: CoordinateScaling,
    pub regression_bandwidth_factor: f64,
    /// Ridge on the local slopes, relative to the mean weighted predictor
    /// second moment.
    pub regression_ridge: f64,
    /// Local slope directions with weighted variance below this fraction of
    /// the largest are dropped (truncated pseudo-inverse).
    pub regression_rcond: f64,
    pub selection: Selection,
}

impl Default for DmapsConfig {
    fn default() -> Self {
        Self {
            eps_multiplier: 15.0,
            median_convention: MedianConvention::SquaredDistances,
            denominator: KernelDenominator::FourEps,
            alpha_norm: 1.0,
            kappa: 1,
            n_eigen: 10,
            coordinate_scaling: CoordinateScaling::KernelRowSums,
            regression_bandwidth_factor: 1.0 / 3.0,
            regression_ridge: DEFAULT_REGRESSION_RIDGE,
            regression_rcond: DEFAULT_REGRESSION_RCOND,
            selection: Selection::default(),
        }
    }
}

impl DmapsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_multiplier > 0.0 && self.eps_multiplier.is_finite()) {
            return Err(Error::invalid("eps multiplier must be positive"));
        }
        if ![0.0, 0.5, 1.0].contains(&self.alpha_norm) {
            return Err(Error::invalid("alpha_norm must be 0, 0.5 or 1"));
        }
        if self.n_eigen < 2 {
            return Err(Error::invalid("need at least two eigenpairs"));
        }
        if !(self.regression_bandwidth_factor > 0.0) {
            return Err(Error::invalid("regression bandwidth factor must be positive"));
        }
        if !(self.regression_ridge >= 0.0 && self.regression_ridge.is_finite()) {
            return Err(Error::invalid("regression ridge must be non-negative"));
        }
        if !(self.regression_rcond >= 0.0 && self.regression_rcond < 1.0) {
            return Err(Error::invalid("regression rcond must lie in [0, 1)"));
        }
        match self.selection {
            Selection::TopM(0) => Err(Error::invalid("top_m must be >= 1")),
            Selection::RatioThreshold(t) if !(t > 0.0 && t <= 1.0) => {
                Err(Error::invalid("ratio threshold must lie in (0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// Kernel scale from the median pairwise (squared) distance.
///
/// `points` holds one point per column.
pub fn epsilon_from_median(
    points: ArrayView2<f64>,
    multiplier: f64,
    convention: MedianConvention,
) -> Result<f64> {
    if points.ncols() < 2 {
        return Err(Error::invalid("need at least two points"));
    }
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(Error::invalid("multiplier must be positive"));
    }
    let rows = linalg::points_as_rows(points);
    let mut d2 = linalg::pairwise_sq_distances_upper(rows.view());
    let median = match convention {
        MedianConvention::SquaredDistances => linalg::median_in_place(&mut d2),
        MedianConvention::DistancesThenSquare => {
            d2.iter_mut().for_each(|v| *v = v.sqrt());
            linalg::median_in_place(&mut d2).powi(2)
        }
    };
    if !(median > 0.0) {
        return Err(Error::invalid(
            "median pairwise distance is zero (points coincide)",
        ));
    }
    Ok(multiplier * median)
}

/// Gaussian kernel `K_ij = exp(-|x_i - x_j|^2 / (c eps))` over the columns of `points`.
pub fn kernel_matrix(
    points: ArrayView2<f64>,
    eps: f64,
    denominator: KernelDenominator,
) -> Result<Array2<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("kernel scale must be positive"));
    }
    let rows = linalg::points_as_rows(points);
    Ok(gaussian_kernel_rows(rows.view(), eps * denominator.factor()))
}

/// `exp(-|r_i - r_j|^2 / scale)` over the rows of `rows`. Exactly symmetric
/// with a unit diagonal.
pub(crate) fn gaussian_kernel_rows(rows: ArrayView2<f64>, scale: f64) -> Array2<f64> {
    let n = rows.nrows();
    let rows = rows.as_standard_layout();
    let mut k = Array2::zeros((n, n));
    k.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut out)| {
            let a = rows.row(i);
            let a = a.as_slice().expect("standard layout");
            for j in 0..n {
                let b = rows.row(j);
                out[j] = (-linalg::sq_dist(a, b.as_slice().expect("standard layout")) / scale).exp();
            }
        });
    // sq_dist is symmetric in its arguments bit for bit, so K is too
    k
}

#[derive(Debug, Clone)]
pub struct MarkovNormalization {
    pub k_tilde: Array2<f64>,
    /// Row sums of `K`.
    pub b: Array1<f64>,
    /// Row sums of the normalized kernel.
    pub d: Array1<f64>,
    /// Row-stochastic `D^{-1} K~`.
    pub p: Array2<f64>,
    /// Symmetric `D^{-1/2} K~ D^{-1/2}`.
    pub p_s: Array2<f64>,
}

/// Density normalization `K~ = B^{-a} K B^{-a}` followed by the Markov and
/// symmetric conjugate matrices.
pub fn normalize_markov(k: ArrayView2<f64>, alpha_norm: f64) -> Result<MarkovNormalization> {
    let n = k.nrows();
    if n != k.ncols() {
        return Err(Error::DimensionMismatch {
            what: "kernel columns",
            expected: n,
            found: k.ncols(),
        });
    }
    let b = k.sum_axis(Axis(1));
    if b.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NumericalFailure("non-positive kernel row sum".into()));
    }
    let bpow = b.mapv(|v| v.powf(-alpha_norm));
    let mut k_tilde = k.to_owned();
    for ((i, j), v) in k_tilde.indexed_iter_mut() {
        *v *= bpow[i] * bpow[j];
    }
    let d = k_tilde.sum_axis(Axis(1));
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NumericalFailure(
            "non-positive normalized row sum".into(),
        ));
    }
    let mut p = k_tilde.clone();
    for (mut row, di) in p.rows_mut().into_iter().zip(d.iter()) {
        row.mapv_inplace(|v| v / di);
    }
    let d_isqrt = d.mapv(|v| v.sqrt().recip());
    let mut p_s = k_tilde.clone();
    for ((i, j), v) in p_s.indexed_iter_mut() {
        *v *= d_isqrt[i] * d_isqrt[j];
    }
    // enforce exact symmetry against rounding in the two-sided scaling
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (p_s[[i, j]] + p_s[[j, i]]);
            p_s[[i, j]] = avg;
            p_s[[j, i]] = avg;
        }
    }
    Ok(MarkovNormalization {
        k_tilde,
        b,
        d,
        p,
        p_s,
    })
}

/// Leading `n_eigen` eigenpairs of the symmetric conjugate, descending.
pub fn spectral_decompose(p_s: ArrayView2<f64>, n_eigen: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    if n_eigen == 0 {
        return Err(Error::invalid("n_eigen must be positive"));
    }
    linalg::symmetric_eigen_top(p_s, n_eigen)
}

/// `g_a = lambda_a^kappa * diag^{-1/2} phi_a`, one coordinate per column.
pub fn diffusion_coordinates(
    eigenvalues: ArrayView1<f64>,
    eigenvectors: ArrayView2<f64>,
    diag: ArrayView1<f64>,
    kappa: u32,
) -> Array2<f64> {
    let mut g = eigenvectors.to_owned();
    let kappa = i32::try_from(kappa).unwrap_or(i32::MAX);
    for (mut col, lam) in g.columns_mut().into_iter().zip(eigenvalues.iter()) {
        let s = lam.powi(kappa);
        col.iter_mut()
            .zip(diag.iter())
            .for_each(|(v, di)| *v *= s / di.sqrt());
    }
    g
}

/// Normalized leave-one-out local linear regression residuals.
///
/// `columns` is N x m with the first non-trivial eigenvector in column 0.
/// Returns `r` of length m with `r[0] = 1`; `r[k]` measures how poorly column
/// `k` is predicted from columns `0..k` by a locally weighted linear fit with
/// Gaussian weights `exp(-|Δ|^2 / h^2)`, where `h` is `bandwidth_factor` times
/// the median pairwise predictor distance. Predictor columns are rescaled to
/// unit RMS before distances are taken. `ridge` damps the local slopes,
/// relative to the mean weighted second moment of the predictors.
pub fn parsimonious_residuals(
    columns: ArrayView2<f64>,
    bandwidth_factor: f64,
    ridge: f64,
    rcond: f64,
) -> Result<Vec<f64>> {
    let (n, m) = columns.dim();
    if m == 0 {
        return Err(Error::invalid("need at least one eigenvector column"));
    }
    if n < 3 {
        return Err(Error::invalid("need at least three points for local regression"));
    }
    if !(bandwidth_factor > 0.0) {
        return Err(Error::invalid("bandwidth factor must be positive"));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge must be non-negative"));
    }
    if !(0.0..1.0).contains(&rcond) {
        return Err(Error::invalid("rcond must lie in [0, 1)"));
    }
    let mut residuals = vec![1.0; m];
    let standardized = standardize_columns(columns);
    residuals
        .par_iter_mut()
        .enumerate()
        .skip(1)
        .try_for_each(|(k, r)| {
            *r = loo_residual(
                standardized.slice(ndarray::s![.., ..k]),
                columns.column(k),
                bandwidth_factor,
                ridge,
                rcond,
            )?;
            Ok::<(), Error>(())
        })?;
    Ok(residuals)
}

fn standardize_columns(columns: ArrayView2<f64>) -> Array2<f64> {
    let mut out = columns.to_owned();
    for mut col in out.columns_mut() {
        let rms = (col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64).sqrt();
        if rms > 0.0 {
            col.mapv_inplace(|v| v / rms);
        }
    }
    out
}

/// Default slope ridge; just enough to keep singular neighbourhoods solvable.
pub const DEFAULT_REGRESSION_RIDGE: f64 = 1e-10;

/// Default relative cutoff on local slope directions.
pub const DEFAULT_REGRESSION_RCOND: f64 = 1e-3;

fn loo_residual(
    predictors: ArrayView2<f64>,
    target: ArrayView1<f64>,
    factor: f64,
    ridge: f64,
    rcond: f64,
) -> Result<f64> {
    let (n, p) = predictors.dim();
    let x = predictors.as_standard_layout();
    let mut d2 = linalg::pairwise_sq_distances_upper(x.view());
    let mut med_dist = d2.clone();
    med_dist.iter_mut().for_each(|v| *v = v.sqrt());
    let h = factor * linalg::median_in_place(&mut med_dist);
    if !(h > 0.0) {
        return Err(Error::NumericalFailure(
            "predictor coordinates coincide; local regression bandwidth is zero".into(),
        ));
    }
    let inv_h2 = 1.0 / (h * h);
    let mut w = Array2::<f64>::zeros((n, n));
    {
        let mut idx = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                w[[i, j]] = d2[idx];
                w[[j, i]] = d2[idx];
                idx += 1;
            }
        }
    }
    // Weights exp(-d^2/h^2), rescaled per held-out point by its nearest
    // neighbour; a common factor leaves the weighted fit unchanged and keeps
    // isolated points from underflowing to all-zero weights.
    for i in 0..n {
        let mut row = w.row_mut(i);
        let nearest = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min);
        for (j, v) in row.iter_mut().enumerate() {
            *v = if j == i { 0.0 } else { (-(*v - nearest) * inv_h2).exp() };
        }
    }
    d2.clear();

    let dim = p + 1;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut a = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut cov = Array2::<f64>::zeros((p, p));
    let mut cov_rhs = vec![0.0; p];
    let mut slope = vec![0.0; p];
    for i in 0..n {
        a.iter_mut().for_each(|v| *v = 0.0);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        let xi = x.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let wij = w[[i, j]];
            if wij == 0.0 {
                continue;
            }
            // design row centred on the held-out point: [1, x_j - x_i]
            z[0] = 1.0;
            for c in 0..p {
                z[c + 1] = x[[j, c]] - xi[c];
            }
            let yj = target[j];
            for r in 0..dim {
                let wz = wij * z[r];
                rhs[r] += wz * yj;
                for c in 0..=r {
                    a[r * dim + c] += wz * z[c];
                }
            }
        }
        let s0 = a[0];
        if !(s0 > 0.0) {
            return Err(Error::NumericalFailure(format!(
                "no neighbours with positive weight around point {i}"
            )));
        }
        // eliminate the intercept: slopes solve the weighted predictor
        // covariance against the weighted target covariance
        for r in 0..p {
            let sr = a[(r + 1) * dim];
            cov_rhs[r] = rhs[r + 1] - sr * rhs[0] / s0;
            for c in 0..=r {
                let v = a[(r + 1) * dim + c + 1] - sr * a[(c + 1) * dim] / s0;
                cov[[r, c]] = v;
                cov[[c, r]] = v;
            }
        }
        let cov_trace: f64 = (0..p).map(|r| cov[[r, r]]).sum();
        let shift = ridge * cov_trace / p as f64;
        for r in 0..p {
            cov[[r, r]] += shift;
        }
        let (values, vectors) = linalg::symmetric_eigen(cov.view())?;
        let top = values[0];
        slope.iter_mut().for_each(|v| *v = 0.0);
        if top > 0.0 {
            for (e, &val) in values.iter().enumerate() {
                if val <= rcond * top || val <= 0.0 {
                    break;
                }
                let v = vectors.column(e);
                let proj: f64 = v.iter().zip(&cov_rhs).map(|(a, b)| a * b).sum::<f64>() / val;
                for (s, ve) in slope.iter_mut().zip(v.iter()) {
                    *s += proj * ve;
                }
            }
        }
        let fitted: f64 = (0..p).map(|r| a[(r + 1) * dim] * slope[r]).sum();
        rhs[0] = (rhs[0] - fitted) / s0;
        // intercept is the prediction at the held-out point
        let err = target[i] - rhs[0];
        num += err * err;
        den += target[i] * target[i];
    }
    if !(den > 0.0) {
        return Err(Error::NumericalFailure("target eigenvector is zero".into()));
    }
    Ok((num / den).sqrt())
}

/// Positions (into `residuals`) of the selected non-harmonic directions,
/// ascending.
pub fn select_nonharmonic(residuals: &[f64], strategy: Selection) -> Result<Vec<usize>> {
    if residuals.is_empty() {
        return Err(Error::invalid("no residuals to select from"));
    }
    let mut picked: Vec<usize> = match strategy {
        Selection::TopM(m) => {
            if m == 0 || m > residuals.len() {
                return Err(Error::invalid(format!(
                    "top_m = {m} but {} residuals are available",
                    residuals.len()
                )));
            }
            let mut order: Vec<usize> = (0..residuals.len()).collect();
            order.sort_by(|&a, &b| residuals[b].total_cmp(&residuals[a]).then(a.cmp(&b)));
            order.truncate(m);
            order
        }
        Selection::RatioThreshold(theta) => {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::invalid("ratio threshold must lie in (0, 1]"));
            }
            let max = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..residuals.len())
                .filter(|&k| residuals[k] >= theta * max)
                .collect()
        }
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Leading Markov eigenvalues of `points` (one per column) under `config`,
/// without the residual regression, so any sample count >= `n_eigen` works.
pub fn markov_spectrum(points: ArrayView2<f64>, config: &DmapsConfig) -> Result<Array1<f64>> {
    config.validate()?;
    if config.n_eigen > points.ncols() {
        return Err(Error::invalid(format!(
            "n_eigen = {} exceeds the {} samples",
            config.n_eigen,
            points.ncols()
        )));
    }
    let epsilon = epsilon_from_median(points, config.eps_multiplier, config.median_convention)?;
    let k = kernel_matrix(points, epsilon, config.denominator)?;
    let markov = normalize_markov(k.view(), config.alpha_norm)?;
    Ok(spectral_decompose(markov.p_s.view(), config.n_eigen)?.0)
}

/// Fitted diffusion-maps embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DmapsModel {
    pub config: DmapsConfig,
    pub epsilon: f64,
    pub b: Array1<f64>,
    pub d: Array1<f64>,
    /// Descending eigenvalues, `eigenvalues[0] = 1`.
    pub eigenvalues: Array1<f64>,
    /// N x n_eigen orthonormal eigenvectors of the symmetric conjugate.
    pub eigenvectors: Array2<f64>,
    /// N x n_eigen diffusion coordinates.
    pub coordinates: Array2<f64>,
    /// One entry per eigenpair; entry 0 (trivial direction) is 0 and entry 1 is 1.
    pub residuals: Vec<f64>,
    /// Eigenvector indices (>= 1) of the selected non-harmonic coordinates.
    pub selected: Vec<usize>,
}

impl DmapsModel {
    /// Fits on `points` with one sample per column.
    pub fn fit(points: ArrayView2<f64>, config: &DmapsConfig) -> Result<DmapsModel> {
        config.validate()?;
        let n = points.ncols();
        if config.n_eigen > n {
            return Err(Error::invalid(format!(
                "n_eigen = {} exceeds the {n} samples",
                config.n_eigen
            )));
        }
        let epsilon = epsilon_from_median(points, config.eps_multiplier, config.median_convention)?;
        let k = kernel_matrix(points, epsilon, config.denominator)?;
        let markov = normalize_markov(k.view(), config.alpha_norm)?;
        drop(k);
        let (eigenvalues, eigenvectors) = spectral_decompose(markov.p_s.view(), config.n_eigen)?;
        let diag = match config.coordinate_scaling {
            CoordinateScaling::KernelRowSums => markov.b.view(),
            CoordinateScaling::NormalizedRowSums => markov.d.view(),
        };
        let coordinates =
            diffusion_coordinates(eigenvalues.view(), eigenvectors.view(), diag, config.kappa);

        let nontrivial = eigenvectors.slice(ndarray::s![.., 1..]);
        let r = parsimonious_residuals(
            nontrivial,
            config.regression_bandwidth_factor,
            config.regression_ridge,
            config.regression_rcond,
        )?;
        let selected = select_nonharmonic(&r, config.selection)?
            .into_iter()
            .map(|k| k + 1)
            .collect();
        let mut residuals = Vec::with_capacity(config.n_eigen);
        residuals.push(0.0);
        residuals.extend(r);

        Ok(DmapsModel {
            config: config.clone(),
            epsilon,
            b: markov.b,
            d: markov.d,
            eigenvalues,
            eigenvectors,
            coordinates,
            residuals,
            selected,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.coordinates.nrows()
    }

    /// N x m matrix of the selected diffusion coordinates.
    pub fn selected_coordinates(&self) -> Array2<f64> {
        self.coordinates.select(Axis(1), &self.selected)
    }

    /// Re-runs the selection on the stored residuals.
    pub fn reselect(&mut self, strategy: Selection) -> Result<()> {
        let picked = select_nonharmonic(&self.residuals[1..], strategy)?;
        self.selected = picked.into_iter().map(|k| k + 1).collect();
        self.config.selection = strategy;
        Ok(())
    }
}
