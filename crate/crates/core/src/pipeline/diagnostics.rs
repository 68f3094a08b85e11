//! Sample-quality statistics and ensemble conditioning on input rows.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GhPlomModel, MIN_SAMPLES};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gh::{latent_epsilon, GhInterpolant};
use crate::linalg;

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d.min(1.0)
}

/// Coefficient of determination of `predicted` against `truth`.
pub fn r_squared(truth: ArrayView1<f64>, predicted: ArrayView1<f64>) -> f64 {
    let mean = truth.mean().unwrap_or(0.0);
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = truth
        .iter()
        .zip(predicted.iter())
        .map(|(t, p)| (t - p).powi(2))
        .sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDiagnostics {
    pub label: String,
    pub data_mean: f64,
    pub data_variance: f64,
    pub generated_mean: f64,
    pub generated_variance: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_realizations: usize,
    pub features: Vec<FeatureDiagnostics>,
    /// Largest |entry| of the closed-form KDE mean.
    pub latent_mean_error: f64,
    /// Largest |entry| of the closed-form KDE second moment minus identity.
    pub latent_second_moment_error: f64,
    /// Lift R² per output at the training points.
    pub gh_train_r2: Vec<f64>,
    /// Lift R² per output on a held-out fifth of the training set.
    pub gh_test_r2: Vec<f64>,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Compares generated realizations against the model's training data.
pub fn diagnose(model: &GhPlomModel, samples: &[DataMatrix]) -> Result<DiagnosticsReport> {
    if samples.is_empty() {
        return Err(Error::invalid("no generated samples to diagnose"));
    }
    let n = model.n_features();
    if let Some(bad) = samples.iter().find(|s| s.n_features() != n) {
        return Err(Error::DimensionMismatch {
            what: "generated feature rows",
            expected: n,
            found: bad.n_features(),
        });
    }
    let features = (0..n)
        .map(|row| {
            let data: Vec<f64> = model.training.feature(row).to_vec();
            let generated: Vec<f64> = samples.iter().flat_map(|s| s.feature(row).to_vec()).collect();
            let (dm, dv) = mean_var(&data);
            let (gm, gv) = mean_var(&generated);
            FeatureDiagnostics {
                label: model
                    .training
                    .labels()
                    .map(|l| l[row].clone())
                    .unwrap_or_else(|| format!("feature_{row}")),
                data_mean: dm,
                data_variance: dv,
                generated_mean: gm,
                generated_variance: gv,
                ks: ks_statistic(&data, &generated),
            }
        })
        .collect();

    let (mean, second) = model.kde.mixture_moments();
    let (train, test) = lift_r2(model)?;
    Ok(DiagnosticsReport {
        n_realizations: samples.len(),
        features,
        latent_mean_error: mean.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
        latent_second_moment_error: linalg::identity_error(second.view()),
        gh_train_r2: train,
        gh_test_r2: test,
    })
}

/// Training R² of the fitted lift and test R² of a refit on four fifths of
/// the samples (every fifth sample held out).
fn lift_r2(model: &GhPlomModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let latents = model.latents();
    let targets = model.lift_targets(model.training.view())?;
    let fitted = model.lift.evaluate_batch(latents.view())?;
    let train = per_output_r2(targets.t(), fitted.view());

    let n = latents.nrows();
    let test_idx: Vec<usize> = (0..n).filter(|i| i % 5 == 4).collect();
    let train_idx: Vec<usize> = (0..n).filter(|i| i % 5 != 4).collect();
    if test_idx.is_empty() || train_idx.len() < MIN_SAMPLES.min(n) {
        return Ok((train, Vec::new()));
    }
    let (refit, _) = refit_lift(model, &train_idx)?;
    let held = latents.select(Axis(0), &test_idx);
    let predicted = refit.evaluate_batch(held.view())?;
    let truth = targets.select(Axis(1), &test_idx);
    Ok((train, per_output_r2(truth.t(), predicted.view())))
}

/// Refits the lift on the training samples `idx` with the model's settings.
pub(crate) fn refit_lift(model: &GhPlomModel, idx: &[usize]) -> Result<(GhInterpolant, f64)> {
    let latents = model.latents().select(Axis(0), idx);
    let targets = model.lift_targets(model.training.view())?.select(Axis(1), idx);
    let eps2 = latent_epsilon(latents.view(), model.config.gh.eps_factor)?;
    let gh = GhInterpolant::fit(
        latents.view(),
        targets.t(),
        eps2,
        model.config.gh.delta,
        model.config.gh.denominator,
    )?;
    Ok((gh, eps2))
}

/// R² per column of two N x p matrices.
fn per_output_r2(truth: ArrayView2<f64>, predicted: ArrayView2<f64>) -> Vec<f64> {
    truth
        .columns()
        .into_iter()
        .zip(predicted.columns())
        .map(|(t, p)| r_squared(t, p))
        .collect()
}

/// Nadaraya–Watson estimate of the non-input rows given the two input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalExpectation {
    /// Rows of the samples that were averaged, ascending.
    pub rows: Vec<usize>,
    /// rows.len() x G conditional means, one column per grid point.
    pub values: Array2<f64>,
}

/// Kernel-weighted mean of every row except `inputs` over all pooled sample
/// columns, at each query point of `grid` (G x 2). Weights are
/// `exp(-|x - q|^2 / (2 h^2))` on the input rows.
pub fn conditional_expectation(
    samples: &[DataMatrix],
    inputs: (usize, usize),
    grid: ArrayView2<f64>,
    bandwidth: f64,
) -> Result<ConditionalExpectation> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("no samples to condition"))?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid("conditioning bandwidth must be positive"));
    }
    if grid.ncols() != 2 {
        return Err(Error::DimensionMismatch {
            what: "grid columns",
            expected: 2,
            found: grid.ncols(),
        });
    }
    let n = first.n_features();
    if inputs.0 >= n || inputs.1 >= n || inputs.0 == inputs.1 {
        return Err(Error::invalid("input rows must be two distinct feature rows"));
    }
    if let Some(bad) = samples.iter().find(|s| s.n_features() != n) {
        return Err(Error::DimensionMismatch {
            what: "sample feature rows",
            expected: n,
            found: bad.n_features(),
        });
    }
    let rows: Vec<usize> = (0..n).filter(|r| *r != inputs.0 && *r != inputs.1).collect();
    // pooled columns as (x1, x2, outputs...)
    let total: usize = samples.iter().map(|s| s.n_samples()).sum();
    let width = 2 + rows.len();
    let mut pooled = Vec::with_capacity(total * width);
    for s in samples {
        let v = s.values();
        for j in 0..s.n_samples() {
            pooled.push(v[[inputs.0, j]]);
            pooled.push(v[[inputs.1, j]]);
            pooled.extend(rows.iter().map(|&r| v[[r, j]]));
        }
    }
    let inv = -0.5 / (bandwidth * bandwidth);
    let columns: Vec<Result<Vec<f64>>> = grid
        .rows()
        .into_iter()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(g, q)| {
            let mut acc = vec![0.0; rows.len()];
            let mut wsum = 0.0;
            for p in pooled.chunks_exact(width) {
                let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                let w = (inv * d2).exp();
                if w == 0.0 {
                    continue;
                }
                wsum += w;
                for (a, y) in acc.iter_mut().zip(&p[2..]) {
                    *a += w * y;
                }
            }
            if wsum < 1e-12 {
                return Err(Error::InsufficientSupport { index: g });
            }
            Ok(acc.into_iter().map(|a| a / wsum).collect())
        })
        .collect();
    let mut values = Array2::zeros((rows.len(), grid.nrows()));
    for (g, col) in columns.into_iter().enumerate() {
        for (r, v) in col?.into_iter().enumerate() {
            values[[r, g]] = v;
        }
    }
    Ok(ConditionalExpectation { rows, values })
}
