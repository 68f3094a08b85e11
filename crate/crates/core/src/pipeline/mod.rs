//! End-to-end generative model: scale, embed, select, whiten, estimate the
//! latent density, sample it with the ISDE and lift back to ambient space.

mod classic;
mod diagnostics;
mod persist;

pub use classic::{fit_classic, generate_classic, ClassicBasis, ClassicConfig, ClassicModel};
pub use diagnostics::{
    conditional_expectation, diagnose, ks_statistic, r_squared, ConditionalExpectation,
    DiagnosticsReport, FeatureDiagnostics,
};
pub use persist::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{minmax_scale, DataMatrix, ScalingRecord, DEFAULT_SCALING_OFFSET};
use crate::density::KdeModel;
use crate::dmaps::{self, DmapsConfig, DmapsModel};
use crate::error::{Error, Result, Stage, StageExt};
use crate::gh::{fit_lift, GhConfig, GhInterpolant};
use crate::isde::{simulate_full, IsdeConfig};
use crate::linalg;
use crate::pca::{PcaModel, Retention};

/// Smallest dataset the pipeline accepts.
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub scaling_offset: f64,
    /// PCA on the embedded features before diffusion maps; off by default.
    pub pca: Option<Retention>,
    pub dmaps: DmapsConfig,
    /// Standardize the selected latents before the density estimate.
    pub whiten: bool,
    pub gh: GhConfig,
    /// Sampler settings; `n_mc` and `seed` are overridden per generate call.
    pub sampler: IsdeConfig,
    /// Include rows labelled as inputs in the embedding.
    pub embed_inputs: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            scaling_offset: DEFAULT_SCALING_OFFSET,
            pca: None,
            dmaps: DmapsConfig::default(),
            whiten: true,
            gh: GhConfig::default(),
            sampler: IsdeConfig::default(),
            embed_inputs: false,
        }
    }
}

/// Affine standardization of the selected latents: `z = L^{-1} (g - mean)`
/// with `L` the Cholesky factor of their covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    pub mean: Array1<f64>,
    /// Lower-triangular factor, row-major m x m.
    pub factor: Array2<f64>,
}

impl Whitening {
    pub fn identity(m: usize) -> Whitening {
        Whitening {
            mean: Array1::zeros(m),
            factor: Array2::eye(m),
        }
    }

    /// Fits on `latents` (N x m, one point per row).
    pub fn fit(latents: ArrayView2<f64>) -> Result<Whitening> {
        let (_, cov) = linalg::mean_and_covariance(latents.t());
        let m = cov.nrows();
        let mut l = cov.as_standard_layout().into_owned().into_raw_vec_and_offset().0;
        if !linalg::cholesky_in_place(&mut l, m) {
            return Err(Error::NumericalFailure(
                "selected latent coordinates have a singular covariance".into(),
            ));
        }
        let mut factor = Array2::from_shape_vec((m, m), l).expect("square");
        for r in 0..m {
            for c in (r + 1)..m {
                factor[[r, c]] = 0.0;
            }
        }
        Ok(Whitening {
            mean: latents.mean_axis(Axis(0)).expect("non-empty"),
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// N x m latents to N x m standardized coordinates.
    pub fn whiten(&self, latents: ArrayView2<f64>) -> Array2<f64> {
        let m = self.dim();
        let mut out = &latents - &self.mean;
        for mut row in out.rows_mut() {
            // forward substitution with L
            for r in 0..m {
                let mut v = row[r];
                for c in 0..r {
                    v -= self.factor[[r, c]] * row[c];
                }
                row[r] = v / self.factor[[r, r]];
            }
        }
        out
    }

    /// Inverse of [`Whitening::whiten`].
    pub fn unwhiten(&self, z: ArrayView2<f64>) -> Array2<f64> {
        z.dot(&self.factor.t()) + &self.mean
    }
}

/// Fitted end-to-end generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct GhPlomModel {
    pub config: FitConfig,
    /// Training data as given, kept for diagnostics.
    pub training: DataMatrix,
    pub scaling: ScalingRecord,
    /// Rows fed to the embedding, ascending.
    pub embed_rows: Vec<usize>,
    /// Remaining rows, reproduced only through the lift.
    pub other_rows: Vec<usize>,
    pub pca: Option<PcaModel>,
    pub dmaps: DmapsModel,
    pub whitening: Whitening,
    pub kde: KdeModel,
    pub lift: GhInterpolant,
}

impl GhPlomModel {
    pub fn n_features(&self) -> usize {
        self.training.n_features()
    }

    pub fn n_samples(&self) -> usize {
        self.training.n_samples()
    }

    pub fn latent_dim(&self) -> usize {
        self.dmaps.selected.len()
    }

    /// Selected latents of the training set (N x m).
    pub fn latents(&self) -> Array2<f64> {
        self.dmaps.selected_coordinates()
    }

    /// Lift outputs for `data` (n_out x N): the embedded rows (in PCA
    /// coordinates when PCA is active) followed by the remaining scaled rows.
    pub fn lift_targets(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        let scaled = self.scaling.apply(data)?;
        lift_targets(&scaled, &self.embed_rows, &self.other_rows, self.pca.as_ref())
    }

    /// Maps lift outputs (N x n_out) back to data units (n x N).
    pub fn assemble(&self, lifted: ArrayView2<f64>) -> Result<DataMatrix> {
        let n_embed_out = match &self.pca {
            Some(p) => p.n_components(),
            None => self.embed_rows.len(),
        };
        let lifted = lifted.t();
        let embed_block = lifted.slice(ndarray::s![..n_embed_out, ..]);
        let embed = match &self.pca {
            Some(p) => p.reconstruct(embed_block)?,
            None => embed_block.to_owned(),
        };
        let mut scaled = Array2::zeros((self.n_features(), lifted.ncols()));
        for (k, &row) in self.embed_rows.iter().enumerate() {
            scaled.row_mut(row).assign(&embed.row(k));
        }
        for (k, &row) in self.other_rows.iter().enumerate() {
            scaled.row_mut(row).assign(&lifted.row(n_embed_out + k));
        }
        let values = self.scaling.invert(scaled.view())?;
        match self.training.labels() {
            Some(l) => DataMatrix::with_labels(values, l.to_vec()),
            None => DataMatrix::new(values),
        }
    }
}

fn lift_targets(
    scaled: &Array2<f64>,
    embed_rows: &[usize],
    other_rows: &[usize],
    pca: Option<&PcaModel>,
) -> Result<Array2<f64>> {
    let embed = scaled.select(Axis(0), embed_rows);
    let embed = match pca {
        Some(p) => p.project(embed.view())?,
        None => embed,
    };
    let others = scaled.select(Axis(0), other_rows);
    Ok(ndarray::concatenate(Axis(0), &[embed.view(), others.view()]).expect("same sample count"))
}

/// Rows used for the embedding, and the rest.
pub(crate) fn split_rows(data: &DataMatrix, embed_inputs: bool) -> Result<(Vec<usize>, Vec<usize>)> {
    let inputs = if embed_inputs { Vec::new() } else { data.input_rows() };
    let embed: Vec<usize> = (0..data.n_features()).filter(|r| !inputs.contains(r)).collect();
    if embed.is_empty() {
        return Err(Error::invalid("every feature row is an input row; nothing to embed"));
    }
    Ok((embed, inputs))
}

/// Scaled data, row split and optional PCA, ready for the embedding.
struct Prepared {
    scaled: Array2<f64>,
    scaling: ScalingRecord,
    embed_rows: Vec<usize>,
    other_rows: Vec<usize>,
    pca: Option<PcaModel>,
    /// Embedded points, one per column.
    points: Array2<f64>,
}

fn prepare(data: &DataMatrix, config: &FitConfig) -> Result<Prepared> {
    config.dmaps.validate().stage(Stage::Dmaps)?;
    let (scaled, scaling) = minmax_scale(data, config.scaling_offset).stage(Stage::Scaling)?;
    let scaled = scaled.into_values();
    let (embed_rows, other_rows) = split_rows(data, config.embed_inputs).stage(Stage::Scaling)?;

    let embed = scaled.select(Axis(0), &embed_rows);
    let pca = match config.pca {
        Some(retention) => Some(PcaModel::fit_view(embed.view(), retention).stage(Stage::Pca)?),
        None => None,
    };
    let points = match &pca {
        Some(p) => p.project(embed.view()).stage(Stage::Pca)?,
        None => embed,
    };
    Ok(Prepared {
        scaled,
        scaling,
        embed_rows,
        other_rows,
        pca,
        points,
    })
}

/// The diffusion-maps stage alone: spectrum, residuals and selection for
/// `data` under `config`, without the density or lift.
pub fn embedding(data: &DataMatrix, config: &FitConfig) -> Result<DmapsModel> {
    let prepared = prepare(data, config)?;
    DmapsModel::fit(prepared.points.view(), &config.dmaps).stage(Stage::Dmaps)
}

/// Leading diffusion-maps eigenvalues of `data` under `config`.
pub fn spectrum(data: &DataMatrix, config: &FitConfig) -> Result<Array1<f64>> {
    let prepared = prepare(data, config)?;
    dmaps::markov_spectrum(prepared.points.view(), &config.dmaps).stage(Stage::Dmaps)
}

/// Fits the generative model on `data` (features x samples).
pub fn fit(data: &DataMatrix, config: &FitConfig) -> Result<GhPlomModel> {
    if data.n_samples() < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            data.n_samples()
        )))
        .stage(Stage::Scaling);
    }
    config.gh.validate().stage(Stage::Lift)?;
    let Prepared {
        scaled,
        scaling,
        embed_rows,
        other_rows,
        pca,
        points,
    } = prepare(data, config)?;

    let dmaps = DmapsModel::fit(points.view(), &config.dmaps).stage(Stage::Dmaps)?;
    if dmaps.selected.is_empty() {
        return Err(Error::NumericalFailure("no coordinate selected".into())).stage(Stage::Selection);
    }
    let latents = dmaps.selected_coordinates();

    let whitening = if config.whiten {
        Whitening::fit(latents.view()).stage(Stage::Whitening)?
    } else {
        Whitening::identity(latents.ncols())
    };
    let z = whitening.whiten(latents.view());
    let kde = KdeModel::new(z.t().to_owned()).stage(Stage::Density)?;
    if config.whiten {
        moment_gate(&kde).stage(Stage::Density)?;
    }
    config.sampler.validate(kde.s_hat()).stage(Stage::Sampling)?;

    let targets =
        lift_targets(&scaled, &embed_rows, &other_rows, pca.as_ref()).stage(Stage::Lift)?;
    let lift = fit_lift(latents.view(), targets.view(), &config.gh).stage(Stage::Lift)?;

    Ok(GhPlomModel {
        config: config.clone(),
        training: data.clone(),
        scaling,
        embed_rows,
        other_rows,
        pca,
        dmaps,
        whitening,
        kde,
        lift,
    })
}

/// Closed-form KDE moments on whitened latents must be zero mean and
/// identity second moment.
fn moment_gate(kde: &KdeModel) -> Result<()> {
    let (mean, second) = kde.mixture_moments();
    let mean_err = mean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let second_err = linalg::identity_error(second.view());
    if mean_err > 1e-10 || second_err > 1e-8 {
        return Err(Error::NumericalFailure(format!(
            "KDE moment check failed: |mean| = {mean_err:e}, |second - I| = {second_err:e}"
        )));
    }
    Ok(())
}

/// Generates `n_mc` realizations (each n x N, in data units).
pub fn generate(model: &GhPlomModel, n_mc: usize, seed: u64) -> Result<Vec<DataMatrix>> {
    let latent = generate_latent(model, n_mc, seed)?;
    latent
        .iter()
        .map(|g| {
            let lifted = model.lift.evaluate_batch(g.view()).stage(Stage::Lift)?;
            model.assemble(lifted.view()).stage(Stage::Lift)
        })
        .collect()
}

/// Sampled latent realizations in un-whitened coordinates (each N x m).
pub fn generate_latent(model: &GhPlomModel, n_mc: usize, seed: u64) -> Result<Vec<Array2<f64>>> {
    let cfg = IsdeConfig {
        n_mc,
        seed,
        ..model.config.sampler
    };
    let samples = simulate_full(&model.kde, &cfg).stage(Stage::Sampling)?;
    Ok(samples
        .iter()
        .map(|z| model.whitening.unwhiten(z.t()))
        .collect())
}
