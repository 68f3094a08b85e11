//! Baseline sampler: PCA coordinates, a KDE on them, and the reduced-order
//! ISDE on a diffusion basis, mapped back through the PCA.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{minmax_scale, DataMatrix, ScalingRecord, DEFAULT_SCALING_OFFSET};
use crate::density::KdeModel;
use crate::dmaps::{
    diffusion_coordinates, epsilon_from_median, kernel_matrix, normalize_markov,
    spectral_decompose, CoordinateScaling, DmapsConfig,
};
use crate::error::{Error, Result, Stage, StageExt};
use crate::isde::{simulate_reduced, IsdeConfig, ReducedBasis};
use crate::pca::{PcaModel, Retention};

/// How many diffusion-basis vectors the reduced sampler uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClassicBasis {
    /// The leading `m` eigenvectors, the trivial one included.
    Count(usize),
    /// Every eigenvector with eigenvalue at least this value (at most
    /// `dmaps.n_eigen` of them).
    EigenvalueFloor(f64),
    /// The identity basis; the sampler is then the full-order one.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicConfig {
    pub scaling_offset: f64,
    pub retention: Retention,
    /// Kernel settings for the basis; residual and selection fields are unused.
    pub dmaps: DmapsConfig,
    pub basis: ClassicBasis,
    pub sampler: IsdeConfig,
}

impl Default for ClassicConfig {
    fn default() -> Self {
        Self {
            scaling_offset: DEFAULT_SCALING_OFFSET,
            retention: Retention::default(),
            dmaps: DmapsConfig {
                n_eigen: 50,
                ..DmapsConfig::default()
            },
            basis: ClassicBasis::EigenvalueFloor(1e-3),
            sampler: IsdeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicModel {
    pub config: ClassicConfig,
    pub training: DataMatrix,
    pub scaling: ScalingRecord,
    pub pca: PcaModel,
    /// KDE on the PCA coordinates.
    pub kde: KdeModel,
    pub basis: ReducedBasis,
    /// Eigenvalues of the basis vectors (empty for the identity basis).
    pub basis_eigenvalues: Vec<f64>,
}

/// Fits the baseline on every feature row of `data`.
pub fn fit_classic(data: &DataMatrix, config: &ClassicConfig) -> Result<ClassicModel> {
    let (scaled, scaling) = minmax_scale(data, config.scaling_offset).stage(Stage::Scaling)?;
    let pca = PcaModel::fit(&scaled, config.retention).stage(Stage::Pca)?;
    let eta = pca.project(scaled.view()).stage(Stage::Pca)?;
    let kde = KdeModel::new(eta.clone()).stage(Stage::Density)?;
    config.sampler.validate(kde.s_hat()).stage(Stage::Sampling)?;
    let n = eta.ncols();

    let (g, basis_eigenvalues) = match config.basis {
        ClassicBasis::Identity => (Array2::eye(n), Vec::new()),
        ClassicBasis::Count(m) => diffusion_basis(&eta, &config.dmaps, m, None).stage(Stage::Dmaps)?,
        ClassicBasis::EigenvalueFloor(floor) => {
            diffusion_basis(&eta, &config.dmaps, config.dmaps.n_eigen, Some(floor)).stage(Stage::Dmaps)?
        }
    };
    let basis = ReducedBasis::new(g).stage(Stage::Dmaps)?;
    Ok(ClassicModel {
        config: config.clone(),
        training: data.clone(),
        scaling,
        pca,
        kde,
        basis,
        basis_eigenvalues,
    })
}

fn diffusion_basis(
    eta: &Array2<f64>,
    cfg: &DmapsConfig,
    m: usize,
    floor: Option<f64>,
) -> Result<(Array2<f64>, Vec<f64>)> {
    if m == 0 || m > eta.ncols() {
        return Err(Error::invalid(format!(
            "basis size {m} must lie in 1..={}",
            eta.ncols()
        )));
    }
    let eps = epsilon_from_median(eta.view(), cfg.eps_multiplier, cfg.median_convention)?;
    let k = kernel_matrix(eta.view(), eps, cfg.denominator)?;
    let markov = normalize_markov(k.view(), cfg.alpha_norm)?;
    drop(k);
    let (lambda, phi) = spectral_decompose(markov.p_s.view(), m)?;
    let keep = match floor {
        Some(f) => lambda.iter().take_while(|l| **l >= f).count().max(1),
        None => m,
    };
    let diag = match cfg.coordinate_scaling {
        CoordinateScaling::KernelRowSums => markov.b.view(),
        CoordinateScaling::NormalizedRowSums => markov.d.view(),
    };
    let g = diffusion_coordinates(lambda.view(), phi.view(), diag, cfg.kappa);
    let g = g.slice(ndarray::s![.., ..keep]).to_owned();
    Ok((g, lambda.iter().take(keep).copied().collect()))
}

/// Generates `n_mc` realizations with the reduced-order sampler.
pub fn generate_classic(model: &ClassicModel, n_mc: usize, seed: u64) -> Result<Vec<DataMatrix>> {
    let cfg = IsdeConfig {
        n_mc,
        seed,
        ..model.config.sampler
    };
    let reduced = simulate_reduced(&model.kde, &model.basis, &cfg).stage(Stage::Sampling)?;
    reduced
        .iter()
        .map(|z| {
            let eta = model.basis.reconstruct(z.view());
            let scaled = model.pca.reconstruct(eta.view()).stage(Stage::Pca)?;
            let values = model.scaling.invert(scaled.view()).stage(Stage::Scaling)?;
            let out = match model.training.labels() {
                Some(l) => DataMatrix::with_labels(values, l.to_vec()),
                None => DataMatrix::new(values),
            };
            out.stage(Stage::Sampling)
        })
        .collect()
}

impl ClassicModel {
    /// Reduced coordinates of the training data, `eta a`.
    pub fn training_reduced(&self) -> Array2<f64> {
        self.basis.project(self.kde.centers().view())
    }

    pub fn basis_dim(&self) -> usize {
        self.basis.g().len_of(Axis(1))
    }
}
