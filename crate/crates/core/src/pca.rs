//! Principal component preprocessing: whitened reduced coordinates and the
//! inverse map back to the ambient space.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues below this fraction of the leading one are always dropped.
pub const RELATIVE_EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Retention {
    /// Keep exactly this many components (after the eigenvalue floor).
    Count(usize),
    /// Keep the fewest components whose cumulative variance fraction reaches `tau`.
    Energy(f64),
}

impl Default for Retention {
    fn default() -> Self {
        Retention::Energy(1.0 - 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// Retained eigenvalues, descending and strictly positive.
    pub eigenvalues: Array1<f64>,
    /// n x nu matrix with orthonormal columns.
    pub eigenvectors: Array2<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn fit(data: &DataMatrix, retention: Retention) -> Result<PcaModel> {
        Self::fit_view(data.view(), retention)
    }

    pub fn fit_view(data: ArrayView2<f64>, retention: Retention) -> Result<PcaModel> {
        if data.ncols() < 2 {
            return Err(Error::invalid("PCA needs at least two samples"));
        }
        match retention {
            Retention::Count(0) => return Err(Error::invalid("retention count must be >= 1")),
            Retention::Energy(t) if !(t > 0.0 && t <= 1.0) => {
                return Err(Error::invalid("energy fraction must lie in (0, 1]"))
            }
            _ => {}
        }
        let (mean, cov) = linalg::mean_and_covariance(data);
        let total_variance = cov.diag().sum();
        let (values, vectors) = linalg::symmetric_eigen(cov.view())?;
        let leading = values[0];
        if !(leading > 0.0) {
            return Err(Error::NumericalFailure(
                "covariance has no positive eigenvalue".into(),
            ));
        }
        let floor = RELATIVE_EIGEN_FLOOR * leading;
        let admissible = values.iter().take_while(|&&v| v > floor).count();
        let keep = match retention {
            Retention::Count(c) => c.min(admissible),
            Retention::Energy(tau) => {
                let mut acc = 0.0;
                let mut keep = admissible;
                for (k, v) in values.iter().take(admissible).enumerate() {
                    acc += v;
                    if acc >= tau * total_variance {
                        keep = k + 1;
                        break;
                    }
                }
                keep
            }
        };
        Ok(PcaModel {
            mean,
            eigenvalues: values.slice(ndarray::s![..keep]).to_owned(),
            eigenvectors: vectors.slice(ndarray::s![.., ..keep]).to_owned(),
            total_variance,
        })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Retained component count `nu`.
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Fraction of total variance carried by each retained component.
    pub fn explained_variance_ratio(&self) -> Array1<f64> {
        &self.eigenvalues / self.total_variance
    }

    /// Whitened coordinates `mu^{-1/2} Phi^T (x - mean)`, nu x N.
    pub fn project(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        if data.nrows() != self.n_features() {
            return Err(Error::DimensionMismatch {
                what: "PCA input features",
                expected: self.n_features(),
                found: data.nrows(),
            });
        }
        let centered = &data - &self.mean.view().insert_axis(Axis(1));
        let mut eta = self.eigenvectors.t().dot(&centered);
        for (mut row, mu) in eta.rows_mut().into_iter().zip(self.eigenvalues.iter()) {
            let s = mu.sqrt().recip();
            row.mapv_inplace(|v| v * s);
        }
        Ok(eta)
    }

    /// Ambient points `mean + Phi mu^{1/2} eta`, n x N.
    pub fn reconstruct(&self, eta: ArrayView2<f64>) -> Result<Array2<f64>> {
        if eta.nrows() != self.n_components() {
            return Err(Error::DimensionMismatch {
                what: "PCA coordinates",
                expected: self.n_components(),
                found: eta.nrows(),
            });
        }
        let mut scaled = eta.to_owned();
        for (mut row, mu) in scaled.rows_mut().into_iter().zip(self.eigenvalues.iter()) {
            let s = mu.sqrt();
            row.mapv_inplace(|v| v * s);
        }
        Ok(self.eigenvectors.dot(&scaled) + self.mean.view().insert_axis(Axis(1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Eigenvalues of a symmetric 3x3 matrix from the characteristic
    /// polynomial via the trigonometric cubic solution.
    fn sym3_eigenvalues(a: &Array2<f64>) -> [f64; 3] {
        let p1 = a[[0, 1]].powi(2) + a[[0, 2]].powi(2) + a[[1, 2]].powi(2);
        let q = (a[[0, 0]] + a[[1, 1]] + a[[2, 2]]) / 3.0;
        let p2 = (a[[0, 0]] - q).powi(2) + (a[[1, 1]] - q).powi(2) + (a[[2, 2]] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - &(Array2::<f64>::eye(3) * q)) / p;
        let det_b = b[[0, 0]] * (b[[1, 1]] * b[[2, 2]] - b[[1, 2]] * b[[2, 1]])
            - b[[0, 1]] * (b[[1, 0]] * b[[2, 2]] - b[[1, 2]] * b[[2, 0]])
            + b[[0, 2]] * (b[[1, 0]] * b[[2, 1]] - b[[1, 1]] * b[[2, 0]]);
        let r = (det_b / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn unit_vectors_match_characteristic_polynomial() {
        let x = Array2::<f64>::eye(3);
        let model = PcaModel::fit_view(x.view(), Retention::Count(3)).unwrap();
        let (_, cov) = linalg::mean_and_covariance(x.view());
        let oracle = sym3_eigenvalues(&cov);
        // the oracle sees a double eigenvalue at 1/2 and a null one; PCA drops the null
        assert_eq!(model.n_components(), 2);
        assert!((model.eigenvalues[0] - oracle[0]).abs() < 1e-12);
        assert!((model.eigenvalues[1] - oracle[1]).abs() < 1e-12);
        assert!(oracle[2].abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_keeps_one() {
        let r1 = array![1.0, -2.0, 0.5, 3.0, -1.5];
        let x = ndarray::stack![Axis(0), r1, &r1 * 2.0];
        let model = PcaModel::fit_view(x.view(), Retention::default()).unwrap();
        assert_eq!(model.n_components(), 1);
        let back = model.reconstruct(model.project(x.view()).unwrap().view()).unwrap();
        let err = (&back - &x).mapv(f64::abs).sum() / x.mapv(f64::abs).sum();
        assert!(err < 1e-9);
    }

    #[test]
    fn projection_by_hand() {
        let x = array![[1.0, 2.0, 0.0, 4.0], [0.0, 1.0, 3.0, 1.0], [2.0, 0.0, 1.0, 5.0]];
        let model = PcaModel::fit_view(x.view(), Retention::Count(3)).unwrap();
        let col = x.column(3).to_owned();
        let eta = model.project(col.view().insert_axis(Axis(1))).unwrap();
        for k in 0..3 {
            let phi = model.eigenvectors.column(k);
            let mut acc = 0.0;
            for i in 0..3 {
                acc += phi[i] * (col[i] - model.mean[i]);
            }
            let expected = acc / model.eigenvalues[k].sqrt();
            assert!((eta[[k, 0]] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_projects_to_zero() {
        let x = array![[1.0, 2.0, 0.0, 4.0], [0.0, 1.0, 3.0, 1.0]];
        let model = PcaModel::fit_view(x.view(), Retention::default()).unwrap();
        let m = ndarray::stack![Axis(1), model.mean.view(), model.mean.view()];
        let eta = model.project(m.view()).unwrap();
        assert!(eta.iter().all(|v| v.abs() < 1e-14));
        let zero = Array2::zeros((model.n_components(), 1));
        let back = model.reconstruct(zero.view()).unwrap();
        assert!((&back.column(0) - &model.mean).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn dimension_mismatch() {
        let x = array![[1.0, 2.0, 0.0], [0.0, 1.0, 3.0]];
        let model = PcaModel::fit_view(x.view(), Retention::default()).unwrap();
        let bad = Array2::zeros((3, 2));
        assert!(matches!(model.project(bad.view()), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(model.reconstruct(bad.view()), Err(Error::DimensionMismatch { .. })));
    }
}
