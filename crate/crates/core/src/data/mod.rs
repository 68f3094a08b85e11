//! Ambient datasets: the `DataMatrix` container, Hermite benchmark families,
//! min-max scaling and matrix persistence.

mod hermite;
pub mod io;
mod scaling;

pub use hermite::{
    generate_hermite_dataset, hermite_polynomial, hermite_tensor, normalized_hermite,
    HermiteDatasetSpec, HermiteFamily, MAX_HERMITE_DEGREE,
};
pub use io::{load_matrix, save_matrix, CsvOrientation, MatrixFormat};
pub use scaling::{minmax_scale, ScalingRecord, DEFAULT_SCALING_OFFSET};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Label prefix marking auxiliary input rows (e.g. the Hermite inputs x1, x2).
///
/// Input rows travel with the data through scaling, lifting and generation
/// but are left out of the manifold embedding unless a fit asks for them.
pub const INPUT_LABEL_PREFIX: &str = "input:";

/// Dataset in `[x_d]` orientation: one feature per row, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    labels: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        Self::validate(&values)?;
        Ok(Self {
            values,
            labels: None,
        })
    }

    pub fn with_labels(values: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        let mut m = Self::new(values)?;
        m.set_labels(Some(labels))?;
        Ok(m)
    }

    fn validate(values: &Array2<f64>) -> Result<()> {
        if values.nrows() < 1 {
            return Err(Error::invalid("data matrix needs at least one feature row"));
        }
        if values.ncols() < 2 {
            return Err(Error::invalid("data matrix needs at least two samples"));
        }
        if let Some(((r, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry {v} at feature {r}, sample {c}"
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Number of features `n`.
    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    /// Number of samples `N`.
    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn feature(&self, row: usize) -> ArrayView1<'_, f64> {
        self.values.row(row)
    }

    pub fn sample(&self, col: usize) -> ArrayView1<'_, f64> {
        self.values.column(col)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Option<Vec<String>>) -> Result<()> {
        if let Some(l) = &labels {
            if l.len() != self.n_features() {
                return Err(Error::DimensionMismatch {
                    what: "feature labels",
                    expected: self.n_features(),
                    found: l.len(),
                });
            }
        }
        self.labels = labels;
        Ok(())
    }

    /// Rows whose label carries [`INPUT_LABEL_PREFIX`].
    pub fn input_rows(&self) -> Vec<usize> {
        match &self.labels {
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter(|(_, l)| l.starts_with(INPUT_LABEL_PREFIX))
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Copy of the listed rows (labels follow).
    pub fn select_rows(&self, rows: &[usize]) -> Result<DataMatrix> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_features()) {
            return Err(Error::invalid(format!(
                "row {bad} out of range for {} features",
                self.n_features()
            )));
        }
        let values = self.values.select(Axis(0), rows);
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r].clone()).collect());
        let mut out = DataMatrix::new(values)?;
        out.labels = labels;
        Ok(out)
    }

    /// Copy of the listed sample columns.
    pub fn select_samples(&self, cols: &[usize]) -> Result<DataMatrix> {
        let values = self.values.select(Axis(1), cols);
        let mut out = DataMatrix::new(values)?;
        out.labels = self.labels.clone();
        Ok(out)
    }
}
