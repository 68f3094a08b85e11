use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::DataMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_SCALING_OFFSET: f64 = 1e-9;

/// Per-feature min-max ranges plus the additive offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub offset: f64,
}

impl ScalingRecord {
    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    pub fn is_degenerate(&self, row: usize) -> bool {
        self.max[row] == self.min[row]
    }

    /// Maps each feature through `(x - min) / (max - min) + offset`.
    pub fn apply(&self, values: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rows(values.nrows())?;
        let mut out = values.to_owned();
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            let (lo, range) = (self.min[k], self.max[k] - self.min[k]);
            row.mapv_inplace(|x| (x - lo) / range + self.offset);
        }
        Ok(out)
    }

    /// Inverse of [`ScalingRecord::apply`].
    pub fn invert(&self, values: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rows(values.nrows())?;
        let mut out = values.to_owned();
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            let (lo, range) = (self.min[k], self.max[k] - self.min[k]);
            row.mapv_inplace(|y| (y - self.offset) * range + lo);
        }
        Ok(out)
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.n_features() {
            return Err(Error::DimensionMismatch {
                what: "scaled feature rows",
                expected: self.n_features(),
                found: rows,
            });
        }
        Ok(())
    }
}

/// Min-max scales every feature row of `data`.
///
/// The offset is added outside the ratio. Zero-range rows are rejected with
/// [`Error::DegenerateFeature`] since no offset can repair that denominator.
pub fn minmax_scale(data: &DataMatrix, offset: f64) -> Result<(DataMatrix, ScalingRecord)> {
    if !(offset >= 0.0 && offset.is_finite()) {
        return Err(Error::invalid("scaling offset must be finite and >= 0"));
    }
    let mut min = Vec::with_capacity(data.n_features());
    let mut max = Vec::with_capacity(data.n_features());
    for (k, row) in data.values().rows().into_iter().enumerate() {
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            return Err(Error::DegenerateFeature { row: k, value: lo });
        }
        min.push(lo);
        max.push(hi);
    }
    let record = ScalingRecord { min, max, offset };
    let mut scaled = DataMatrix::new(record.apply(data.view())?)?;
    scaled.set_labels(data.labels().map(<[String]>::to_vec))?;
    Ok((scaled, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scales_to_unit_interval() {
        let d = DataMatrix::new(array![[2.0, 4.0, 6.0]]).unwrap();
        let (s, _) = minmax_scale(&d, 0.0).unwrap();
        assert_eq!(s.values(), &array![[0.0, 0.5, 1.0]]);
    }

    #[test]
    fn unit_row_unchanged() {
        let d = DataMatrix::new(array![[0.0, 0.25, 1.0]]).unwrap();
        let (s, _) = minmax_scale(&d, 0.0).unwrap();
        assert_eq!(s.values(), d.values());
    }

    #[test]
    fn offset_is_additive() {
        let d = DataMatrix::new(array![[2.0, 4.0, 6.0]]).unwrap();
        let (s, _) = minmax_scale(&d, 0.5).unwrap();
        assert_eq!(s.values(), &array![[0.5, 1.0, 1.5]]);
    }

    #[test]
    fn constant_row_is_degenerate() {
        let d = DataMatrix::new(array![[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]).unwrap();
        match minmax_scale(&d, 1e-9) {
            Err(Error::DegenerateFeature { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected DegenerateFeature, got {other:?}"),
        }
    }
}
