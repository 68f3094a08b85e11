use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataMatrix, INPUT_LABEL_PREFIX};
use crate::error::{Error, Result};
use crate::rng::{self, labels};

/// Highest degree accepted by the Hermite evaluators.
pub const MAX_HERMITE_DEGREE: u32 = 20;

/// Probabilists' Hermite polynomial `He_degree(x)` by the three-term recursion
/// `h_{n+1} = x h_n - n h_{n-1}`.
pub fn hermite_polynomial(degree: u32, x: f64) -> Result<f64> {
    if degree > MAX_HERMITE_DEGREE {
        return Err(Error::invalid(format!(
            "Hermite degree {degree} exceeds the supported maximum {MAX_HERMITE_DEGREE}"
        )));
    }
    let (mut prev, mut cur) = (1.0, x);
    if degree == 0 {
        return Ok(prev);
    }
    for n in 1..degree {
        let next = x * cur - f64::from(n) * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `He_degree(x) / sqrt(degree!)`, orthonormal under the standard Gaussian.
pub fn normalized_hermite(degree: u32, x: f64) -> Result<f64> {
    let h = hermite_polynomial(degree, x)?;
    let factorial: f64 = (1..=degree).map(f64::from).product();
    Ok(h / factorial.sqrt())
}

/// Tensor-product basis `psi_a1(x1) * psi_a2(x2)`.
pub fn hermite_tensor(alpha: (u32, u32), x1: f64, x2: f64) -> Result<f64> {
    Ok(normalized_hermite(alpha.0, x1)? * normalized_hermite(alpha.1, x2)?)
}

const BASIS_ORDER: [(u32, u32); 9] = [
    (0, 1),
    (1, 0),
    (0, 2),
    (1, 1),
    (0, 3),
    (1, 2),
    (0, 4),
    (1, 3),
    (2, 2),
];

const D0_BASIS: [(u32, u32); 4] = [(0, 1), (0, 2), (0, 3), (0, 4)];

/// The Hermite benchmark families D0..D7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HermiteFamily {
    D0,
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    D7,
}

impl HermiteFamily {
    pub const ALL: [HermiteFamily; 8] = [
        HermiteFamily::D0,
        HermiteFamily::D1,
        HermiteFamily::D2,
        HermiteFamily::D3,
        HermiteFamily::D4,
        HermiteFamily::D5,
        HermiteFamily::D6,
        HermiteFamily::D7,
    ];

    /// Multi-indices of the basis functions in this family, in column order.
    ///
    /// D0 depends on x2 only; D1..D7 take the first 3..9 entries of the
    /// shared ordering.
    pub fn basis(self) -> &'static [(u32, u32)] {
        match self {
            HermiteFamily::D0 => &D0_BASIS,
            other => &BASIS_ORDER[..other.index() + 2],
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn id(self) -> &'static str {
        ["D0", "D1", "D2", "D3", "D4", "D5", "D6", "D7"][self.index()]
    }
}

impl fmt::Display for HermiteFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for HermiteFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HermiteFamily::ALL
            .into_iter()
            .find(|f| f.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown dataset id '{s}'; valid ids are D0, D1, D2, D3, D4, D5, D6, D7"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteDatasetSpec {
    pub family: HermiteFamily,
    pub n_samples: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl HermiteDatasetSpec {
    pub fn new(family: HermiteFamily, n_samples: usize, noise_std: f64, seed: u64) -> Self {
        Self {
            family,
            n_samples,
            noise_std,
            seed,
        }
    }
}

/// Samples a Hermite family.
///
/// Inputs `(x1, x2)` are drawn from the bivariate standard normal; each basis
/// row gets independent Gaussian noise of standard deviation `noise_std`.
/// The returned matrix holds the basis rows followed by two noise-free rows
/// labelled `input:x1` and `input:x2`.
pub fn generate_hermite_dataset(spec: &HermiteDatasetSpec) -> Result<DataMatrix> {
    if spec.n_samples < 2 {
        return Err(Error::invalid("n_samples must be at least 2"));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::invalid("noise_std must be finite and non-negative"));
    }
    let basis = spec.family.basis();
    let n = spec.n_samples;
    let rows = basis.len() + 2;

    let mut input_rng = rng::stream(spec.seed, labels::HERMITE_INPUTS, 0);
    let mut noise_rng = rng::stream(spec.seed, labels::HERMITE_NOISE, 0);

    let mut values = Array2::zeros((rows, n));
    for j in 0..n {
        let x1: f64 = StandardNormal.sample(&mut input_rng);
        let x2: f64 = StandardNormal.sample(&mut input_rng);
        for (k, &alpha) in basis.iter().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut noise_rng);
            values[[k, j]] = hermite_tensor(alpha, x1, x2)? + spec.noise_std * noise;
        }
        values[[rows - 2, j]] = x1;
        values[[rows - 1, j]] = x2;
    }

    let mut labels: Vec<String> = basis
        .iter()
        .map(|(a, b)| format!("psi_{a}_{b}"))
        .collect();
    labels.push(format!("{INPUT_LABEL_PREFIX}x1"));
    labels.push(format!("{INPUT_LABEL_PREFIX}x2"));
    DataMatrix::with_labels(values, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_values() {
        assert_eq!(hermite_polynomial(0, 3.7).unwrap(), 1.0);
        assert_eq!(hermite_polynomial(2, 2.0).unwrap(), 3.0);
        assert_eq!(hermite_polynomial(3, 2.0).unwrap(), 2.0);
        assert_eq!(normalized_hermite(0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(normalized_hermite(2, 2.0).unwrap(), 2.1213203, epsilon = 1e-7);
        assert_relative_eq!(normalized_hermite(3, 2.0).unwrap(), 0.8164966, epsilon = 1e-7);
    }

    #[test]
    fn degree_guard() {
        assert!(hermite_polynomial(20, 1.0).is_ok());
        assert!(matches!(
            hermite_polynomial(21, 1.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn recursion_identity() {
        for n in 1..10u32 {
            for i in 0..=40 {
                let x = -5.0 + 0.25 * i as f64;
                let next = hermite_polynomial(n + 1, x).unwrap();
                let cur = hermite_polynomial(n, x).unwrap();
                let prev = hermite_polynomial(n - 1, x).unwrap();
                let resid = next - x * cur + f64::from(n) * prev;
                let scale = next.abs().max(x * cur).abs().max(1.0);
                assert!(resid.abs() / scale < 1e-9, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn family_sizes() {
        let sizes: Vec<usize> = HermiteFamily::ALL.iter().map(|f| f.basis().len()).collect();
        assert_eq!(sizes, vec![4, 3, 4, 5, 6, 7, 8, 9]);
        assert!(HermiteFamily::D0.basis().iter().all(|(a, _)| *a == 0));
    }

    #[test]
    fn unknown_family_names_valid_ids() {
        let err = "D9".parse::<HermiteFamily>().unwrap_err().to_string();
        assert!(err.contains("D0") && err.contains("D7"));
        assert_eq!("d3".parse::<HermiteFamily>().unwrap(), HermiteFamily::D3);
    }
}
