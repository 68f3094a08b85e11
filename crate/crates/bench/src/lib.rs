//! Shared fixtures for the benchmarks.

use ghplom::data::{generate_hermite_dataset, HermiteDatasetSpec, HermiteFamily};
use ghplom::DataMatrix;
use ndarray::Array2;

/// Noisy D7 dataset of `n` samples, fixed seed.
pub fn d7(n: usize) -> DataMatrix {
    generate_hermite_dataset(&HermiteDatasetSpec::new(HermiteFamily::D7, n, 0.05, 0))
        .expect("valid dataset spec")
}

/// `dim x n` standard normal cloud, fixed seed.
pub fn gaussian_cloud(dim: usize, n: usize) -> Array2<f64> {
    let mut rng = ghplom::rng::stream(0, "bench", 0);
    ghplom::rng::standard_normal_matrix(&mut rng, dim, n)
}
