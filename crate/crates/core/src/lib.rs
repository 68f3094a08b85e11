//! Generative sampling on learned manifolds.
//!
//! A dataset is embedded with diffusion maps, the non-harmonic coordinates
//! are picked by local linear regression residuals, a full-order Itô SDE
//! samples a kernel density estimate in that latent space, and geometric
//! harmonics lift the generated latent points back to the ambient space.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod density;
pub mod dmaps;
pub mod error;
pub mod gh;
pub mod isde;
pub mod linalg;
pub mod pca;
pub mod pipeline;
pub mod rng;

pub use data::DataMatrix;
pub use density::KdeModel;
pub use dmaps::{DmapsConfig, DmapsModel, Selection};
pub use error::{Error, Result, Stage};
pub use gh::{GhConfig, GhInterpolant};
pub use isde::IsdeConfig;
pub use pca::PcaModel;
pub use pipeline::{FitConfig, GhPlomModel};
