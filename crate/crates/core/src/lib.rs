//! Deep networks constructed by forward propagation from the maximal coding
//! rate reduction objective.
//!
//! Each layer is one projected gradient-ascent step on
//! `ΔR(Z) = ½ log det(I + αZZ*) − Σ_j (γ_j/2) log det(I + α_j ZΠʲZ*)`,
//! with all operators computed in closed form from the features of the
//! previous layer. Shift-invariant (1D) and translation-invariant (2D)
//! variants keep every operator block-circulant and are built per frequency.

pub mod classify;
pub mod datasets;
pub mod error;
pub mod lifting;
pub mod linalg;
pub mod rate;
pub mod shift1d;
pub mod spectral;
pub mod translate2d;
pub mod vector;

pub use error::{Error, Result};
pub use rate::{FeatureMatrix, Partition, RateParams, RateTrace};
pub use spectral::{MultiChannel, MultiChannelImage, MultiChannelSignal};
