//! Dual-decoder Wasserstein autoencoder for simultaneous outlier detection
//! and outlier generation from positive-plus-unlabeled data.
//!
//! The model couples a shared deterministic encoder with two competing
//! decoders (one per class) and a latent discriminator that matches encoded
//! inliers to a standard-normal prior. During training each sample's
//! reconstruction loss flows only through the decoder that reconstructs it
//! best, with an optional advantage penalty that handicaps the currently
//! winning decoder. At detection time the sign of the reconstruction-error
//! residual classifies samples without any threshold.

pub mod data;
pub mod detector;
pub mod generator;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ot;
pub mod trainer;

/// Ground-truth or predicted class of a sample. Outlier is the positive
/// class in every metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Label {
    Inlier,
    Outlier,
}

impl Label {
    pub fn is_outlier(self) -> bool {
        matches!(self, Label::Outlier)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Inlier => write!(f, "inlier"),
            Label::Outlier => write!(f, "outlier"),
        }
    }
}
