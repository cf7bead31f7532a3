//! Contrastive representation learning over an information graph of
//! multi-sensor segments.
//!
//! The pipeline: [`siggen`] synthesises multi-station streams and cuts them
//! into featurized segments; [`infograph`] links segments that observe the
//! same time span on different streams and attaches labeled segments to
//! per-class anchor nodes; [`loss`] evaluates the graph-weighted contrastive
//! objective on sampled batches; [`model`] and [`train`] implement the encoder,
//! heads and training protocols; [`expcli`] runs the experiment regimes.
//!
//! Numeric code is generic over [`Real`] (`f32`/`f64`); the aliases below fix
//! the 64-bit precision used for training.

pub mod error;
pub mod expcli;
pub mod infograph;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod siggen;
pub mod train;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use scalar::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type AnchorVectors64 = model::AnchorVectors<f64>;
pub type GradientTape64 = model::GradientTape<f64>;
pub type OptimState64 = train::OptimState<f64>;
pub type FeatureSet64 = train::FeatureSet<f64>;
pub type SpectrogramFeature64 = siggen::SpectrogramFeature<f64>;
