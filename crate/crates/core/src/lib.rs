//! Verification workbench for small NLP classifiers over sentence
//! embeddings: corpora, rule-based perturbations, embedding ingestion,
//! geometric subspaces, training, interval verification and metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the usual `f64` instantiation.

pub mod dataset;
pub mod embed;
pub mod geometry;
pub mod metrics;
pub mod perturb;
pub mod rng;
pub mod scalar;
pub mod train;
pub mod verify;

pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use thiserror::Error;

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Perturb(#[from] perturb::PerturbError),
    #[error(transparent)]
    PerturbImport(#[from] perturb::ImportError),
    #[error(transparent)]
    Embed(#[from] embed::EmbedError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
    #[error(transparent)]
    Verify(#[from] verify::VerifyError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
}

pub type AxisRect64 = geometry::AxisRect<f64>;
pub type Subspace64 = geometry::Subspace<f64>;
pub type Rotation64 = geometry::Rotation<f64>;
pub type EmbeddingStore64 = embed::EmbeddingStore<f64>;
pub type EmbeddingMatrix64 = embed::EmbeddingMatrix<f64>;
pub type Subspace32 = geometry::Subspace<f32>;
pub type Network64 = train::Network<f64>;
pub type Network32 = train::Network<f32>;
