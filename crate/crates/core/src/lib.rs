//! Controllable retrieval-augmented semantic parsing.
//!
//! Given a query, the pipeline retrieves exemplars from a mutable index,
//! concatenates them into an augmented query, and hands that to a pluggable
//! generator. Parser behavior is changed without retraining by editing the
//! index (domain bootstrapping, schema refactoring) or the augmentation
//! (guiding tag toward exemplar templates).
//!
//! Modules follow the pipeline: [`mr`] (meaning representations),
//! [`embedding`], [`retrieval`], [`augmentation`], [`generation`],
//! [`evaluation`], and [`scenarios`] (end-to-end control experiments).
//!
//! The numeric core is generic over the floating-point type via
//! [`scalar::Scalar`]; the aliases below pin the common instantiations.

pub mod augmentation;
pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod generation;
pub mod mr;
pub mod retrieval;
pub mod scalar;
pub mod scenarios;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use scalar::Scalar;

/// Single-precision embedding vector.
pub type Embedding32 = embedding::EmbeddingVector<f32>;
/// Double-precision embedding vector.
pub type Embedding64 = embedding::EmbeddingVector<f64>;
/// Single-precision exemplar index.
pub type Index32 = retrieval::ExemplarIndex<f32>;
/// Double-precision exemplar index (the default for the CLI and service).
pub type Index64 = retrieval::ExemplarIndex<f64>;
/// Double-precision ranked pool.
pub type RankedPool64 = retrieval::RankedPool<f64>;
