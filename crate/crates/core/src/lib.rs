//! Compare token-importance signals with human reading fixations.
//!
//! The crate covers the whole offline pipeline: fixation corpora and score
//! files ([`corpus`]), attention tensors and attention flow ([`attnflow`]),
//! n-gram predictability and frequency baselines ([`langmodel`]), rank and
//! linear correlation ([`metrics`]), grouped analyses ([`analyses`]) and the
//! input-reduction faithfulness harness ([`reduction`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin the common instantiations.

pub mod analyses;
pub mod attnflow;
pub mod corpus;
pub mod fixtures;
pub mod langmodel;
pub mod metrics;
pub mod reduction;
pub mod report;
mod scalar;

pub use scalar::Scalar;

pub use attnflow::{AttentionTensor, FlowTarget, LayeredGraph, Node};
pub use corpus::{Alignment, Corpus, ScoreSet, ScoreVector, Sentence, Task};
pub use metrics::{CorrelationKind, CorrelationLevel, CorrelationReport};
pub use reduction::{ReductionCurve, Scorer};

pub type AttentionTensor32 = AttentionTensor<f32>;
pub type AttentionTensor64 = AttentionTensor<f64>;
pub type LayeredGraph32 = LayeredGraph<f32>;
pub type LayeredGraph64 = LayeredGraph<f64>;
