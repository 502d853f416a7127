//! Multi-task metric learning over heterogeneous longitudinal data.
//!
//! The crate learns a low-rank Mahalanobis-like metric
//! `δ²(x, y) = ‖Lᵀ(x − y)‖²` where `L` is a `d×l` matrix with orthonormal
//! columns, trained from triplets mined by an n-of-T label-match rule over a
//! task label matrix. Optimization runs on the Stiefel manifold (tangent
//! projection + thin-QR retraction, SGD or Polak-Ribière CG). Auxiliary MSE
//! heads tie selected embedding dimensions to score and change labels.
//!
//! The crate is `no_std` + `alloc`; everything here is pure computation over
//! in-memory data. File formats, CSV/JSON parsing and the CLI live in the
//! companion `mtml-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod math;
pub mod metric;
pub mod miner;
pub mod rng;
pub mod schema;
pub mod stiefel;
pub mod sweep;
pub mod synth;
pub mod trainer;

pub use dataset::{Dataset, FeatureScaler, LabelMatrix, ObservationRecord};
pub use error::CoreError;
pub use linalg::Mat;
pub use metric::{LossBreakdown, LossConfig, LossMode, MetricParams};
pub use miner::{MinerConfig, MiningStrategy, Triplet};
pub use schema::{Schema, TaskKind, TaskSchema};
pub use stiefel::{OptMethod, OptimizerState};
pub use synth::SynthConfig;
pub use trainer::{CheckpointState, TrainConfig, TrainHistory, TrainOutcome};
