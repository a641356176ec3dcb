//! Multi-relational factorization with per-relation entity factors tied to a
//! global consensus matrix through ADMM, trained with the BPR pairwise ranking
//! loss. Complete-sharing (CD) and decoupled multi-target (DMF) baselines and a
//! link-prediction ranking evaluator are included.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod baselines;
pub mod checkpoint;
pub mod consensus;
pub mod curve;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod factors;
pub mod objective;
mod parallel;
pub mod scalar;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use dataset::{EntityId, MultiRelationalDataset, RelationId, SplitDataset, Triple, Which};
pub use factors::{Hyperparams, RelationWeightShape};

pub type Matrix = factors::Matrix<f64>;
pub type RelationFactors = factors::RelationFactors<f64>;
pub type RelationParams = factors::RelationParams<f64>;
pub type ConsensusState = factors::ConsensusState<f64>;
pub type GradientBundle = objective::GradientBundle<f64>;
pub type AdagradState = objective::AdagradState<f64>;
pub type TrainedModel = consensus::TrainedModel<f64>;
pub type SharedModel = baselines::SharedModel<f64>;
pub type DmfModel = baselines::DmfModel<f64>;
