//! The topology-informed network and its loss.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod params;
pub mod skeleton;

pub use checkpoint::Checkpoint;
pub use config::{config_hash, HeadKind, LossWeights, ModelConfig, Variant};
pub use gradcheck::{check_gradients, GradCheck};
pub use loss::{LossTerms, Target, TargetCloud};
pub use network::{Encoding, Evaluation, Forward, OutputGrads, Prediction, Sample, Tim};
pub use params::{Grads, Init, ParamStore, Tensor};
pub use skeleton::{build_skeleton, SkeletonParams, SurfaceSkeleton};
