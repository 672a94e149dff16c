//! Two-stage RGB-D recognition downstream of a pretrained CNN.
//!
//! Level activations are brought into a canonical `K x s x s` form
//! ([`pooling`]), encoded by many fixed random recursive networks
//! ([`rnn`]), classified with one-vs-rest linear SVMs ([`svm`]) and fused
//! across levels and modalities ([`fusion`]). [`depth`] turns raw depth
//! frames into surface-normal images for the backbone, [`tensor_io`] holds
//! the file formats, and [`pipeline`] runs whole experiments.

pub mod depth;
pub mod error;
pub mod fusion;
pub mod pipeline;
pub mod pooling;
pub mod rnn;
pub mod seed;
pub mod svm;
pub mod synthetic;
pub mod tensor_io;

pub use error::{Error, Result};
pub use fusion::{FusionPlan, ModalityWeights};
pub use pipeline::{run_experiment, RunConfig, RunReport};
pub use pooling::{PoolMethod, PoolSpec};
pub use rnn::{EncoderConfig, LevelEncoder, RnnWeights};
pub use svm::{LinearModel, ScoreMatrix, SvmConfig};
pub use tensor_io::{ActivationTensor, DatasetManifest, LevelSpec, Modality};
