//! Hardness-aware contrastive learning for sequential recommendation.
//!
//! The crate is organized bottom-up:
//!
//! - [`diffmath`]: dense tensors and a reverse-mode tape with stop-gradient.
//! - [`data`]: interaction logs, feature tables, instance windowing, and a
//!   synthetic latent-factor corpus generator.
//! - [`model`]: pairwise relevance scoring, the attention-free sequence
//!   encoder, and the CTR head.
//! - [`augment`]: replacement augmentation with hardness scores and the
//!   five sampling strategies (including the easy-to-hard curriculum).
//! - [`objectives`]: the seven loss terms and their adaptive margins.
//! - [`train`]: Adam with decoupled weight decay, the batch loop, runs and
//!   checkpoints.
//! - [`eval`]: AUC, Precision/Recall/F1@K, and case-study embedding export.
//! - [`config`]: the sectioned `key=value` run configuration used by the CLI.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod augment;
pub mod config;
pub mod data;
pub mod diffmath;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
