//! Multi-scale action segmentation transformer for temporal phase recognition.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense matrices, forward kernels with analytic backward
//!   passes, a small reverse-mode tape and a finite-difference checker.
//! - [`attention`]: banded single-head attention (causal and centered) and
//!   the per-kernel window schedules.
//! - [`model`]: encoder/decoder blocks with multi-scale fusion, the offline
//!   (MS-AST) and causal (MS-ASCT) models, streaming inference.
//! - [`training`]: losses, Adam, the training loop and checkpoints.
//! - [`metrics`]: frame and segmental metrics, confusion matrices, ribbons.
//! - [`data`]: feature/label file formats, manifests, synthetic datasets.
//! - [`cli`]: the `msast` command-line front end.

pub mod attention;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig, StageOutputs};
pub use numerics::{Matrix, Real};
