//! TorNet: a temporal-oriented broadcast-residual convolutional network for
//! binary audio classification, built end to end: dense tensors with
//! reverse-mode gradients, a log-Mel feature pipeline, broadcast residual
//! blocks, the full network, training, and evaluation with bootstrap
//! confidence intervals.

pub mod blocks;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod network;
pub mod ops;
pub mod optim;
pub mod parallel;
pub mod param;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{Gradients, Graph, Mode, NodeId};
pub use ops::{ConvCfg, DropoutStyle, RunningStats};
pub use param::{ParamStore, Parameter};
pub use rng::StreamRng;
pub use tensor::{Dtype, Scalar, Tensor};
