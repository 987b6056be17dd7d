//! Coordinate networks with a Gaussian-window activation: reverse-mode training,
//! measurement operators for inverse problems, metrics and file formats.

pub mod activation;
pub mod alloc;
pub mod autodiff;
pub mod encoding;
pub mod error;
pub mod gemm;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod operators;
pub mod parallel;
pub mod training;
pub mod task;
pub mod trilogy;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use network::{Network, NetworkSpec};
