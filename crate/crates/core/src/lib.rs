//! Straight-through Gumbel-Softmax search over bimodal fusion architectures.

pub mod arch;
pub mod autodiff;
pub mod checkpoint;
pub mod commands;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod manifest;
pub mod metrics;
pub mod ops;
pub mod oracle;
pub mod sampler;
pub mod space;
pub mod stats;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
