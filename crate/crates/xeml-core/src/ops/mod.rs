//! Differentiable tensor operations.
//!
//! Exactly the set the encoder and metric head need: 3x3 convolution,
//! batch normalization, ReLU, 2x2 max pooling, flatten/slice plumbing, and
//! the prototype/distance/softmax/cross-entropy chain. Each op computes its
//! forward result and, on a recording tape with differentiable inputs,
//! pushes a backward rule.

pub(crate) mod batchnorm;
pub(crate) mod conv;
pub(crate) mod elementwise;
pub(crate) mod metric;
pub(crate) mod pool;
pub(crate) mod shape_ops;

pub use batchnorm::{batchnorm2d, BnApply, BnRunning};
pub use conv::conv2d;
pub use elementwise::{relu, scale, sum};
pub use metric::{class_mean, cross_entropy, log_softmax, pairwise_sq_dist};
pub use pool::maxpool2x2;
pub use shape_ops::{flatten, reshape, slice_rows};
