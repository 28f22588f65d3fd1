//! Cross-domain episodic meta-learning engine.
//!
//! The crate trains a Conv-n feature encoder with a prototypical metric head
//! on N-way K-shot episodes whose support and query sets are drawn from
//! *distinct* source domains, then evaluates the result on a held-out target
//! domain. Everything numeric lives here: a minimal tape-based reverse-mode
//! autodiff engine ([`tensor`], [`tape`], [`ops`]), the encoder and metric
//! head ([`encoder`], [`protonet`]), multi-domain datasets with a procedural
//! synthetic generator ([`data`], [`synth`]), the episode sampler
//! ([`sampler`]), and the training/evaluation loops ([`train`], [`eval`]).
//!
//! The crate is `no_std` + `alloc`; the default `std` feature adds runtime
//! SIMD kernel selection and parallel evaluation. File formats, checkpoint
//! IO, and the CLI live in the companion `xeml` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
mod gemm;
pub mod ops;
mod parallel;
pub mod protonet;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

#[cfg(feature = "oracle")]
pub mod reference;

pub use data::{DomainTable, MultiDomainDataset};
pub use encoder::{EncoderConfig, EvalBnMode, ParamStore};
pub use error::{CoreError, Result};
pub use eval::{CompareArm, EvalReport};
pub use sampler::{Episode, EpisodeSpec, SampleMode};
pub use synth::SynthStyle;
pub use tape::Tape;
pub use tensor::Tensor;
pub use train::{TrainConfig, TrainLog};
