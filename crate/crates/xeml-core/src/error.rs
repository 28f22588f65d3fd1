//! Error type shared by all engine modules.

use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// Tensor shapes do not satisfy an operation's contract.
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Episode support/query sets violate the N-way K-shot layout.
    #[error("episode shape error: {0}")]
    EpisodeShape(String),

    /// A (domain, class) cell cannot satisfy the requested draw.
    #[error("sampling error: domain '{domain}' class '{class}' has {have} examples, needs {need}")]
    Sampling {
        domain: String,
        class: String,
        have: usize,
        need: usize,
    },

    /// Episode mode is incompatible with the dataset (e.g. cross-domain with one source).
    #[error("mode error: {0}")]
    Mode(String),

    /// Domains do not share the same class set.
    #[error("homogeneity error: class set differs across domains; symmetric difference: {missing:?}")]
    Homogeneity { missing: Vec<String> },

    /// Classification label outside [0, n_way).
    #[error("label error: label {label} at index {index} outside [0, {n_way})")]
    Label {
        index: usize,
        label: usize,
        n_way: usize,
    },

    /// Batch statistics undefined: a single element per channel in train mode.
    #[error("degenerate batch: batchnorm train mode needs at least 2 elements per channel, got {0}")]
    DegenerateBatch(usize),

    /// Tape misuse: replayed after backward, or foreign/stale node handles.
    #[error("tape error: {0}")]
    Tape(String),

    /// An operation's calling contract was violated (non-scalar loss, missing grads, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// Training diverged; carries the episode diagnostics needed to replay it.
    #[error(
        "non-finite loss {loss} at episode {episode} (stream seed {stream_seed}, support domain {support_domain}, query domain {query_domain})"
    )]
    NonFiniteLoss {
        episode: usize,
        loss: f32,
        stream_seed: u64,
        support_domain: usize,
        query_domain: usize,
    },

    /// Checkpoint or hook callback failure reported by the embedding application.
    #[error("hook error: {0}")]
    Hook(String),
}

impl CoreError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::Dimension {
            op,
            detail: detail.into(),
        }
    }
}
