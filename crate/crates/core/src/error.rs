use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A vector or tensor has the wrong length for the layer that consumes it.
    #[error("dimension mismatch at layer {layer}: expected {expected}, got {actual}")]
    Dimension {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    /// A layer, neuron, or class index is out of range.
    #[error("index {index} out of range for {what} (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },
    /// Inconsistent or unusable input data.
    #[error("data error: {0}")]
    Data(String),
    /// Malformed network description.
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    /// A non-finite value appeared during a numeric computation.
    #[error("non-finite value in {stage} at layer {layer}")]
    Numeric { stage: &'static str, layer: usize },
    /// The predicted-class relevance at the input is not positive, so no
    /// critical path threshold exists for this input.
    #[error("degenerate relevance total {0}")]
    Degenerate(f64),
    /// A rank correlation over a constant series.
    #[error("correlation undefined for a constant series")]
    UndefinedCorrelation,
    /// A caller violated an operation's contract.
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = core::result::Result<T, Error>;
