use thiserror::Error;

/// Errors produced by the separation toolkit.
#[derive(Debug, Error)]
pub enum BssError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate window: tightening normalizer vanishes at sample {0}")]
    DegenerateWindow(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("singular value decomposition failed in frequency bin {0}")]
    Svd(usize),

    #[error("solver diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("expected a multichannel mixture, got {0} channel(s)")]
    Mono(usize),

    #[error("unknown source model `{0}`")]
    UnknownModel(String),

    #[error("exhaustive alignment supports at most 4 sources, got {0}")]
    TooManySources(usize),
}

pub type Result<T, E = BssError> = std::result::Result<T, E>;
