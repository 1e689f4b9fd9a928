//! Error type shared across the workbench.

/// Errors surfaced by the compute kernel, environments, trainer and tooling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape disagreement between tensors, layers or sequences.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    /// A non-finite value was produced or consumed.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Invalid configuration (unknown benchmark, bad stage plan, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in a state that does not admit it.
    #[error("state error: {0}")]
    State(String),

    /// A caller-side contract was violated (e.g. Adam step index 0).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A documented invariant failed at run time.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Input outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operation valid only for the other model variant.
    #[error("variant error: {0}")]
    Variant(String),

    /// Failure while rolling out a batch, tagged with the episode index.
    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dimension(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            got,
        }
    }

    pub fn in_episode(self, episode: usize) -> Self {
        Error::Episode {
            episode,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
