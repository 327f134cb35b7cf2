use thiserror::Error;

/// Error classes surfaced by the library. The CLI maps each class to its own exit code.
#[derive(Debug, Error)]
pub enum LieError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid element: membership residual {residual:.3e}")]
    InvalidElement { residual: f64 },

    #[error("log outside principal chart (spectrum {spectrum:?})")]
    Chart { spectrum: Vec<(f64, f64)> },

    #[error("out of regime: {0}")]
    Regime(String),

    #[error("search exhausted: {0}")]
    Search(String),

    #[error("correction failed: {msg} (best residual {best_residual:.3e})")]
    Correction { msg: String, best_residual: f64 },

    #[error("solver failed: {msg} (best residual {best_residual:.3e})")]
    Solver { msg: String, best_residual: f64 },

    #[error("size limit: {0}")]
    Size(String),

    #[error("decomposition: {0}")]
    Decomposition(String),

    #[error("stagnation: {0}")]
    Stagnation(String),

    #[error("reducible pair: word {word} evaluates within {dist:.3e} of the identity")]
    ReduciblePair { word: String, dist: f64 },

    #[error("basin: {0}")]
    Basin(String),

    #[error(transparent)]
    Cache(#[from] CacheError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache version {found} needs migration to {expected}")]
    Version { found: u32, expected: u32 },

    #[error("cache integrity: stored digest {stored}, computed {computed}")]
    Integrity { stored: String, computed: String },

    #[error("cache key mismatch: file built for {found}, requested {requested}")]
    KeyMismatch { found: String, requested: String },

    #[error("cache format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, LieError>;
