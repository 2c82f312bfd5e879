use thiserror::Error;

/// Errors surfaced by the link-simulation crates.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is numerically singular")]
    Singular,

    #[error("pilot grid ill-conditioned: cond = {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("channel spans {channel_len} samples, longer than cyclic prefix + 1 ({cp_len} + 1)")]
    ChannelTooLong { channel_len: usize, cp_len: usize },

    #[error("subcarrier offset {offset} lies outside the coherence bandwidth")]
    BeyondCoherence { offset: i64 },

    #[error("correlation magnitude {alpha:.3e} for user {user} is below the guard {guard:.3e}")]
    NoiseEnhancement { alpha: f64, guard: f64, user: usize },

    #[error("no channel estimate available at subcarrier {0}")]
    MissingEstimate(usize),

    #[error("SIR is defined only for noiseless runs, got noise variance {0:.3e}")]
    SirOnNoisyRun(f64),

    #[error("unknown power-delay profile '{0}'")]
    UnknownPdp(String),

    #[error("power-delay profile table, line {line}: {msg}")]
    PdpParse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
