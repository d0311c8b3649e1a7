use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("channel length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),

    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("unsupported channel count {0} (expected 1 or 2)")]
    UnsupportedChannels(u16),

    #[error("unsupported spherical-harmonic order {0} (supported: 0, 1, 2)")]
    UnsupportedOrder(usize),

    #[error("SH order mismatch: signal has order {signal}, decoder has order {decoder}")]
    OrderMismatch { signal: usize, decoder: usize },

    #[error("degenerate speaker layout: normal matrix pivot {pivot:e} below tolerance")]
    SingularLayout { pivot: f64 },

    #[error("trajectory gap: {0}")]
    TrajectoryGap(String),

    #[error("all analysis frames are gated as silent")]
    AllFramesGated,

    #[error("both channels are all-zero")]
    ZeroSignal,

    #[error("heatmap has zero total mass")]
    ZeroHeatmap,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate direction in HRIR manifest: azimuth {azimuth_deg}°, elevation {elevation_deg}°")]
    DuplicateDirection { azimuth_deg: f64, elevation_deg: f64 },

    #[error("duplicate clip id `{0}`")]
    DuplicateId(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at step {step}: loss {loss:e}")]
    Diverged { step: usize, loss: f64 },

    #[error("non-finite state during sampling at step {0}")]
    NonFinite(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("no stereo inputs found")]
    NoStereoInputs,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
