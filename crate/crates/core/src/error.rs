use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model config `{name}`: {reason}")]
    InvalidConfig { name: String, reason: String },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("vision encoder `{0}` has no patch_input_dim")]
    MissingPatchDim(String),

    #[error("accelerator `{hw}` has no peak for {precision_bytes}-byte precision")]
    MissingPrecision { hw: String, precision_bytes: u8 },

    #[error("operator intensity is undefined for a graph that moves zero bytes")]
    ZeroBytes,

    #[error("invalid network config `{name}`: {reason}")]
    InvalidNetwork { name: String, reason: String },

    #[error("network path must have one or two hops, got {0}")]
    PathLength(usize),

    #[error("derived component `{name}` has {actual:.3e} params, {deviation:.1}% away from target {target:.3e}")]
    ParamTarget {
        name: String,
        actual: f64,
        target: f64,
        deviation: f64,
    },

    #[error("placement not supported here: {0}")]
    Placement(String),

    #[error("unknown {kind} preset `{name}`")]
    UnknownPreset { kind: &'static str, name: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown table id `{0}`")]
    UnknownTable(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
