use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the retrieval data path.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration invariant was violated. The payload names the
    /// first invariant that failed.
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),

    #[error("invalid fabric model `{name}`: {reason}")]
    InvalidFabric { name: String, reason: &'static str },

    #[error("position {position} out of range for context of {len} tokens")]
    InvalidPosition { position: usize, len: usize },

    #[error("bad magic {found:?}, expected \"ENGT\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported table format version {0}")]
    UnsupportedVersion(u32),

    #[error("config mismatch: header {field}={header}, config {field}={config}")]
    ConfigMismatch {
        field: &'static str,
        header: u64,
        config: u64,
    },

    #[error("region too small: need {expected} bytes, found {found}")]
    RegionTooSmall { expected: u64, found: u64 },

    #[error("segment out of bounds: offset {offset} + length {length} exceeds region of {region_len} bytes")]
    OutOfBounds {
        offset: u64,
        length: usize,
        region_len: u64,
    },

    #[error("destination too small: need {needed} bytes, have {available}")]
    DestinationTooSmall { needed: usize, available: usize },

    #[error("workers must be at least 1")]
    NoWorkers,

    #[error("layer {0} is not an engram layer")]
    NotEngramLayer(usize),

    #[error("layer {k} out of range 1..={layers}")]
    LayerOutOfRange { k: usize, layers: usize },

    #[error("prefetch worker terminated abnormally")]
    PrefetchLost,

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
