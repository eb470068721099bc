//! Layer conversion to dual-plane storage, the NFPT container and the
//! per-class applicability census.

mod census;
mod container;
mod convert;
pub mod fixtures;
mod raw;
mod tensor;

use std::io;

use thiserror::Error;

pub use census::{census, format_ratio, ApplicabilityReport, ClassCount};
pub use container::{from_bytes, load, save, to_bytes, FORMAT_VERSION, MAGIC};
pub use convert::{convert_layer, convert_model, layer_stats};
pub use raw::import_raw;
pub use tensor::{
    GemmClass, Layer, LayerEntry, LayerPayload, LayerStats, ModelContainer, NestedTensor, Storage,
    TensorF16,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid shape {rows}x{cols} for {len} elements")]
    Shape {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("raw file holds {actual} bytes, shape {rows}x{cols} needs {expected}")]
    SizeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported container version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("truncated blob in layer `{layer}`")]
    TruncatedBlob { layer: String },
    #[error("checksum mismatch in layer `{layer}`")]
    ChecksumMismatch { layer: String },
    #[error("unknown gemm class `{0}`")]
    UnknownClass(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
