use std::fs;
use std::path::Path;

use super::tensor::{GemmClass, TensorF16};
use super::StoreError;
use crate::fpcodec::Fp16Bits;

/// Reads a headerless little-endian FP16 file as a row-major `rows x cols`
/// tensor named after the file stem.
pub fn import_raw(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    gemm_class: GemmClass,
) -> Result<TensorF16, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let expected = rows.saturating_mul(cols).saturating_mul(2);
    if bytes.len() != expected {
        return Err(StoreError::SizeMismatch {
            rows,
            cols,
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(2)
        .map(|c| Fp16Bits(u16::from_le_bytes([c[0], c[1]])))
        .collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "raw".to_string());
    TensorF16::new(name, gemm_class, rows, cols, data)
}
