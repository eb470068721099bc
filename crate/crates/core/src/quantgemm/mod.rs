//! Reference GEMM engines for the four execution paths.
//!
//! All engines compute `out[m, n] = sum_k A[m, k] * W[n, k]` with one
//! binary64 accumulator per output element, `k` strictly ascending, and a
//! single round-to-nearest-even to FP16 at the end. Rows of the output may be
//! computed in parallel; the per-element order never changes.

mod engine;
mod metrics;
mod quantize;
pub mod random;

use thiserror::Error;

use crate::fpcodec::Fp16Bits;

pub use engine::{
    execute, gemm_fp16, gemm_fp8_baseline, gemm_nestedfp16, gemm_nestedfp8, GemmEngine, GemmPath,
};
pub use metrics::{error_metrics, ErrorMetrics};
pub use quantize::{
    quantize_activation, quantize_weight_per_channel, QuantizedActivation, QuantizedWeight,
    ScaleMode, WeightScaleMode, WeightScales,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GemmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input value at ({row}, {col})")]
    NonFiniteInput { row: usize, col: usize },
    #[error("layer `{0}` is stored as FP16 and must run on the FP16 path")]
    ExceptionLayer(String),
}

/// Row-major `M x K` FP16 activations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationF16 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Fp16Bits>,
}

impl ActivationF16 {
    pub fn new(rows: usize, cols: usize, data: Vec<Fp16Bits>) -> Result<Self, GemmError> {
        if rows == 0 || cols == 0 || rows.checked_mul(cols) != Some(data.len()) {
            return Err(GemmError::ShapeMismatch(format!(
                "activation {rows}x{cols} with {} elements",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Result<Self, GemmError> {
        Self::new(
            rows,
            cols,
            values.iter().map(|&v| Fp16Bits::from_f64(v)).collect(),
        )
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Fp16Bits {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[Fp16Bits] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// `M x N` FP16 output, with the pre-rounding accumulator values when the
/// engine was asked to keep them.
#[derive(Debug, Clone, PartialEq)]
pub struct GemmResult {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Fp16Bits>,
    pub accumulator: Option<Vec<f64>>,
}

impl GemmResult {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Fp16Bits {
        self.data[row * self.cols + col]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64()).collect()
    }

    /// Little-endian byte image of the output bits.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|x| x.0.to_le_bytes()).collect()
    }

    pub fn bits_equal(&self, other: &GemmResult) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.data == other.data
    }
}
