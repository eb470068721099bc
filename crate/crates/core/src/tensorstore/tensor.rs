use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::fpcodec::{reconstruct, Fp16Bits, NestedPair};

/// Which linear-layer GEMM a weight tensor feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GemmClass {
    /// QKV projections
    #[serde(rename = "GEMM1")]
    Gemm1,
    /// Attention output projection
    #[serde(rename = "GEMM2")]
    Gemm2,
    /// MLP gate/up projections
    #[serde(rename = "GEMM3")]
    Gemm3,
    /// MLP down projection
    #[serde(rename = "GEMM4")]
    Gemm4,
    #[serde(rename = "OTHER")]
    Other,
}

impl GemmClass {
    pub const ALL: [GemmClass; 5] = [
        GemmClass::Gemm1,
        GemmClass::Gemm2,
        GemmClass::Gemm3,
        GemmClass::Gemm4,
        GemmClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GemmClass::Gemm1 => "GEMM1",
            GemmClass::Gemm2 => "GEMM2",
            GemmClass::Gemm3 => "GEMM3",
            GemmClass::Gemm4 => "GEMM4",
            GemmClass::Other => "OTHER",
        }
    }
}

impl fmt::Display for GemmClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GemmClass {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GemmClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| StoreError::UnknownClass(s.to_string()))
    }
}

/// Row-major FP16 weight matrix of shape `rows x cols` (N output channels by
/// K input features).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorF16 {
    pub name: String,
    pub gemm_class: GemmClass,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Fp16Bits>,
}

fn check_shape(rows: usize, cols: usize, len: usize) -> Result<(), StoreError> {
    if rows == 0 || cols == 0 || rows.checked_mul(cols) != Some(len) {
        return Err(StoreError::Shape { rows, cols, len });
    }
    Ok(())
}

impl TensorF16 {
    pub fn new(
        name: impl Into<String>,
        gemm_class: GemmClass,
        rows: usize,
        cols: usize,
        data: Vec<Fp16Bits>,
    ) -> Result<Self, StoreError> {
        check_shape(rows, cols, data.len())?;
        Ok(Self {
            name: name.into(),
            gemm_class,
            rows,
            cols,
            data,
        })
    }

    /// Builds a tensor by rounding each value to FP16.
    pub fn from_f64(
        name: impl Into<String>,
        gemm_class: GemmClass,
        rows: usize,
        cols: usize,
        values: &[f64],
    ) -> Result<Self, StoreError> {
        let data = values.iter().map(|&v| Fp16Bits::from_f64(v)).collect();
        Self::new(name, gemm_class, rows, cols, data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Fp16Bits {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[Fp16Bits] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Little-endian byte image, 2 bytes per element.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|x| x.0.to_le_bytes()).collect()
    }
}

/// A weight matrix stored as an upper plane followed by a lower plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedTensor {
    pub name: String,
    pub gemm_class: GemmClass,
    pub rows: usize,
    pub cols: usize,
    pub upper: Vec<u8>,
    pub lower: Vec<u8>,
}

impl NestedTensor {
    pub fn new(
        name: impl Into<String>,
        gemm_class: GemmClass,
        rows: usize,
        cols: usize,
        upper: Vec<u8>,
        lower: Vec<u8>,
    ) -> Result<Self, StoreError> {
        check_shape(rows, cols, upper.len())?;
        check_shape(rows, cols, lower.len())?;
        Ok(Self {
            name: name.into(),
            gemm_class,
            rows,
            cols,
            upper,
            lower,
        })
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    #[inline]
    pub fn pair(&self, row: usize, col: usize) -> NestedPair {
        let i = row * self.cols + col;
        NestedPair::new(self.upper[i], self.lower[i])
    }

    /// Rebuilds the FP16 tensor from both planes.
    pub fn reconstruct(&self) -> TensorF16 {
        let data = self
            .upper
            .iter()
            .zip(&self.lower)
            .map(|(&u, &l)| reconstruct(NestedPair::new(u, l)))
            .collect();
        TensorF16 {
            name: self.name.clone(),
            gemm_class: self.gemm_class,
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Storage {
    #[serde(rename = "NESTED")]
    Nested,
    #[serde(rename = "FP16_EXCEPTION")]
    Fp16Exception,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub min_value: f64,
    pub max_value: f64,
    /// Elements that cannot be stored as a nested pair.
    pub out_of_range_count: usize,
}

/// Manifest record for one layer. `storage` is `Nested` exactly when
/// `stats.out_of_range_count` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub gemm_class: GemmClass,
    pub storage: Storage,
    pub shape: [usize; 2],
    pub stats: LayerStats,
    /// CRC-32 of the source FP16 tensor's little-endian bytes.
    pub source_crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerPayload {
    Nested(NestedTensor),
    Fp16(TensorF16),
}

impl LayerPayload {
    /// Total payload bytes.
    pub fn byte_len(&self) -> usize {
        match self {
            LayerPayload::Nested(t) => t.upper.len() + t.lower.len(),
            LayerPayload::Fp16(t) => 2 * t.data.len(),
        }
    }

    /// FP16 view of the payload, reconstructing nested planes.
    pub fn to_fp16(&self) -> TensorF16 {
        match self {
            LayerPayload::Nested(t) => t.reconstruct(),
            LayerPayload::Fp16(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub entry: LayerEntry,
    pub payload: LayerPayload,
}

/// An ordered set of layers; each manifest entry owns exactly one payload.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelContainer {
    pub layers: Vec<Layer>,
}

impl ModelContainer {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn manifest(&self) -> impl Iterator<Item = &LayerEntry> {
        self.layers.iter().map(|l| &l.entry)
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.entry.name == name)
    }

    pub fn exception_count(&self) -> usize {
        self.manifest()
            .filter(|e| e.storage == Storage::Fp16Exception)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        let d = vec![Fp16Bits::ONE; 4];
        assert!(TensorF16::new("t", GemmClass::Gemm1, 2, 2, d.clone()).is_ok());
        assert!(TensorF16::new("t", GemmClass::Gemm1, 1, 3, d.clone()).is_err());
        assert!(TensorF16::new("t", GemmClass::Gemm1, 0, 4, d).is_err());
    }

    #[test]
    fn class_parsing() {
        assert_eq!("gemm3".parse::<GemmClass>().unwrap(), GemmClass::Gemm3);
        assert_eq!("OTHER".parse::<GemmClass>().unwrap(), GemmClass::Other);
        assert!("GEMM5".parse::<GemmClass>().is_err());
    }
}
