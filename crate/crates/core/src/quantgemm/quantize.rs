//! Absmax E4M3 quantization of activations (per tensor or per token) and of
//! weights (per output channel).

use serde::{Deserialize, Serialize};

use super::{ActivationF16, GemmError};
use crate::fpcodec::{e4m3_from_f64_sat, e4m3_to_f64, E4M3_MAX};
use crate::tensorstore::TensorF16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleMode {
    PerTensor,
    PerToken,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedActivation {
    pub rows: usize,
    pub cols: usize,
    pub codes: Vec<u8>,
    pub scale_mode: ScaleMode,
    /// One scale for `PerTensor`, one per row for `PerToken`.
    pub scales: Vec<f64>,
}

impl QuantizedActivation {
    #[inline]
    pub fn scale(&self, row: usize) -> f64 {
        match self.scale_mode {
            ScaleMode::PerTensor => self.scales[0],
            ScaleMode::PerToken => self.scales[row],
        }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.codes
            .iter()
            .enumerate()
            .map(|(i, &c)| code_value(c) * self.scale(i / self.cols))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScaleMode {
    /// Fixed 2^8 scale of nested storage: dequantize by multiplying by 2^-8.
    Global2Pow8,
    /// `absmax(row) / 448` per output channel.
    PerChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightScales {
    pub mode: WeightScaleMode,
    pub values: Vec<f64>,
}

impl WeightScales {
    pub fn global() -> Self {
        Self {
            mode: WeightScaleMode::Global2Pow8,
            values: vec![1.0 / 256.0],
        }
    }

    #[inline]
    pub fn get(&self, row: usize) -> f64 {
        match self.mode {
            WeightScaleMode::Global2Pow8 => self.values[0],
            WeightScaleMode::PerChannel => self.values[row],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedWeight {
    pub rows: usize,
    pub cols: usize,
    pub codes: Vec<u8>,
    pub scales: WeightScales,
}

impl QuantizedWeight {
    pub fn dequantize(&self) -> Vec<f64> {
        self.codes
            .iter()
            .enumerate()
            .map(|(i, &c)| code_value(c) * self.scales.get(i / self.cols))
            .collect()
    }
}

#[inline]
pub(super) fn code_value(code: u8) -> f64 {
    // Quantizers never emit the NaN code.
    e4m3_to_f64(code).unwrap_or(0.0)
}

/// `absmax / 448`, or 1 when the slice is all zeros.
fn absmax_scale(values: &[f64]) -> f64 {
    let absmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if absmax == 0.0 {
        1.0
    } else {
        absmax / E4M3_MAX
    }
}

fn decode_checked(data: &[crate::fpcodec::Fp16Bits], cols: usize) -> Result<Vec<f64>, GemmError> {
    data.iter()
        .enumerate()
        .map(|(i, x)| {
            if x.is_finite() {
                Ok(x.to_f64())
            } else {
                Err(GemmError::NonFiniteInput {
                    row: i / cols,
                    col: i % cols,
                })
            }
        })
        .collect()
}

pub fn quantize_activation(
    a: &ActivationF16,
    mode: ScaleMode,
) -> Result<QuantizedActivation, GemmError> {
    let values = decode_checked(&a.data, a.cols)?;
    let scales = match mode {
        ScaleMode::PerTensor => vec![absmax_scale(&values)],
        ScaleMode::PerToken => values.chunks(a.cols).map(absmax_scale).collect(),
    };
    let mut q = QuantizedActivation {
        rows: a.rows,
        cols: a.cols,
        codes: Vec::with_capacity(values.len()),
        scale_mode: mode,
        scales,
    };
    for (i, v) in values.iter().enumerate() {
        let s = q.scale(i / a.cols);
        q.codes.push(e4m3_from_f64_sat(v / s));
    }
    Ok(q)
}

pub fn quantize_weight_per_channel(w: &TensorF16) -> Result<QuantizedWeight, GemmError> {
    let values = decode_checked(&w.data, w.cols)?;
    let scales: Vec<f64> = values.chunks(w.cols).map(absmax_scale).collect();
    let codes = values
        .iter()
        .enumerate()
        .map(|(i, v)| e4m3_from_f64_sat(v / scales[i / w.cols]))
        .collect();
    Ok(QuantizedWeight {
        rows: w.rows,
        cols: w.cols,
        codes,
        scales: WeightScales {
            mode: WeightScaleMode::PerChannel,
            values: scales,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpcodec::Fp16Bits;
    use crate::tensorstore::GemmClass;

    #[test]
    fn per_token_example() {
        let a = ActivationF16::from_f64(1, 3, &[1.0, -2.0, 3.0]).unwrap();
        let q = quantize_activation(&a, ScaleMode::PerToken).unwrap();
        assert_eq!(q.scales, vec![3.0 / 448.0]);
        let decoded: Vec<f64> = q.codes.iter().map(|&c| code_value(c)).collect();
        assert_eq!(decoded, vec![144.0, -288.0, 448.0]);
        let deq = q.dequantize();
        assert!((deq[0] - 0.964_285_714_285_714_2).abs() < 1e-12);
        assert!((deq[1] + 1.928_571_428_571_428_4).abs() < 1e-12);
        assert!((deq[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_token_gets_unit_scale() {
        let a = ActivationF16::from_f64(2, 2, &[0.0, 0.0, 1.0, 0.5]).unwrap();
        let q = quantize_activation(&a, ScaleMode::PerToken).unwrap();
        assert_eq!(q.scales[0], 1.0);
        assert_eq!(&q.codes[..2], &[0, 0]);
    }

    #[test]
    fn on_grid_values_are_exact() {
        let grid = [448.0, -0.5, 0.0078125, 2f64.powi(-9), -96.0];
        let a = ActivationF16::from_f64(1, grid.len(), &grid).unwrap();
        let q = quantize_activation(&a, ScaleMode::PerTensor).unwrap();
        assert_eq!(q.scales, vec![1.0]);
        assert_eq!(q.dequantize(), grid.to_vec());
    }

    #[test]
    fn rejects_non_finite() {
        let a = ActivationF16::new(1, 2, vec![Fp16Bits::ONE, Fp16Bits::INFINITY]).unwrap();
        assert_eq!(
            quantize_activation(&a, ScaleMode::PerTensor),
            Err(GemmError::NonFiniteInput { row: 0, col: 1 })
        );
    }

    #[test]
    fn constant_channel_is_exact() {
        let w = TensorF16::from_f64(
            "w",
            GemmClass::Gemm1,
            2,
            3,
            &[0.3, 0.3, 0.3, -1.1, -1.1, -1.1],
        )
        .unwrap();
        let q = quantize_weight_per_channel(&w).unwrap();
        let deq = q.dequantize();
        for (d, x) in deq.iter().zip(&w.data) {
            assert!((d - x.to_f64()).abs() <= 1e-15 * x.to_f64().abs());
        }
    }
}
