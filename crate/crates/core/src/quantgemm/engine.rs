use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quantize::{code_value, quantize_activation, quantize_weight_per_channel, ScaleMode};
use super::{ActivationF16, GemmError, GemmResult};
use crate::fpcodec::{reconstruct, Fp16Bits, NestedPair};
use crate::tensorstore::{LayerPayload, NestedTensor, TensorF16};

/// The four execution paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GemmPath {
    Fp16,
    NestedFp16,
    NestedFp8,
    Fp8Baseline,
}

/// Runs the GEMM paths. `keep_accumulator` retains the binary64 value of each
/// output element before the final FP16 rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct GemmEngine {
    pub keep_accumulator: bool,
}

fn check_k(a_cols: usize, w_cols: usize) -> Result<(), GemmError> {
    if a_cols != w_cols {
        return Err(GemmError::ShapeMismatch(format!(
            "activation K = {a_cols}, weight K = {w_cols}"
        )));
    }
    Ok(())
}

impl GemmEngine {
    pub fn new(keep_accumulator: bool) -> Self {
        Self { keep_accumulator }
    }

    /// Shared kernel: `lhs` is `M x K`, `rhs` is `N x K`, both decoded.
    /// `scale(m, n)` multiplies the finished accumulator before rounding.
    fn run<S>(&self, m: usize, n: usize, k: usize, lhs: &[f64], rhs: &[f64], scale: S) -> GemmResult
    where
        S: Fn(usize, usize) -> f64 + Sync,
    {
        let mut acc = vec![0.0f64; m * n];
        if n > 0 {
            acc.par_chunks_mut(n).enumerate().for_each(|(i, out_row)| {
                let a = &lhs[i * k..(i + 1) * k];
                for (j, out) in out_row.iter_mut().enumerate() {
                    let w = &rhs[j * k..(j + 1) * k];
                    let mut sum = 0.0f64;
                    for kk in 0..k {
                        sum += a[kk] * w[kk];
                    }
                    *out = sum * scale(i, j);
                }
            });
        }
        let data = acc.iter().map(|&v| Fp16Bits::from_f64(v)).collect();
        GemmResult {
            rows: m,
            cols: n,
            data,
            accumulator: self.keep_accumulator.then_some(acc),
        }
    }

    pub fn fp16(&self, a: &ActivationF16, w: &TensorF16) -> Result<GemmResult, GemmError> {
        check_k(a.cols, w.cols)?;
        let lhs: Vec<f64> = a.data.iter().map(|x| x.to_f64()).collect();
        let rhs: Vec<f64> = w.data.iter().map(|x| x.to_f64()).collect();
        Ok(self.run(a.rows, w.rows, a.cols, &lhs, &rhs, |_, _| 1.0))
    }

    /// FP16 GEMM reading both planes and rebuilding each weight on the fly.
    pub fn nested_fp16(
        &self,
        a: &ActivationF16,
        w: &NestedTensor,
    ) -> Result<GemmResult, GemmError> {
        check_k(a.cols, w.cols)?;
        let lhs: Vec<f64> = a.data.iter().map(|x| x.to_f64()).collect();
        let rhs: Vec<f64> = w
            .upper
            .iter()
            .zip(&w.lower)
            .map(|(&u, &l)| reconstruct(NestedPair::new(u, l)).to_f64())
            .collect();
        Ok(self.run(a.rows, w.rows, a.cols, &lhs, &rhs, |_, _| 1.0))
    }

    /// FP8 GEMM on the upper plane only, with per-tensor absmax activation
    /// scaling and the fixed 2^-8 weight scale.
    pub fn nested_fp8(&self, a: &ActivationF16, w: &NestedTensor) -> Result<GemmResult, GemmError> {
        check_k(a.cols, w.cols)?;
        let qa = quantize_activation(a, ScaleMode::PerTensor)?;
        let lhs: Vec<f64> = qa.codes.iter().map(|&c| code_value(c)).collect();
        let rhs: Vec<f64> = w.upper.iter().map(|&c| code_value(c)).collect();
        let sa = qa.scales[0];
        Ok(self.run(a.rows, w.rows, a.cols, &lhs, &rhs, |_, _| sa / 256.0))
    }

    /// Conventional FP8 GEMM: per-token activations, per-channel weights.
    pub fn fp8_baseline(&self, a: &ActivationF16, w: &TensorF16) -> Result<GemmResult, GemmError> {
        check_k(a.cols, w.cols)?;
        let qa = quantize_activation(a, ScaleMode::PerToken)?;
        let qw = quantize_weight_per_channel(w)?;
        let lhs: Vec<f64> = qa.codes.iter().map(|&c| code_value(c)).collect();
        let rhs: Vec<f64> = qw.codes.iter().map(|&c| code_value(c)).collect();
        Ok(self.run(a.rows, w.rows, a.cols, &lhs, &rhs, |i, j| {
            qa.scales[i] * qw.scales.get(j)
        }))
    }

    /// Dispatches `path` against a stored layer. FP16 exception layers only
    /// run on the FP16 path; the baseline FP8 path quantizes the FP16 view.
    pub fn execute(
        &self,
        path: GemmPath,
        a: &ActivationF16,
        layer: &LayerPayload,
    ) -> Result<GemmResult, GemmError> {
        match (path, layer) {
            (GemmPath::Fp16, LayerPayload::Fp16(w)) => self.fp16(a, w),
            (GemmPath::Fp16, LayerPayload::Nested(w))
            | (GemmPath::NestedFp16, LayerPayload::Nested(w)) => self.nested_fp16(a, w),
            (GemmPath::NestedFp8, LayerPayload::Nested(w)) => self.nested_fp8(a, w),
            (GemmPath::Fp8Baseline, l) => self.fp8_baseline(a, &l.to_fp16()),
            (GemmPath::NestedFp16 | GemmPath::NestedFp8, LayerPayload::Fp16(w)) => {
                Err(GemmError::ExceptionLayer(w.name.clone()))
            }
        }
    }
}

pub fn gemm_fp16(a: &ActivationF16, w: &TensorF16) -> Result<GemmResult, GemmError> {
    GemmEngine::default().fp16(a, w)
}

pub fn gemm_nestedfp16(a: &ActivationF16, w: &NestedTensor) -> Result<GemmResult, GemmError> {
    GemmEngine::default().nested_fp16(a, w)
}

pub fn gemm_nestedfp8(a: &ActivationF16, w: &NestedTensor) -> Result<GemmResult, GemmError> {
    GemmEngine::default().nested_fp8(a, w)
}

pub fn gemm_fp8_baseline(a: &ActivationF16, w: &TensorF16) -> Result<GemmResult, GemmError> {
    GemmEngine::default().fp8_baseline(a, w)
}

pub fn execute(
    path: GemmPath,
    a: &ActivationF16,
    layer: &LayerPayload,
) -> Result<GemmResult, GemmError> {
    GemmEngine::default().execute(path, a, layer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorstore::{convert_layer, GemmClass};

    fn w(rows: usize, cols: usize, v: &[f64]) -> TensorF16 {
        TensorF16::from_f64("w", GemmClass::Gemm1, rows, cols, v).unwrap()
    }

    fn nested(t: TensorF16) -> NestedTensor {
        match convert_layer(t).payload {
            LayerPayload::Nested(n) => n,
            LayerPayload::Fp16(_) => panic!("expected nested"),
        }
    }

    #[test]
    fn scalar_fp16() {
        let a = ActivationF16::from_f64(1, 1, &[1.0]).unwrap();
        let r = gemm_fp16(&a, &w(1, 1, &[1.75])).unwrap();
        assert_eq!(r.to_f64(), vec![1.75]);
    }

    #[test]
    fn identity_rows_select_weight_rows() {
        let wv: Vec<f64> = (0..12).map(|i| i as f64 / 8.0 - 0.7).collect();
        let wt = w(4, 3, &wv);
        let a = ActivationF16::from_f64(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let r = gemm_fp16(&a, &wt).unwrap();
        // out[m, n] = W[n, m]
        for m in 0..3 {
            for n in 0..4 {
                assert_eq!(r.get(m, n), wt.get(n, m));
            }
        }
    }

    #[test]
    fn nested_fp16_scalar_product() {
        let a = ActivationF16::from_f64(1, 1, &[2.0]).unwrap();
        let r = gemm_nestedfp16(&a, &nested(w(1, 1, &[1.4990234375]))).unwrap();
        assert_eq!(r.to_f64(), vec![2.998046875]);
    }

    #[test]
    fn nested_fp8_scalar() {
        let a = ActivationF16::from_f64(1, 1, &[1.0]).unwrap();
        let r = gemm_nestedfp8(&a, &nested(w(1, 1, &[1.0]))).unwrap();
        assert_eq!(r.to_f64(), vec![1.0]);
    }

    #[test]
    fn baseline_fp8_scalar() {
        let a = ActivationF16::from_f64(1, 1, &[1.0]).unwrap();
        let r = gemm_fp8_baseline(&a, &w(1, 1, &[1.0])).unwrap();
        assert_eq!(r.to_f64(), vec![1.0]);
    }

    #[test]
    fn shape_mismatch() {
        let a = ActivationF16::from_f64(1, 2, &[1.0, 1.0]).unwrap();
        assert!(matches!(
            gemm_fp16(&a, &w(1, 1, &[1.0])),
            Err(GemmError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn exception_layer_cannot_run_nested_paths() {
        let a = ActivationF16::from_f64(1, 2, &[1.0, 1.0]).unwrap();
        let layer = convert_layer(w(1, 2, &[3.0, 0.5])).payload;
        assert!(matches!(
            execute(GemmPath::NestedFp8, &a, &layer),
            Err(GemmError::ExceptionLayer(_))
        ));
        assert!(execute(GemmPath::Fp16, &a, &layer).is_ok());
    }

    #[test]
    fn accumulator_is_kept_on_request() {
        let a = ActivationF16::from_f64(1, 2, &[1.0, 1.0]).unwrap();
        let r = GemmEngine::new(true)
            .fp16(&a, &w(1, 2, &[0.5, 0.25]))
            .unwrap();
        assert_eq!(r.accumulator, Some(vec![0.75]));
        assert_eq!(
            gemm_fp16(&a, &w(1, 2, &[0.5, 0.25])).unwrap().accumulator,
            None
        );
    }
}
