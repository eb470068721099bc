use serde::{Deserialize, Serialize};

use super::{GemmError, GemmResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// Largest per-element relative error; elements whose reference is zero
    /// contribute their absolute error.
    pub max_rel: f64,
    /// `||test - ref||_F / ||ref||_F` (the absolute norm when `ref` is zero).
    pub frob_rel: f64,
    pub mse: f64,
}

pub fn error_metrics(reference: &GemmResult, test: &GemmResult) -> Result<ErrorMetrics, GemmError> {
    if (reference.rows, reference.cols) != (test.rows, test.cols) {
        return Err(GemmError::ShapeMismatch(format!(
            "reference {}x{}, test {}x{}",
            reference.rows, reference.cols, test.rows, test.cols
        )));
    }
    let mut max_rel = 0.0f64;
    let mut diff_sq = 0.0f64;
    let mut ref_sq = 0.0f64;
    for (r, t) in reference.data.iter().zip(&test.data) {
        let (r, t) = (r.to_f64(), t.to_f64());
        let d = (t - r).abs();
        let rel = if r == 0.0 { d } else { d / r.abs() };
        max_rel = max_rel.max(rel);
        diff_sq += d * d;
        ref_sq += r * r;
    }
    let n = reference.data.len().max(1) as f64;
    let frob = diff_sq.sqrt();
    Ok(ErrorMetrics {
        max_rel,
        frob_rel: if ref_sq == 0.0 {
            frob
        } else {
            frob / ref_sq.sqrt()
        },
        mse: diff_sq / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpcodec::Fp16Bits;

    fn res(v: &[f64]) -> GemmResult {
        GemmResult {
            rows: 1,
            cols: v.len(),
            data: v.iter().map(|&x| Fp16Bits::from_f64(x)).collect(),
            accumulator: None,
        }
    }

    #[test]
    fn identical_is_zero() {
        let m = error_metrics(&res(&[1.0, -2.0, 0.0]), &res(&[1.0, -2.0, 0.0])).unwrap();
        assert_eq!((m.max_rel, m.frob_rel, m.mse), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_element() {
        let m = error_metrics(&res(&[1.0]), &res(&[1.0625])).unwrap();
        assert_eq!(m.max_rel, 0.0625);
        assert_eq!(m.frob_rel, 0.0625);
        assert_eq!(m.mse, 0.0625 * 0.0625);
    }

    #[test]
    fn zero_reference_uses_absolute_error() {
        let m = error_metrics(&res(&[0.0, 1.0]), &res(&[0.5, 1.0])).unwrap();
        assert_eq!(m.max_rel, 0.5);
    }

    #[test]
    fn shape_mismatch() {
        assert!(error_metrics(&res(&[1.0]), &res(&[1.0, 2.0])).is_err());
    }
}
