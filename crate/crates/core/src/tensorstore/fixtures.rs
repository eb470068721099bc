//! Synthetic models with planted exception layers, for census and
//! end-to-end tests. The weights are random; only the planting is meaningful.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{GemmClass, TensorF16};

/// Layer count and planted exceptions for one GEMM class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassPlan {
    pub class: GemmClass,
    pub total: usize,
    pub exceptions: usize,
}

const fn plan(class: GemmClass, total: usize, exceptions: usize) -> ClassPlan {
    ClassPlan {
        class,
        total,
        exceptions,
    }
}

/// Layer counts of an 8B dense model: 224 layers, every one in range.
pub const LLAMA_8B_PLAN: [ClassPlan; 4] = [
    plan(GemmClass::Gemm1, 96, 0),
    plan(GemmClass::Gemm2, 32, 0),
    plan(GemmClass::Gemm3, 64, 0),
    plan(GemmClass::Gemm4, 32, 0),
];

/// Layer counts of a 14B model: 160 layers, 2 GEMM2 and 12 GEMM4 of them
/// holding out-of-range values.
pub const PHI4_14B_PLAN: [ClassPlan; 4] = [
    plan(GemmClass::Gemm1, 40, 0),
    plan(GemmClass::Gemm2, 40, 2),
    plan(GemmClass::Gemm3, 40, 0),
    plan(GemmClass::Gemm4, 40, 12),
];

/// Builds `rows x cols` layers following `plans`. In-range layers draw from
/// N(0, 0.05) clipped to ±1.75; each planted exception layer additionally gets
/// one element with magnitude in [2, 8).
pub fn synthetic_model(plans: &[ClassPlan], rows: usize, cols: usize, seed: u64) -> Vec<TensorF16> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, 0.05).expect("valid normal");
    let mut out = Vec::new();
    for p in plans {
        assert!(p.exceptions <= p.total, "more exceptions than layers");
        let planted = sample(&mut rng, p.total, p.exceptions).into_vec();
        for i in 0..p.total {
            let mut values: Vec<f64> = (0..rows * cols)
                .map(|_| normal.sample(&mut rng).clamp(-1.75, 1.75))
                .collect();
            if planted.contains(&i) {
                let at = rng.gen_range(0..values.len());
                let sign = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
                values[at] = sign * rng.gen_range(2.0..8.0);
            }
            let name = format!("{}.{i}", p.class.as_str().to_ascii_lowercase());
            out.push(
                TensorF16::from_f64(name, p.class, rows, cols, &values)
                    .expect("shape is consistent"),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorstore::{census, convert_model};

    #[test]
    fn planting_matches_census() {
        let model = convert_model(synthetic_model(&PHI4_14B_PLAN, 4, 8, 3));
        let r = census(&model);
        assert_eq!(r.total_ratio(), "146/160 (91.2%)");
        assert_eq!(r.class(GemmClass::Gemm2).ratio(), "38/40");
        assert_eq!(r.class(GemmClass::Gemm4).ratio(), "28/40");
    }

    #[test]
    fn deterministic_for_seed() {
        let a = synthetic_model(&LLAMA_8B_PLAN[..1], 2, 2, 9);
        let b = synthetic_model(&LLAMA_8B_PLAN[..1], 2, 2, 9);
        assert_eq!(a, b);
    }
}
