//! Seeded random operands for GEMM experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ActivationF16;
use crate::fpcodec::Fp16Bits;
use crate::tensorstore::{GemmClass, TensorF16};

/// Activations uniform in [-1, 1) and weights uniform in `[lo, hi)`, both
/// rounded to FP16, drawn from one ChaCha8 stream seeded with `seed`
/// (activations first).
pub fn gemm_operands(
    m: usize,
    n: usize,
    k: usize,
    weight_range: (f64, f64),
    seed: u64,
) -> (ActivationF16, TensorF16) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<Fp16Bits> = (0..m * k)
        .map(|_| Fp16Bits::from_f64(rng.gen_range(-1.0..1.0)))
        .collect();
    let (lo, hi) = weight_range;
    let w: Vec<Fp16Bits> = (0..n * k)
        .map(|_| Fp16Bits::from_f64(if lo < hi { rng.gen_range(lo..hi) } else { lo }))
        .collect();
    (
        ActivationF16::new(m, k, a).expect("m, k >= 1"),
        TensorF16::new("random", GemmClass::Other, n, k, w).expect("n, k >= 1"),
    )
}
