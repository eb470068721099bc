use proptest::prelude::*;

use nestedfp_core::fpcodec::{e4m3_to_f64, Fp16Bits};
use nestedfp_core::quantgemm::random::gemm_operands;
use nestedfp_core::quantgemm::{
    gemm_fp16, gemm_fp8_baseline, gemm_nestedfp16, gemm_nestedfp8, quantize_weight_per_channel,
    ActivationF16, GemmEngine,
};
use nestedfp_core::tensorstore::{convert_layer, GemmClass, LayerPayload, NestedTensor, TensorF16};

fn nested(w: &TensorF16) -> NestedTensor {
    match convert_layer(w.clone()).payload {
        LayerPayload::Nested(t) => t,
        LayerPayload::Fp16(_) => panic!("weights must be in range"),
    }
}

/// Independent triple loop: binary64 products summed in ascending k.
fn naive(a: &ActivationF16, w: &TensorF16) -> Vec<u16> {
    let mut out = Vec::new();
    for i in 0..a.rows {
        for j in 0..w.rows {
            let mut s = 0.0f64;
            for k in 0..a.cols {
                s += a.get(i, k).to_f64() * w.get(j, k).to_f64();
            }
            out.push(Fp16Bits::from_f64(s).0);
        }
    }
    out
}

/// Finite E4M3 magnitudes no larger than 448.
fn e4m3_value() -> impl Strategy<Value = f64> {
    (0u8..0x7F, any::<bool>()).prop_map(|(c, neg)| {
        let v = e4m3_to_f64(c).unwrap();
        if neg {
            -v
        } else {
            v
        }
    })
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..9, 1usize..9, 1usize..33)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nested_fp16_is_bitwise_fp16((m, n, k) in dims(), seed in any::<u64>()) {
        let (a, w) = gemm_operands(m, n, k, (-1.75, 1.75), seed);
        let reference = gemm_fp16(&a, &w).unwrap();
        prop_assert!(reference.bits_equal(&gemm_nestedfp16(&a, &nested(&w)).unwrap()));
        let bits: Vec<u16> = reference.data.iter().map(|x| x.0).collect();
        prop_assert_eq!(bits, naive(&a, &w));
    }

    #[test]
    fn repeated_runs_are_identical((m, n, k) in dims(), seed in any::<u64>()) {
        let (a, w) = gemm_operands(m, n, k, (-1.75, 1.75), seed);
        let t = nested(&w);
        let engine = GemmEngine::new(true);
        for _ in 0..3 {
            prop_assert_eq!(engine.nested_fp8(&a, &t).unwrap(), engine.nested_fp8(&a, &t).unwrap());
            prop_assert!(gemm_fp8_baseline(&a, &w).unwrap().bits_equal(&gemm_fp8_baseline(&a, &w).unwrap()));
        }
    }

    #[test]
    fn fp8_power_of_two_scale_invariance((m, n, k) in dims(), seed in any::<u64>(), p in 0i32..5) {
        let (a, w) = gemm_operands(m, n, k, (-1.75, 1.75), seed);
        let t = nested(&w);
        let factor = 2f64.powi(p);
        let scaled = ActivationF16::new(
            a.rows,
            a.cols,
            a.data.iter().map(|x| Fp16Bits::from_f64(x.to_f64() * factor)).collect(),
        )
        .unwrap();
        let engine = GemmEngine::new(true);
        let base = engine.nested_fp8(&a, &t).unwrap();
        let big = engine.nested_fp8(&scaled, &t).unwrap();
        let (acc0, acc1) = (base.accumulator.unwrap(), big.accumulator.unwrap());
        for i in 0..acc0.len() {
            prop_assert_eq!(acc1[i], acc0[i] * factor);
            let y = base.data[i].to_f64();
            if y == 0.0 || y.abs() >= 2f64.powi(-14) {
                prop_assert_eq!(big.data[i].to_f64(), y * factor);
            }
        }
    }

    #[test]
    fn fp8_paths_exact_on_grid(
        (m, n, k) in dims(),
        a_codes in proptest::collection::vec(e4m3_value(), 8 * 32),
        w_codes in proptest::collection::vec(e4m3_value(), 8 * 32),
    ) {
        // Every row holds a 448 so both per-tensor and per-row absmax scales
        // are exactly 2^-8 and each operand is its own E4M3 code times 2^-8.
        let grid = |codes: &[f64], rows: usize| -> Vec<f64> {
            let mut v: Vec<f64> = codes[..rows * k].iter().map(|c| c / 256.0).collect();
            for r in 0..rows {
                v[r * k] = 448.0 / 256.0;
            }
            v
        };
        let a = ActivationF16::from_f64(m, k, &grid(&a_codes, m)).unwrap();
        let w = TensorF16::from_f64("w", GemmClass::Other, n, k, &grid(&w_codes, n)).unwrap();
        let reference = gemm_fp16(&a, &w).unwrap();
        prop_assert!(reference.bits_equal(&gemm_nestedfp8(&a, &nested(&w)).unwrap()));
        prop_assert!(reference.bits_equal(&gemm_fp8_baseline(&a, &w).unwrap()));
    }

    #[test]
    fn per_channel_dequant_error(
        (n, k) in (1usize..6, 1usize..40),
        seed in any::<u64>(),
        range in prop_oneof![Just(1.0f64), Just(1e-3), Just(100.0), Just(3e4)],
    ) {
        let (_, w) = gemm_operands(1, n, k, (-range, range), seed);
        let q = quantize_weight_per_channel(&w).unwrap();
        let deq = q.dequantize();
        for (i, x) in w.data.iter().enumerate() {
            let v = x.to_f64();
            let scale = q.scales.get(i / k);
            if v.abs() >= scale * 2f64.powi(-6) {
                prop_assert!((deq[i] - v).abs() <= v.abs() / 16.0, "w={} deq={}", v, deq[i]);
            }
        }
    }
}
