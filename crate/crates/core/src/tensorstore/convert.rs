use rayon::prelude::*;

use super::tensor::{
    Layer, LayerEntry, LayerPayload, LayerStats, NestedTensor, Storage, TensorF16,
};
use crate::fpcodec::{decompose_unchecked, is_applicable};

/// Min/max over finite elements (0.0 when there are none) and the number of
/// elements that are not nested-applicable.
pub fn layer_stats(t: &TensorF16) -> LayerStats {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut out_of_range = 0;
    for &x in &t.data {
        if !is_applicable(x) {
            out_of_range += 1;
        }
        if x.is_finite() {
            let v = x.to_f64();
            min = min.min(v);
            max = max.max(v);
        }
    }
    if min > max {
        min = 0.0;
        max = 0.0;
    }
    LayerStats {
        min_value: min,
        max_value: max,
        out_of_range_count: out_of_range,
    }
}

/// Converts one layer. All elements applicable gives a nested layer; a single
/// out-of-range element keeps the whole tensor as an FP16 exception layer.
pub fn convert_layer(t: TensorF16) -> Layer {
    let stats = layer_stats(&t);
    let source_crc32 = crc32fast::hash(&t.to_le_bytes());
    let storage = if stats.out_of_range_count == 0 {
        Storage::Nested
    } else {
        Storage::Fp16Exception
    };
    let entry = LayerEntry {
        name: t.name.clone(),
        gemm_class: t.gemm_class,
        storage,
        shape: [t.rows, t.cols],
        stats,
        source_crc32,
    };
    let payload = match storage {
        Storage::Fp16Exception => LayerPayload::Fp16(t),
        Storage::Nested => {
            let (upper, lower) = t
                .data
                .iter()
                .map(|&x| {
                    let p = decompose_unchecked(x);
                    (p.upper.0, p.lower.0)
                })
                .unzip();
            LayerPayload::Nested(NestedTensor {
                name: t.name,
                gemm_class: t.gemm_class,
                rows: t.rows,
                cols: t.cols,
                upper,
                lower,
            })
        }
    };
    Layer { entry, payload }
}

/// Converts layers in parallel; output order follows input order.
pub fn convert_model(tensors: Vec<TensorF16>) -> super::ModelContainer {
    let layers = tensors.into_par_iter().map(convert_layer).collect();
    super::ModelContainer::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpcodec::Fp16Bits;
    use crate::tensorstore::GemmClass;

    fn tensor(vals: &[f64], rows: usize, cols: usize) -> TensorF16 {
        TensorF16::from_f64("w", GemmClass::Gemm1, rows, cols, vals).unwrap()
    }

    #[test]
    fn in_range_tensor_becomes_nested() {
        let layer = convert_layer(tensor(&[1.0, -0.5, 0.0, 1.75], 2, 2));
        assert_eq!(layer.entry.storage, Storage::Nested);
        let LayerPayload::Nested(n) = &layer.payload else {
            panic!("expected nested payload");
        };
        assert_eq!(n.upper, vec![0x78, 0xF0, 0x00, 0x7E]);
        assert_eq!(n.lower, vec![0x00, 0x00, 0x00, 0x00]);
        assert_eq!(layer.entry.stats.min_value, -0.5);
        assert_eq!(layer.entry.stats.max_value, 1.75);
    }

    #[test]
    fn one_large_value_makes_an_exception_layer() {
        let src = tensor(&[1.0, 2.0, 0.25, -1.0], 2, 2);
        let layer = convert_layer(src.clone());
        assert_eq!(layer.entry.storage, Storage::Fp16Exception);
        assert_eq!(layer.entry.stats.out_of_range_count, 1);
        assert_eq!(layer.payload, LayerPayload::Fp16(src));
    }

    #[test]
    fn single_zero_element() {
        let layer = convert_layer(tensor(&[0.0], 1, 1));
        let LayerPayload::Nested(n) = &layer.payload else {
            panic!("expected nested payload");
        };
        assert_eq!(
            (n.upper.as_slice(), n.lower.as_slice()),
            (&[0u8][..], &[0u8][..])
        );
    }

    #[test]
    fn nested_payload_is_memory_neutral_and_lossless() {
        let vals: Vec<f64> = (0..64).map(|i| (i as f64 - 32.0) / 19.0).collect();
        let src = tensor(&vals, 8, 8);
        let layer = convert_layer(src.clone());
        assert_eq!(layer.payload.byte_len(), 2 * src.len());
        assert_eq!(layer.payload.to_fp16(), src);
    }

    #[test]
    fn non_finite_values_are_exceptions_and_skipped_in_stats() {
        let src = TensorF16::new(
            "w",
            GemmClass::Gemm2,
            1,
            3,
            vec![Fp16Bits::NAN, Fp16Bits::INFINITY, Fp16Bits::ONE],
        )
        .unwrap();
        let layer = convert_layer(src);
        assert_eq!(layer.entry.stats.out_of_range_count, 2);
        assert_eq!(layer.entry.stats.max_value, 1.0);
    }
}
