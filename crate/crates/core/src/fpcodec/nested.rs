//! The dual-plane split of an FP16 weight.
//!
//! An applicable FP16 pattern `S E1..E5 M1..M10` (with `E1 = 0`) is stored as
//! two bytes:
//!
//! ```text
//! upper = S | E2..E5 | M1..M3   rounded to nearest even on M4..M10
//! lower = M3..M10               copied verbatim
//! ```
//!
//! Read alone, `upper` is the E4M3 encoding of `value * 2^8`. Together the
//! two bytes rebuild the FP16 pattern exactly: `M3` appears in both bytes, so
//! a mismatch between the LSB of `upper` and the MSB of `lower` reveals that
//! the rounding incremented `upper`.

use std::fmt;

use super::e4m3::{e4m3_to_f64, is_nan_code};
use super::fp16::{exp2i, Fp16Bits};
use super::CodecError;

/// Upper byte of a nested pair, an E4M3 code of the weight scaled by 256.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Default)]
#[repr(transparent)]
pub struct UpperCode(pub u8);

/// Lower byte of a nested pair: FP16 mantissa bits M3..M10.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Default)]
#[repr(transparent)]
pub struct LowerByte(pub u8);

#[derive(Copy, Clone, PartialEq, Eq, Hash, Default)]
pub struct NestedPair {
    pub upper: UpperCode,
    pub lower: LowerByte,
}

impl NestedPair {
    pub const fn new(upper: u8, lower: u8) -> Self {
        Self {
            upper: UpperCode(upper),
            lower: LowerByte(lower),
        }
    }

    /// True when the LSB of `upper` disagrees with the MSB of `lower`, which
    /// happens exactly when decomposition rounded up.
    #[inline]
    pub const fn checksum_mismatch(self) -> bool {
        (self.upper.0 & 1) != (self.lower.0 >> 7)
    }
}

impl fmt::Debug for UpperCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UpperCode({:#04x})", self.0)
    }
}

impl fmt::Debug for LowerByte {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LowerByte({:#04x})", self.0)
    }
}

impl fmt::Debug for NestedPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "NestedPair({:#04x}, {:#04x})",
            self.upper.0, self.lower.0
        )
    }
}

const E1_BIT: u16 = 0x4000;
const HALFWAY: u16 = 64;

/// Bits E2..E5 M1..M3 of an FP16 pattern as a 7-bit value.
#[inline]
const fn head7(bits: u16) -> u8 {
    ((bits >> 7) & 0x7F) as u8
}

/// Whether M4..M10 forces the 3-bit mantissa up under ties-to-even.
#[inline]
const fn rounds_up(bits: u16) -> bool {
    let rem = bits & 0x7F;
    rem > HALFWAY || (rem == HALFWAY && (bits >> 7) & 1 == 1)
}

/// Whether `x` can be stored as a nested pair: the top exponent bit is clear
/// and the rounded 7-bit magnitude code is a finite E4M3 code (at most 0x7E).
///
/// Magnitudes up to 1.8125 qualify when they round down (or tie to even)
/// into 448/256 = 1.75.
pub const fn is_applicable(x: Fp16Bits) -> bool {
    let bits = x.0;
    if bits & E1_BIT != 0 {
        return false;
    }
    head7(bits) as u16 + rounds_up(bits) as u16 <= 0x7E
}

pub fn decompose(x: Fp16Bits) -> Result<NestedPair, CodecError> {
    if !is_applicable(x) {
        return Err(CodecError::NotApplicable(x.0));
    }
    Ok(decompose_unchecked(x))
}

/// Caller guarantees `is_applicable(x)`.
#[inline]
pub(crate) const fn decompose_unchecked(x: Fp16Bits) -> NestedPair {
    let bits = x.0;
    let sign = ((bits >> 8) & 0x80) as u8;
    // The increment cannot carry into the sign: the rounded head is <= 0x7E.
    let upper = (sign | head7(bits)) + rounds_up(bits) as u8;
    NestedPair::new(upper, bits as u8)
}

/// Branch-free reconstruction.
///
/// Subtracting `M3` (the MSB of `lower`) from `upper` undoes a round-up that
/// started from `M3 = 1`; every other case only disturbs the LSB of `upper`,
/// which the `0x7E` mask drops because `lower` carries the true `M3`.
#[inline]
pub const fn reconstruct(p: NestedPair) -> Fp16Bits {
    let upper = p.upper.0;
    let lower = p.lower.0;
    let corrected = upper.wrapping_sub(lower >> 7);
    Fp16Bits(((upper & 0x80) as u16) << 8 | ((corrected & 0x7E) as u16) << 7 | lower as u16)
}

/// Reference reconstruction that spells out the checksum cases. Kept for
/// differential testing against [`reconstruct`].
pub fn reconstruct_branchy(p: NestedPair) -> Fp16Bits {
    let upper = if p.checksum_mismatch() {
        // Rounded up: step back one unit at the M3 position.
        p.upper.0.wrapping_sub(1)
    } else {
        p.upper.0
    };
    let sign = (upper >> 7) as u16;
    let exponent = ((upper >> 3) & 0x0F) as u16; // E2..E5, E1 restored as 0
    let top_mantissa = ((upper >> 1) & 0x03) as u16; // M1 M2
    Fp16Bits(sign << 15 | exponent << 10 | top_mantissa << 8 | p.lower.0 as u16)
}

/// Dequantized weight carried by an upper byte: its E4M3 value over 256.
pub fn decode_upper(u: UpperCode) -> Result<f64, CodecError> {
    e4m3_to_f64(u.0)
        .map(|v| v * exp2i(-8))
        .ok_or(CodecError::NanCode(u.0))
}

/// Nearest finite E4M3 code to `v * 256`, ties to the even code, found by
/// searching the value table rather than by manipulating bits.
///
/// Errors when `|v * 256|` exceeds 464 (the midpoint past 448 would round into
/// the NaN slot) or when `v` is NaN.
pub fn oracle_e4m3_rne(v: f64) -> Result<UpperCode, CodecError> {
    let target = v * 256.0;
    if v.is_nan() || target.abs() > 464.0 {
        return Err(CodecError::OutOfRange(v));
    }
    let sign = if v.is_sign_negative() { 0x80u8 } else { 0x00 };
    let mut best: Option<(u8, f64)> = None;
    for magnitude in 0u8..=0x7F {
        let code = sign | magnitude;
        if is_nan_code(code) {
            continue;
        }
        let value = e4m3_to_f64(code).expect("finite code");
        let dist = (value - target).abs();
        best = match best {
            None => Some((code, dist)),
            Some((_, d)) if dist < d => Some((code, dist)),
            Some((c, d)) if dist == d && code & 1 == 0 && c & 1 == 1 => Some((code, dist)),
            keep => keep,
        };
    }
    Ok(UpperCode(best.expect("table is non-empty").0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(bits: u16) -> (u8, u8) {
        let p = decompose(Fp16Bits(bits)).unwrap();
        (p.upper.0, p.lower.0)
    }

    #[test]
    fn applicability_examples() {
        assert!(!is_applicable(Fp16Bits(0x4000)));
        assert!(is_applicable(Fp16Bits(0x3F00)));
        assert!(!is_applicable(Fp16Bits(0x3F80)));
        assert!(is_applicable(Fp16Bits(0x3F40)));
        assert!(!is_applicable(Fp16Bits(0x3F41)));
        assert!(!is_applicable(Fp16Bits::INFINITY));
        assert!(!is_applicable(Fp16Bits::NAN));
        assert!(is_applicable(Fp16Bits::NEG_ZERO));
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(pair(0x3C00), (0x78, 0x00));
        assert_eq!(pair(0x3C41), (0x79, 0x41));
        assert_eq!(pair(0x3DFF), (0x7C, 0xFF));
        assert_eq!(pair(0xB800), (0xF0, 0x00));
        assert_eq!(pair(0x3F40), (0x7E, 0x40));
        assert_eq!(pair(0x8000), (0x80, 0x00));
        assert_eq!(
            decompose(Fp16Bits(0x4000)),
            Err(CodecError::NotApplicable(0x4000))
        );
    }

    #[test]
    fn reconstruct_examples() {
        for (u, l, want) in [
            (0x79, 0x41, 0x3C41),
            (0x7C, 0xFF, 0x3DFF),
            (0x78, 0x00, 0x3C00),
        ] {
            assert_eq!(reconstruct(NestedPair::new(u, l)), Fp16Bits(want));
            assert_eq!(reconstruct_branchy(NestedPair::new(u, l)), Fp16Bits(want));
        }
    }

    #[test]
    fn decode_upper_examples() {
        assert_eq!(decode_upper(UpperCode(0x78)), Ok(1.0));
        assert_eq!(decode_upper(UpperCode(0x7E)), Ok(1.75));
        assert_eq!(decode_upper(UpperCode(0x01)), Ok(2f64.powi(-17)));
        assert_eq!(
            decode_upper(UpperCode(0x7F)),
            Err(CodecError::NanCode(0x7F))
        );
        assert_eq!(
            decode_upper(UpperCode(0xFF)),
            Err(CodecError::NanCode(0xFF))
        );
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(oracle_e4m3_rne(1.0), Ok(UpperCode(0x78)));
        assert_eq!(oracle_e4m3_rne(1.8125), Ok(UpperCode(0x7E)));
        assert_eq!(oracle_e4m3_rne(-0.5), Ok(UpperCode(0xF0)));
        assert_eq!(oracle_e4m3_rne(-0.0), Ok(UpperCode(0x80)));
        assert!(oracle_e4m3_rne(1.8126).is_err());
        assert!(oracle_e4m3_rne(2.0).is_err());
        assert!(oracle_e4m3_rne(f64::NAN).is_err());
    }

    #[test]
    fn checksum_flags_exactly_the_round_ups() {
        for bits in 0u16..=u16::MAX {
            let x = Fp16Bits(bits);
            if is_applicable(x) {
                let p = decompose_unchecked(x);
                assert_eq!(p.checksum_mismatch(), rounds_up(bits), "{bits:#06x}");
            }
        }
    }

    #[test]
    fn no_round_up_keeps_exponent_field() {
        for bits in 0u16..0x4000 {
            let x = Fp16Bits(bits);
            if is_applicable(x) && !rounds_up(bits) {
                let p = decompose_unchecked(x);
                assert_eq!(((p.upper.0 >> 3) & 0xF) as u16, x.exponent());
            }
        }
    }

    #[test]
    fn negation_only_touches_upper_sign() {
        for bits in 0u16..0x4000 {
            let x = Fp16Bits(bits);
            if is_applicable(x) {
                let p = decompose_unchecked(x);
                let n = decompose(x.negate()).unwrap();
                assert_eq!(n.upper.0, p.upper.0 ^ 0x80);
                assert_eq!(n.lower, p.lower);
            }
        }
    }
}
