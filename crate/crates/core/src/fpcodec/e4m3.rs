//! E4M3 minifloat: 1 sign bit, 4 exponent bits (bias 7), 3 mantissa bits.
//! No infinities; `S.1111.111` is the only NaN encoding per sign.

use super::fp16::exp2i;

/// Largest finite magnitude.
pub const E4M3_MAX: f64 = 448.0;

/// Positive code of the largest finite magnitude.
pub const E4M3_MAX_CODE: u8 = 0x7E;

#[inline]
pub const fn is_nan_code(code: u8) -> bool {
    code & 0x7F == 0x7F
}

/// Exact value of an E4M3 code, `None` for the NaN code.
pub fn e4m3_to_f64(code: u8) -> Option<f64> {
    if is_nan_code(code) {
        return None;
    }
    let sign = if code & 0x80 != 0 { -1.0 } else { 1.0 };
    let e = ((code >> 3) & 0xF) as i32;
    let m = (code & 0x7) as f64;
    Some(if e == 0 {
        sign * m * exp2i(-9)
    } else {
        sign * (8.0 + m) * exp2i(e - 10)
    })
}

/// Nearest E4M3 code to `v`, ties to even, saturating at ±448.
///
/// Arithmetic rounding on the binary64 value, used on the activation and
/// per-channel quantization paths. Callers reject NaN before reaching here.
pub fn e4m3_from_f64_sat(v: f64) -> u8 {
    debug_assert!(!v.is_nan());
    let sign = if v.is_sign_negative() { 0x80 } else { 0x00 };
    let a = v.abs();
    if a >= E4M3_MAX {
        return sign | E4M3_MAX_CODE;
    }
    if a <= exp2i(-10) {
        return sign;
    }
    let exp = (((a.to_bits() >> 52) & 0x7FF) as i32 - 1023).max(-6);
    let q = (a / exp2i(exp - 3)).round_ties_even() as u8;
    if q < 8 {
        return sign | q;
    }
    let (exp, q) = if q == 16 { (exp + 1, 8) } else { (exp, q) };
    let code = (((exp + 7) as u8) << 3) | (q - 8);
    // 464 and above rounds into the NaN slot; clamp to the max finite code.
    sign | code.min(E4M3_MAX_CODE)
}
