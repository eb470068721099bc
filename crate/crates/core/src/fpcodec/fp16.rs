//! IEEE binary16 bit patterns.

use std::fmt;

const SIGN_MASK: u16 = 0x8000;
const EXP_MASK: u16 = 0x7C00;
const MANT_MASK: u16 = 0x03FF;

/// A raw IEEE half-precision pattern: 1 sign bit, 5 exponent bits (bias 15),
/// 10 mantissa bits.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(transparent)]
pub struct Fp16Bits(pub u16);

impl Fp16Bits {
    pub const ZERO: Self = Self(0x0000);
    pub const NEG_ZERO: Self = Self(0x8000);
    pub const ONE: Self = Self(0x3C00);
    pub const INFINITY: Self = Self(0x7C00);
    pub const NEG_INFINITY: Self = Self(0xFC00);
    pub const NAN: Self = Self(0x7E00);
    /// Largest finite value, 65504.
    pub const MAX: Self = Self(0x7BFF);

    #[inline]
    pub const fn from_bits(bits: u16) -> Self {
        Self(bits)
    }

    #[inline]
    pub const fn to_bits(self) -> u16 {
        self.0
    }

    #[inline]
    pub const fn sign(self) -> u16 {
        self.0 >> 15
    }

    /// Biased exponent field, 0..=31.
    #[inline]
    pub const fn exponent(self) -> u16 {
        (self.0 & EXP_MASK) >> 10
    }

    #[inline]
    pub const fn mantissa(self) -> u16 {
        self.0 & MANT_MASK
    }

    #[inline]
    pub const fn is_finite(self) -> bool {
        self.exponent() != 31
    }

    #[inline]
    pub const fn is_nan(self) -> bool {
        self.exponent() == 31 && self.mantissa() != 0
    }

    /// Flips the sign bit only.
    #[inline]
    pub const fn negate(self) -> Self {
        Self(self.0 ^ SIGN_MASK)
    }

    /// Exact value of the pattern. Every binary16 value is representable in
    /// binary64, so this never rounds.
    pub fn to_f64(self) -> f64 {
        let sign = if self.sign() == 1 { -1.0 } else { 1.0 };
        let e = self.exponent() as i32;
        let m = self.mantissa() as f64;
        match e {
            0 => sign * m * exp2i(-24),
            31 if self.mantissa() == 0 => sign * f64::INFINITY,
            31 => f64::NAN,
            _ => sign * (1024.0 + m) * exp2i(e - 25),
        }
    }

    pub fn to_f32(self) -> f32 {
        self.to_f64() as f32
    }

    /// Rounds `v` to the nearest binary16 value, ties to even. Values whose
    /// magnitude reaches 65520 overflow to infinity; NaN maps to the quiet NaN
    /// with the input's sign.
    pub fn from_f64(v: f64) -> Self {
        let sign = ((v.to_bits() >> 48) as u16) & SIGN_MASK;
        if v.is_nan() {
            return Self(sign | Self::NAN.0);
        }
        let a = v.abs();
        if a >= 65520.0 {
            return Self(sign | EXP_MASK);
        }
        // Half of the smallest subnormal ties to zero (even).
        if a <= exp2i(-25) {
            return Self(sign);
        }
        let exp = (((a.to_bits() >> 52) & 0x7FF) as i32 - 1023).max(-14);
        let q = (a / exp2i(exp - 10)).round_ties_even() as u16;
        if q < 1024 {
            // only reachable for exp == -14: subnormal
            return Self(sign | q);
        }
        let (exp, q) = if q == 2048 { (exp + 1, 1024) } else { (exp, q) };
        Self(sign | (((exp + 15) as u16) << 10) | (q - 1024))
    }

    pub fn from_f32(v: f32) -> Self {
        Self::from_f64(v as f64)
    }
}

impl fmt::Debug for Fp16Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp16Bits({:#06x} = {})", self.0, self.to_f64())
    }
}

impl fmt::Display for Fp16Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f64(), f)
    }
}

impl From<u16> for Fp16Bits {
    fn from(bits: u16) -> Self {
        Self(bits)
    }
}

/// 2^e for exponents inside the normal binary64 range.
#[inline]
pub(crate) fn exp2i(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}
