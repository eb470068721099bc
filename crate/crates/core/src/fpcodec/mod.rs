//! Bit-exact codec between FP16 weights and nested (upper, lower) byte pairs.

mod e4m3;
mod fp16;
mod nested;
mod verify;

use thiserror::Error;

pub use e4m3::{e4m3_from_f64_sat, e4m3_to_f64, is_nan_code, E4M3_MAX, E4M3_MAX_CODE};
pub use fp16::Fp16Bits;
pub(crate) use nested::decompose_unchecked;
pub use nested::{
    decode_upper, decompose, is_applicable, oracle_e4m3_rne, reconstruct, reconstruct_branchy,
    LowerByte, NestedPair, UpperCode,
};
pub use verify::{verify_exhaustive, verify_patterns, VerificationReport, MAX_RECORDED_FAILURES};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CodecError {
    #[error("fp16 pattern {0:#06x} is not representable as a nested pair")]
    NotApplicable(u16),
    #[error("upper code {0:#04x} is the E4M3 NaN encoding")]
    NanCode(u8),
    #[error("value {0} is outside the finite E4M3 range after scaling by 256")]
    OutOfRange(f64),
}
