//! Dual-plane FP16 weight storage.
//!
//! Each FP16 weight whose magnitude fits the E4M3 range after a fixed 2^8
//! scale is split into an upper byte (a ready-to-use E4M3 code) and a lower
//! byte (the tail of the FP16 mantissa). FP8 execution reads only the upper
//! plane; FP16 execution reads both and rebuilds the original bits exactly.
//!
//! - [`fpcodec`]: the per-element codec and its verification oracles
//! - [`tensorstore`]: layer conversion, the NFPT container and the
//!   applicability census
//! - [`quantgemm`]: reference GEMM engines for FP16, nested FP16, nested FP8
//!   and baseline FP8
//! - [`servesim`]: a trace-driven continuous-batching simulator with
//!   per-iteration precision switching

pub mod fpcodec;
pub mod quantgemm;
pub mod servesim;
pub mod tensorstore;
