//! Exhaustive verification of the codec over FP16 bit patterns.

use serde::{Deserialize, Serialize};

use super::fp16::Fp16Bits;
use super::nested::{is_applicable, oracle_e4m3_rne, reconstruct, reconstruct_branchy, NestedPair};
use super::CodecError;

/// Number of failing patterns kept in a report for diagnostics.
pub const MAX_RECORDED_FAILURES: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Patterns visited.
    pub checked: usize,
    pub applicable: usize,
    /// `reconstruct(decompose(x)) != x`
    pub failures_roundtrip: usize,
    /// `decompose(x).upper` differs from the value-search oracle.
    pub failures_oracle: usize,
    /// Branch-free and branchy reconstruction disagree.
    pub failures_branchy: usize,
    /// Cases where `upper - M3` borrowed into the sign bit.
    pub sign_borrows: usize,
    /// First few failing patterns, ascending.
    pub failing_patterns: Vec<u16>,
}

impl VerificationReport {
    pub fn failures(&self) -> usize {
        self.failures_roundtrip + self.failures_oracle + self.failures_branchy + self.sign_borrows
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }
}

/// Runs every check over all 65,536 FP16 patterns.
pub fn verify_exhaustive() -> VerificationReport {
    verify_patterns(0..=u16::MAX, super::decompose)
}

/// Runs the checks over `patterns`, using `decompose` as the encoder under
/// test. Non-applicable patterns are skipped.
pub fn verify_patterns<I, F>(patterns: I, decompose: F) -> VerificationReport
where
    I: IntoIterator<Item = u16>,
    F: Fn(Fp16Bits) -> Result<NestedPair, CodecError>,
{
    let mut report = VerificationReport::default();
    for bits in patterns {
        report.checked += 1;
        let x = Fp16Bits(bits);
        if !is_applicable(x) {
            continue;
        }
        report.applicable += 1;
        let mut failed = false;
        let pair = match decompose(x) {
            Ok(p) => p,
            Err(_) => {
                report.failures_roundtrip += 1;
                record(&mut report, bits);
                continue;
            }
        };
        if reconstruct(pair) != x {
            report.failures_roundtrip += 1;
            failed = true;
        }
        if oracle_e4m3_rne(x.to_f64()) != Ok(pair.upper) {
            report.failures_oracle += 1;
            failed = true;
        }
        if reconstruct(pair) != reconstruct_branchy(pair) {
            report.failures_branchy += 1;
            failed = true;
        }
        let m3 = pair.lower.0 >> 7;
        if (pair.upper.0 & 0x80) != (pair.upper.0.wrapping_sub(m3) & 0x80) {
            report.sign_borrows += 1;
            failed = true;
        }
        if failed {
            record(&mut report, bits);
        }
    }
    report
}

fn record(report: &mut VerificationReport, bits: u16) {
    if report.failing_patterns.len() < MAX_RECORDED_FAILURES {
        report.failing_patterns.push(bits);
    }
}
