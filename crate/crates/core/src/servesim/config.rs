use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "fp16")]
    Fp16,
    #[serde(rename = "fp8")]
    Fp8,
}

/// Affine iteration cost: `base + per_token * tokens`, with the token term
/// divided by `fp8_speedup` in FP8 iterations.
///
/// `exception_fraction` is the share of per-token work done by layers that
/// stay in FP16 regardless of the iteration's precision. `jitter` scales each
/// iteration by a seeded uniform factor in `[1 - jitter, 1 + jitter]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub fp16_base_ms: f64,
    pub fp16_per_token_ms: f64,
    pub fp8_speedup: f64,
    /// Overrides the base cost of FP8 iterations.
    pub fp8_base_ms: Option<f64>,
    pub exception_fraction: f64,
    pub jitter: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            fp16_base_ms: 10.0,
            fp16_per_token_ms: 0.08,
            fp8_speedup: 1.5,
            fp8_base_ms: None,
            exception_fraction: 0.0,
            jitter: 0.0,
        }
    }
}

impl LatencyModel {
    pub fn affine(base_ms: f64, per_token_ms: f64, fp8_speedup: f64) -> Self {
        Self {
            fp16_base_ms: base_ms,
            fp16_per_token_ms: per_token_ms,
            fp8_speedup,
            ..Self::default()
        }
    }

    pub fn iteration_latency(&self, precision: Precision, tokens: u64) -> f64 {
        let t = tokens as f64;
        match precision {
            Precision::Fp16 => self.fp16_base_ms + self.fp16_per_token_ms * t,
            Precision::Fp8 => {
                let base = self.fp8_base_ms.unwrap_or(self.fp16_base_ms);
                let f = self.exception_fraction;
                base + self.fp16_per_token_ms * t * (f + (1.0 - f) / self.fp8_speedup)
            }
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let bad = |m: &str| Err(SimError::ConfigInvalid(m.to_string()));
        if !finite_nonneg(self.fp16_base_ms) || !finite_nonneg(self.fp16_per_token_ms) {
            return bad("latency terms must be finite and non-negative");
        }
        if self.fp16_base_ms + self.fp16_per_token_ms <= 0.0 {
            return bad("iteration latency must be positive");
        }
        if !(self.fp8_speedup.is_finite() && self.fp8_speedup >= 1.0) {
            return bad("fp8 speedup must be >= 1");
        }
        if let Some(b) = self.fp8_base_ms {
            if !finite_nonneg(b) || b + self.fp16_per_token_ms <= 0.0 {
                return bad(
                    "fp8 base latency must be finite, non-negative and keep latency positive",
                );
            }
        }
        if !(0.0..=1.0).contains(&self.exception_fraction) {
            return bad("exception fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad("jitter must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyMode {
    #[serde(rename = "fp16")]
    Fp16Only,
    #[serde(rename = "fp8")]
    Fp8Only,
    #[serde(rename = "dual")]
    Dual,
}

/// Precision policy selection and SLO targets. An infinite SLO disables the
/// corresponding trigger; a zero TPOT SLO makes the dual rule always pick FP8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub mode: PolicyMode,
    pub tpot_slo_ms: f64,
    pub ttft_slo_ms: f64,
    /// Minimum number of FP8 iterations after a switch to FP8.
    pub hysteresis_iters: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            mode: PolicyMode::Dual,
            tpot_slo_ms: 33.3,
            ttft_slo_ms: 200.0,
            hysteresis_iters: 16,
        }
    }
}

impl PolicyConfig {
    pub fn with_mode(mode: PolicyMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.tpot_slo_ms.is_nan() || self.tpot_slo_ms < 0.0 {
            return Err(SimError::ConfigInvalid("tpot slo must be >= 0".into()));
        }
        if self.ttft_slo_ms.is_nan() || self.ttft_slo_ms < 0.0 {
            return Err(SimError::ConfigInvalid("ttft slo must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub max_batched_tokens: u32,
    pub max_seqs: u32,
    pub chunked_prefill: bool,
    pub chunk_size: u32,
    /// KV-cache capacity in tokens; a request reserves prompt + output
    /// tokens at admission. `None` is unbounded.
    pub kv_capacity_tokens: Option<u64>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            max_batched_tokens: 2048,
            max_seqs: 256,
            chunked_prefill: true,
            chunk_size: 512,
            kv_capacity_tokens: None,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.chunk_size == 0 || self.max_batched_tokens < self.chunk_size {
            return Err(SimError::ConfigInvalid(
                "need max_batched_tokens >= chunk_size >= 1".into(),
            ));
        }
        if self.max_seqs == 0 {
            return Err(SimError::ConfigInvalid("max_seqs must be >= 1".into()));
        }
        Ok(())
    }
}
