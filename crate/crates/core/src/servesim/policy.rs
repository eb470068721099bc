use super::config::{PolicyConfig, PolicyMode, Precision};

/// What a policy sees before an iteration runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationContext {
    pub now_ms: f64,
    pub batched_tokens: u64,
    pub decode_tokens: u64,
    pub prefill_tokens: u64,
    /// Model latency of this batch under each precision.
    pub predicted_fp16_ms: f64,
    pub predicted_fp8_ms: f64,
    /// Largest predicted TTFT among arrived requests still waiting for their
    /// first token, assuming FP16 iterations from here on.
    pub predicted_max_ttft_ms: Option<f64>,
}

/// Chooses the precision of each iteration.
pub trait PrecisionPolicy {
    fn choose(&mut self, ctx: &IterationContext) -> Precision;
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy(pub Precision);

impl PrecisionPolicy for FixedPolicy {
    fn choose(&mut self, _ctx: &IterationContext) -> Precision {
        self.0
    }
}

/// FP8 when this batch would break the TPOT SLO in FP16, or when the prefill
/// backlog predicts a TTFT breach; FP16 otherwise. After switching to FP8 the
/// policy stays there for at least `hysteresis_iters` iterations.
#[derive(Debug, Clone)]
pub struct DualPolicy {
    tpot_slo_ms: f64,
    ttft_slo_ms: f64,
    hysteresis_iters: u32,
    current: Precision,
    dwell: u32,
}

impl DualPolicy {
    pub fn new(tpot_slo_ms: f64, ttft_slo_ms: f64, hysteresis_iters: u32) -> Self {
        Self {
            tpot_slo_ms,
            ttft_slo_ms,
            hysteresis_iters,
            current: Precision::Fp16,
            dwell: 0,
        }
    }

    fn wants_fp8(&self, ctx: &IterationContext) -> bool {
        ctx.predicted_fp16_ms > self.tpot_slo_ms
            || ctx
                .predicted_max_ttft_ms
                .is_some_and(|t| t > self.ttft_slo_ms)
    }
}

impl PrecisionPolicy for DualPolicy {
    fn choose(&mut self, ctx: &IterationContext) -> Precision {
        let holding = self.current == Precision::Fp8 && self.dwell < self.hysteresis_iters;
        let next = if self.wants_fp8(ctx) || holding {
            Precision::Fp8
        } else {
            Precision::Fp16
        };
        if next == self.current {
            self.dwell = self.dwell.saturating_add(1);
        } else {
            self.current = next;
            self.dwell = 1;
        }
        next
    }
}

impl PolicyConfig {
    pub fn build(&self) -> Box<dyn PrecisionPolicy> {
        match self.mode {
            PolicyMode::Fp16Only => Box::new(FixedPolicy(Precision::Fp16)),
            PolicyMode::Fp8Only => Box::new(FixedPolicy(Precision::Fp8)),
            PolicyMode::Dual => Box::new(DualPolicy::new(
                self.tpot_slo_ms,
                self.ttft_slo_ms,
                self.hysteresis_iters,
            )),
        }
    }
}
