use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Precision;
use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMetrics {
    pub id: u64,
    pub arrival_ms: f64,
    pub first_token_ms: f64,
    pub finish_ms: f64,
    pub output_tokens: u32,
    pub ttft_ms: f64,
    /// Mean inter-token latency after the first token; `None` for
    /// single-token outputs.
    pub tpot_ms: Option<f64>,
}

/// One wall-clock second `(s, s + 1]` of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondStats {
    pub second: u64,
    /// p90 of the inter-token gaps of tokens emitted in this second, 0 when
    /// none were emitted.
    pub p90_tpot_ms: f64,
    pub samples: usize,
    /// Share of the second spent executing FP16 iterations.
    pub precision_fraction_fp16: f64,
    pub violation: bool,
}

/// Maximal run of back-to-back iterations at one precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSpan {
    pub start_ms: f64,
    pub end_ms: f64,
    pub precision: Precision,
}

/// Scalar results, the content of the JSON export.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub requests_completed: usize,
    pub tokens_emitted: u64,
    pub iterations: u64,
    pub duration_ms: f64,
    pub ttft_p50_ms: f64,
    pub ttft_p90_ms: f64,
    pub ttft_p99_ms: f64,
    pub tpot_p50_ms: f64,
    pub tpot_p90_ms: f64,
    pub tpot_p99_ms: f64,
    pub slo_violation_seconds: usize,
    /// FP16 share of busy (non-idle) time.
    pub fp16_time_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimMetrics {
    pub summary: SimSummary,
    pub requests: Vec<RequestMetrics>,
    pub timeline: Vec<SecondStats>,
    pub precision_timeline: Vec<PrecisionSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct IterationRecord {
    pub start_ms: f64,
    pub end_ms: f64,
    pub precision: Precision,
    pub tokens: u64,
}

/// Nearest-rank percentile of an ascending slice, 0 for an empty one.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Second containing `t` under `(s, s + 1]` windows.
fn second_of(t_ms: f64) -> usize {
    ((t_ms / 1000.0).ceil() as usize).saturating_sub(1)
}

impl SimMetrics {
    pub(crate) fn from_records(
        mut requests: Vec<RequestMetrics>,
        iterations: Vec<IterationRecord>,
        gaps: Vec<(f64, f64)>,
        tpot_slo_ms: f64,
    ) -> Self {
        if iterations.is_empty() {
            return Self::default();
        }
        requests.sort_by_key(|r| r.id);
        let duration_ms = iterations.last().map_or(0.0, |i| i.end_ms);
        let seconds = (duration_ms / 1000.0).ceil() as usize;

        let mut per_second: Vec<Vec<f64>> = vec![Vec::new(); seconds];
        for &(t, gap) in &gaps {
            per_second[second_of(t).min(seconds - 1)].push(gap);
        }
        let mut fp16_ms = vec![0.0f64; seconds];
        let (mut busy, mut busy_fp16) = (0.0f64, 0.0f64);
        for it in &iterations {
            let len = it.end_ms - it.start_ms;
            busy += len;
            if it.precision != Precision::Fp16 {
                continue;
            }
            busy_fp16 += len;
            let first = (it.start_ms / 1000.0).floor() as usize;
            for (s, share) in fp16_ms.iter_mut().enumerate().skip(first) {
                let lo = it.start_ms.max(s as f64 * 1000.0);
                let hi = it.end_ms.min((s + 1) as f64 * 1000.0);
                if hi <= lo {
                    break;
                }
                *share += hi - lo;
            }
        }
        let timeline: Vec<SecondStats> = per_second
            .into_iter()
            .zip(fp16_ms)
            .enumerate()
            .map(|(s, (samples, fp16))| {
                let p90 = percentile(&sorted(samples.clone()), 0.9);
                SecondStats {
                    second: s as u64,
                    p90_tpot_ms: p90,
                    samples: samples.len(),
                    precision_fraction_fp16: (fp16 / 1000.0).min(1.0),
                    violation: !samples.is_empty() && p90 > tpot_slo_ms,
                }
            })
            .collect();

        let mut precision_timeline: Vec<PrecisionSpan> = Vec::new();
        for it in &iterations {
            match precision_timeline.last_mut() {
                Some(span) if span.precision == it.precision && span.end_ms == it.start_ms => {
                    span.end_ms = it.end_ms;
                }
                _ => precision_timeline.push(PrecisionSpan {
                    start_ms: it.start_ms,
                    end_ms: it.end_ms,
                    precision: it.precision,
                }),
            }
        }

        let ttft = sorted(requests.iter().map(|r| r.ttft_ms).collect());
        let tpot = sorted(requests.iter().filter_map(|r| r.tpot_ms).collect());
        let summary = SimSummary {
            requests_completed: requests.len(),
            tokens_emitted: requests.iter().map(|r| r.output_tokens as u64).sum(),
            iterations: iterations.len() as u64,
            duration_ms,
            ttft_p50_ms: percentile(&ttft, 0.5),
            ttft_p90_ms: percentile(&ttft, 0.9),
            ttft_p99_ms: percentile(&ttft, 0.99),
            tpot_p50_ms: percentile(&tpot, 0.5),
            tpot_p90_ms: percentile(&tpot, 0.9),
            tpot_p99_ms: percentile(&tpot, 0.99),
            slo_violation_seconds: timeline.iter().filter(|s| s.violation).count(),
            fp16_time_fraction: if busy > 0.0 { busy_fp16 / busy } else { 0.0 },
        };
        Self {
            summary,
            requests,
            timeline,
            precision_timeline,
        }
    }

    pub fn tokens_emitted(&self) -> u64 {
        self.summary.tokens_emitted
    }

    pub fn slo_violation_seconds(&self) -> usize {
        self.summary.slo_violation_seconds
    }

    pub fn fp16_time_fraction(&self) -> f64 {
        self.summary.fp16_time_fraction
    }

    /// Summary as pretty JSON with a trailing newline.
    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Timeline CSV with [`TIMELINE_HEADER`].
    pub fn timeline_csv(&self) -> String {
        let mut out = String::from(TIMELINE_HEADER);
        out.push('\n');
        for s in &self.timeline {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.second,
                s.p90_tpot_ms,
                s.precision_fraction_fp16,
                u8::from(s.violation)
            ));
        }
        out
    }
}

pub const TIMELINE_HEADER: &str = "second,p90_tpot_ms,precision_fraction_fp16,violation_flag";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Summary scalars.
    Json,
    /// Per-second timeline.
    Csv,
}

pub fn export_metrics(
    m: &SimMetrics,
    path: impl AsRef<Path>,
    format: ExportFormat,
) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        ExportFormat::Json => w.write_all(m.summary_json().as_bytes())?,
        ExportFormat::Csv => w.write_all(m.timeline_csv().as_bytes())?,
    }
    w.flush()?;
    Ok(())
}
