use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{LatencyModel, PolicyConfig, Precision, SchedulerConfig};
use super::metrics::{IterationRecord, SimMetrics};
use super::policy::{IterationContext, PrecisionPolicy};
use super::trace::Request;
use super::SimError;

/// One admitted request.
#[derive(Debug, Clone)]
struct Active {
    req: usize,
    prefilled: u32,
    emitted: u32,
    first_token_ms: f64,
    last_token_ms: f64,
    reserved: u64,
}

#[derive(Debug, Clone, Copy)]
enum Work {
    Decode,
    Prefill(u32),
}

/// Runs the simulation with the policy described by `policy`.
pub fn simulate(
    requests: &[Request],
    latency: &LatencyModel,
    policy: &PolicyConfig,
    scheduler: &SchedulerConfig,
    seed: u64,
) -> Result<SimMetrics, SimError> {
    policy.validate()?;
    let mut p = policy.build();
    simulate_with_policy(
        requests,
        latency,
        p.as_mut(),
        scheduler,
        seed,
        policy.tpot_slo_ms,
    )
}

/// Runs the simulation with a caller-supplied policy. `tpot_slo_ms` is only
/// used to flag violating seconds in the metrics.
pub fn simulate_with_policy(
    requests: &[Request],
    latency: &LatencyModel,
    policy: &mut dyn PrecisionPolicy,
    scheduler: &SchedulerConfig,
    seed: u64,
    tpot_slo_ms: f64,
) -> Result<SimMetrics, SimError> {
    latency.validate()?;
    scheduler.validate()?;
    for r in requests {
        if r.prompt_tokens == 0 || r.output_tokens == 0 || !r.arrival_ms.is_finite() {
            return Err(SimError::ConfigInvalid(format!(
                "request {} is malformed",
                r.id
            )));
        }
    }
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by(|&a, &b| requests[a].arrival_ms.total_cmp(&requests[b].arrival_ms));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_batched = scheduler.max_batched_tokens as u64;
    let mut state = Recorder::default();
    let mut waiting: VecDeque<usize> = VecDeque::new();
    let mut running: Vec<Active> = Vec::new();
    let mut next = 0;
    let mut now = 0.0f64;
    let mut kv_used = 0u64;

    // Prefill chunk for a request with `remaining` prompt tokens.
    let chunk = |remaining: u32, budget: u64, any_prefill: bool| -> Option<u32> {
        if budget == 0 {
            return None;
        }
        if scheduler.chunked_prefill {
            let c = (remaining as u64)
                .min(scheduler.chunk_size as u64)
                .min(budget);
            (c > 0).then_some(c as u32)
        } else if remaining as u64 <= budget || !any_prefill {
            Some(remaining)
        } else {
            None
        }
    };

    loop {
        while next < order.len() && requests[order[next]].arrival_ms <= now {
            waiting.push_back(order[next]);
            next += 1;
        }
        if running.is_empty() && waiting.is_empty() {
            if next < order.len() {
                now = now.max(requests[order[next]].arrival_ms);
                continue;
            }
            break;
        }

        // Decode tokens first, then unfinished prefills, then admissions.
        let mut budget = max_batched;
        let mut plan: Vec<(usize, Work)> = Vec::new();
        let mut scheduled_chunk = vec![0u32; running.len()];
        let mut decode_tokens = 0u64;
        let mut prefill_tokens = 0u64;
        for (i, a) in running.iter().enumerate() {
            if a.prefilled == requests[a.req].prompt_tokens && budget > 0 {
                plan.push((i, Work::Decode));
                budget -= 1;
                decode_tokens += 1;
            }
        }
        let mut any_prefill = false;
        for (i, a) in running.iter().enumerate() {
            let remaining = requests[a.req].prompt_tokens - a.prefilled;
            if remaining > 0 {
                if let Some(c) = chunk(remaining, budget, any_prefill) {
                    plan.push((i, Work::Prefill(c)));
                    scheduled_chunk[i] = c;
                    budget = budget.saturating_sub(c as u64);
                    prefill_tokens += c as u64;
                    any_prefill = true;
                }
            }
        }
        while let Some(&r) = waiting.front() {
            if running.len() >= scheduler.max_seqs as usize {
                break;
            }
            let req = &requests[r];
            let reserve = req.prompt_tokens as u64 + req.output_tokens as u64;
            if let Some(cap) = scheduler.kv_capacity_tokens {
                if kv_used + reserve > cap && !running.is_empty() {
                    break;
                }
            }
            let Some(c) = chunk(req.prompt_tokens, budget, any_prefill) else {
                break;
            };
            waiting.pop_front();
            kv_used += reserve;
            running.push(Active {
                req: r,
                prefilled: 0,
                emitted: 0,
                first_token_ms: 0.0,
                last_token_ms: 0.0,
                reserved: reserve,
            });
            scheduled_chunk.push(c);
            plan.push((running.len() - 1, Work::Prefill(c)));
            budget = budget.saturating_sub(c as u64);
            prefill_tokens += c as u64;
            any_prefill = true;
        }
        debug_assert!(!plan.is_empty(), "work pending but nothing scheduled");
        if plan.is_empty() {
            break;
        }

        let tokens = decode_tokens + prefill_tokens;
        let fp16_ms = latency.iteration_latency(Precision::Fp16, tokens);
        let ctx = IterationContext {
            now_ms: now,
            batched_tokens: tokens,
            decode_tokens,
            prefill_tokens,
            predicted_fp16_ms: fp16_ms,
            predicted_fp8_ms: latency.iteration_latency(Precision::Fp8, tokens),
            predicted_max_ttft_ms: predict_max_ttft(
                requests,
                &running,
                &scheduled_chunk,
                &waiting,
                now,
                fp16_ms,
                max_batched.saturating_sub(decode_tokens).max(1),
            ),
        };
        let precision = policy.choose(&ctx);
        let mut cost = latency.iteration_latency(precision, tokens);
        if latency.jitter > 0.0 {
            cost *= 1.0 + latency.jitter * rng.gen_range(-1.0..1.0);
        }
        let start = now;
        now += cost;

        for &(i, work) in &plan {
            let a = &mut running[i];
            match work {
                Work::Decode => {
                    a.emitted += 1;
                    state.gaps.push((now, now - a.last_token_ms));
                    a.last_token_ms = now;
                }
                Work::Prefill(c) => {
                    a.prefilled += c;
                    if a.prefilled == requests[a.req].prompt_tokens {
                        a.emitted = 1;
                        a.first_token_ms = now;
                        a.last_token_ms = now;
                    }
                }
            }
        }
        running.retain(|a| {
            let req = &requests[a.req];
            let done = a.emitted == req.output_tokens;
            if done {
                kv_used -= a.reserved;
                state.complete(req, a.first_token_ms, now);
            }
            !done
        });
        state.iterations.push(IterationRecord {
            start_ms: start,
            end_ms: now,
            precision,
            tokens,
        });
    }

    Ok(SimMetrics::from_records(
        state.completed,
        state.iterations,
        state.gaps,
        tpot_slo_ms,
    ))
}

/// Largest predicted FP16 TTFT over arrived requests without a first token.
/// Each iteration is assumed to cost `iter_ms` and to serve `prefill_budget`
/// prompt tokens in FCFS order.
fn predict_max_ttft(
    requests: &[Request],
    running: &[Active],
    scheduled_chunk: &[u32],
    waiting: &VecDeque<usize>,
    now: f64,
    iter_ms: f64,
    prefill_budget: u64,
) -> Option<f64> {
    let pending = running
        .iter()
        .zip(scheduled_chunk)
        .filter(|(a, _)| a.emitted == 0)
        .map(|(a, &c)| (a.req, requests[a.req].prompt_tokens - a.prefilled - c))
        .chain(waiting.iter().map(|&r| (r, requests[r].prompt_tokens)));
    let mut backlog = 0u64;
    let mut worst: Option<f64> = None;
    for (r, remaining) in pending {
        backlog += remaining as u64;
        let extra = if remaining == 0 {
            0
        } else {
            backlog.div_ceil(prefill_budget)
        };
        let first_token = now + iter_ms * (1 + extra) as f64;
        let ttft = first_token - requests[r].arrival_ms;
        worst = Some(worst.map_or(ttft, |w: f64| w.max(ttft)));
    }
    worst
}

#[derive(Default)]
struct Recorder {
    completed: Vec<super::metrics::RequestMetrics>,
    iterations: Vec<IterationRecord>,
    gaps: Vec<(f64, f64)>,
}

impl Recorder {
    fn complete(&mut self, req: &Request, first_token_ms: f64, finish_ms: f64) {
        self.completed.push(super::metrics::RequestMetrics {
            id: req.id,
            arrival_ms: req.arrival_ms,
            first_token_ms,
            finish_ms,
            output_tokens: req.output_tokens,
            ttft_ms: first_token_ms - req.arrival_ms,
            tpot_ms: (req.output_tokens > 1)
                .then(|| (finish_ms - first_token_ms) / (req.output_tokens - 1) as f64),
        });
    }
}
