use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nestedfp_core::servesim::{
    generate_trace, simulate, LatencyModel, PolicyConfig, PolicyMode, Precision, Request,
    SchedulerConfig, SimMetrics, SimSummary, TraceParams, TracePattern,
};

fn trace() -> impl Strategy<Value = Vec<Request>> {
    (
        0.0f64..4.0,
        0.0f64..14.0,
        5.0f64..30.0,
        1u32..700,
        1u32..300,
        any::<u64>(),
    )
        .prop_map(|(lo, span, duration_s, prompt, output, seed)| {
            let params = TraceParams {
                duration_s,
                prompt_tokens: prompt,
                output_tokens: output,
            };
            let pattern = TracePattern::Burst {
                rate_min: lo,
                rate_max: lo + span,
            };
            generate_trace(&pattern, &params, seed).unwrap()
        })
}

fn run(requests: &[Request], mode: PolicyMode, seed: u64) -> SimMetrics {
    simulate(
        requests,
        &LatencyModel::default(),
        &PolicyConfig::with_mode(mode),
        &SchedulerConfig::default(),
        seed,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tokens_are_conserved(requests in trace(), mode in prop_oneof![
        Just(PolicyMode::Fp16Only), Just(PolicyMode::Fp8Only), Just(PolicyMode::Dual)
    ]) {
        let m = run(&requests, mode, 1);
        let latency = LatencyModel::default();
        let fastest = latency.iteration_latency(Precision::Fp8, 1);
        prop_assert_eq!(m.requests.len(), requests.len());
        let emitted: u64 = m.requests.iter().map(|r| u64::from(r.output_tokens)).sum();
        prop_assert_eq!(m.tokens_emitted(), emitted);
        for r in &m.requests {
            prop_assert!(r.ttft_ms >= 0.0);
            prop_assert!(r.tpot_ms.is_none_or(|t| t >= 0.0));
            let floor = r.arrival_ms + f64::from(r.output_tokens) * fastest;
            prop_assert!(r.finish_ms >= floor - 1e-6, "finish {} < {}", r.finish_ms, floor);
        }
    }

    #[test]
    fn dual_fraction_is_a_share(requests in trace()) {
        let dual = run(&requests, PolicyMode::Dual, 4);
        prop_assert!((0.0..=1.0).contains(&dual.fp16_time_fraction()));
        for s in &dual.timeline {
            prop_assert!((0.0..=1.0).contains(&s.precision_fraction_fp16));
        }
    }

    #[test]
    fn same_seed_same_metrics(requests in trace(), seed in any::<u64>()) {
        let latency = LatencyModel { jitter: 0.1, ..LatencyModel::default() };
        let go = || simulate(&requests, &latency, &PolicyConfig::default(), &SchedulerConfig::default(), seed).unwrap();
        let (a, b) = (go(), go());
        prop_assert_eq!(a.summary_json(), b.summary_json());
        prop_assert_eq!(a.timeline_csv(), b.timeline_csv());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn timeline_covers_duration(requests in trace()) {
        let m = run(&requests, PolicyMode::Dual, 6);
        let expected = (m.summary.duration_ms / 1000.0).ceil() as usize;
        prop_assert_eq!(m.timeline.len(), expected);
        prop_assert_eq!(m.timeline_csv().lines().count(), expected + 1);
    }
}

#[test]
fn dual_with_unreachable_slos_matches_fp16() {
    let requests = generate_trace(
        &TracePattern::Burst {
            rate_min: 1.0,
            rate_max: 11.0,
        },
        &TraceParams::default(),
        11,
    )
    .unwrap();
    let go = |mode| {
        let policy = PolicyConfig {
            mode,
            tpot_slo_ms: 1e9,
            ttft_slo_ms: 1e9,
            ..PolicyConfig::default()
        };
        simulate(
            &requests,
            &LatencyModel::default(),
            &policy,
            &SchedulerConfig::default(),
            0,
        )
        .unwrap()
    };
    let (dual, fp16) = (go(PolicyMode::Dual), go(PolicyMode::Fp16Only));
    assert_eq!(dual, fp16);
    assert_eq!(dual.fp16_time_fraction(), 1.0);
}

#[test]
fn light_load_stays_fp16() {
    let requests = generate_trace(
        &TracePattern::Poisson { rate: 0.5 },
        &TraceParams {
            duration_s: 30.0,
            prompt_tokens: 64,
            output_tokens: 64,
        },
        3,
    )
    .unwrap();
    let m = run(&requests, PolicyMode::Dual, 0);
    assert!(!requests.is_empty());
    assert_eq!(m.fp16_time_fraction(), 1.0);
    assert_eq!(m.slo_violation_seconds(), 0);
}

#[test]
fn exports_round_trip() {
    let requests = generate_trace(
        &TracePattern::Poisson { rate: 4.0 },
        &TraceParams::default(),
        9,
    )
    .unwrap();
    let m = run(&requests, PolicyMode::Dual, 9);
    let parsed: SimSummary = serde_json::from_str(&m.summary_json()).unwrap();
    assert_eq!(parsed, m.summary);

    let csv_text = m.timeline_csv();
    let mut rows = csv::Reader::from_reader(csv_text.as_bytes());
    let back: Vec<(u64, f64, f64, u8)> = rows.deserialize().map(Result::unwrap).collect();
    assert_eq!(back.len(), m.timeline.len());
    for (row, s) in back.iter().zip(&m.timeline) {
        assert_eq!(
            *row,
            (
                s.second,
                s.p90_tpot_ms,
                s.precision_fraction_fp16,
                u8::from(s.violation)
            )
        );
    }
}

#[test]
fn empty_trace_exports_empty_timeline() {
    let m = run(&[], PolicyMode::Dual, 0);
    assert_eq!(m, SimMetrics::default());
    assert_eq!(m.timeline_csv().lines().count(), 1);
    let parsed: SimSummary = serde_json::from_str(&m.summary_json()).unwrap();
    assert_eq!(parsed.requests_completed, 0);
}

struct Excess {
    traces: usize,
    worse: usize,
    worst: usize,
    total_base: usize,
    total_other: usize,
}

/// Runs `base` and `other` over a seeded corpus of burst traces and tallies
/// how often `other` has more violation seconds than `base`.
fn compare_on_corpus(
    traces: usize,
    base: impl Fn(&[Request]) -> usize,
    other: impl Fn(&[Request], &mut ChaCha8Rng) -> usize,
) -> Excess {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut e = Excess {
        traces,
        worse: 0,
        worst: 0,
        total_base: 0,
        total_other: 0,
    };
    for _ in 0..traces {
        let lo = rng.gen_range(0.0..4.0);
        let params = TraceParams {
            duration_s: rng.gen_range(5.0..30.0),
            prompt_tokens: rng.gen_range(1..700),
            output_tokens: rng.gen_range(1..300),
        };
        let pattern = TracePattern::Burst {
            rate_min: lo,
            rate_max: lo + rng.gen_range(0.0..14.0),
        };
        let requests = generate_trace(&pattern, &params, rng.gen()).unwrap();
        let (b, o) = (base(&requests), other(&requests, &mut rng));
        e.total_base += b;
        e.total_other += o;
        if o > b {
            e.worse += 1;
            e.worst = e.worst.max(o - b);
        }
    }
    e
}

fn violations(requests: &[Request], mode: PolicyMode) -> usize {
    run(requests, mode, 0).slo_violation_seconds()
}

// Per-second p90 violations are not monotone in iteration speed: a slower
// engine merges near-simultaneous prompts into one prefill iteration, a
// faster one admits them separately and stalls decodes more often. The
// corpus checks below pin the observed rate and size of such inversions.

#[test]
fn fp8_dominates_fp16_on_corpus() {
    let e = compare_on_corpus(
        400,
        |r| violations(r, PolicyMode::Fp16Only),
        |r, _| violations(r, PolicyMode::Fp8Only),
    );
    assert!(
        e.total_other < e.total_base,
        "fp8 {} vs fp16 {}",
        e.total_other,
        e.total_base
    );
    assert!(
        e.worse * 50 <= e.traces,
        "{} of {} traces invert",
        e.worse,
        e.traces
    );
    assert!(e.worst <= 2, "worst inversion {}", e.worst);
}

#[test]
fn dual_dominates_fp16_on_corpus() {
    let e = compare_on_corpus(
        400,
        |r| violations(r, PolicyMode::Fp16Only),
        |r, _| violations(r, PolicyMode::Dual),
    );
    assert!(
        e.total_other < e.total_base,
        "dual {} vs fp16 {}",
        e.total_other,
        e.total_base
    );
    assert!(
        e.worse * 50 <= e.traces,
        "{} of {} traces invert",
        e.worse,
        e.traces
    );
    assert!(e.worst <= 2, "worst inversion {}", e.worst);
}

#[test]
fn slower_arrivals_reduce_fp16_violations_on_corpus() {
    let e = compare_on_corpus(
        400,
        |r| violations(r, PolicyMode::Fp16Only),
        |r, rng| {
            let c = rng.gen_range(1.0..4.0);
            let stretched: Vec<Request> = r
                .iter()
                .map(|q| Request {
                    arrival_ms: q.arrival_ms * c,
                    ..q.clone()
                })
                .collect();
            violations(&stretched, PolicyMode::Fp16Only)
        },
    );
    assert!(
        e.total_other < e.total_base,
        "stretched {} vs base {}",
        e.total_other,
        e.total_base
    );
    assert!(
        e.worse * 20 <= e.traces,
        "{} of {} traces invert",
        e.worse,
        e.traces
    );
    assert!(e.worst <= 4, "worst inversion {}", e.worst);
}

#[test]
fn faster_engine_can_add_a_violation_second() {
    let params = TraceParams {
        duration_s: 10.0,
        prompt_tokens: 469,
        output_tokens: 269,
    };
    let pattern = TracePattern::Burst {
        rate_min: 1.0,
        rate_max: 12.0,
    };
    let requests = generate_trace(&pattern, &params, 119).unwrap();
    let fp16 = run(&requests, PolicyMode::Fp16Only, 0);
    let fp8 = run(&requests, PolicyMode::Fp8Only, 0);
    assert_eq!(
        (fp16.slo_violation_seconds(), fp8.slo_violation_seconds()),
        (0, 1)
    );
    assert!(fp8.summary.tpot_p90_ms < fp16.summary.tpot_p90_ms);
}
