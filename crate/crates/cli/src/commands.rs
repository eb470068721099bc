use std::fs::File;
use std::io::BufWriter;
use std::process::ExitCode;

use anyhow::Context;
use serde_json::json;

use nestedfp_core::fpcodec::{
    is_applicable, verify_exhaustive, verify_patterns, CodecError, Fp16Bits, NestedPair,
    VerificationReport,
};
use nestedfp_core::quantgemm::random::gemm_operands;
use nestedfp_core::quantgemm::{error_metrics, GemmEngine, GemmPath};
use nestedfp_core::servesim::{
    export_metrics, generate_trace, ingest_trace, simulate, write_trace, ColumnMap, ExportFormat,
    LatencyModel, PolicyConfig, PolicyMode, SchedulerConfig, SimError, TraceParams, TracePattern,
};
use nestedfp_core::tensorstore::fixtures::{synthetic_model, LLAMA_8B_PLAN, PHI4_14B_PLAN};
use nestedfp_core::tensorstore::{
    census, convert_layer, convert_model, import_raw, load, save, ApplicabilityReport, GemmClass,
    LayerPayload, ModelContainer, Storage,
};

use super::{
    Command, ConvertArgs, Failure, FixtureArgs, GemmArgs, GemmMode, PatternArg, PlanArg, PolicyArg,
    ReportArgs, ReportFormat, SimulateArgs, TraceColumns, TraceGenArgs, VerifyArgs,
};

type CmdResult = Result<ExitCode, Failure>;

pub(crate) fn run(command: Command) -> CmdResult {
    match command {
        Command::Convert(a) => convert(a),
        Command::Verify(a) => verify(a),
        Command::Report(a) => report(a),
        Command::Gemm(a) => gemm(a),
        Command::TraceGen(a) => trace_gen(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fixture(a) => fixture(a),
    }
}

fn load_model(path: &std::path::Path) -> Result<ModelContainer, Failure> {
    Ok(load(path).with_context(|| format!("cannot load {}", path.display()))?)
}

fn columns(c: TraceColumns) -> ColumnMap {
    match c {
        TraceColumns::Canonical => ColumnMap::default(),
        TraceColumns::Azure => ColumnMap::azure(),
    }
}

/// Flag-derived parameters rejected by the library are usage errors.
fn sim_error(e: SimError) -> Failure {
    match e {
        SimError::InvalidParams(m) | SimError::ConfigInvalid(m) => Failure::Usage(m),
        other => Failure::Domain(other.into()),
    }
}

fn print_census(r: &ApplicabilityReport, exceptions: usize, layers: usize) {
    outln!(
        "converted {layers} layer(s): {} nested, {exceptions} exception layer(s)",
        layers - exceptions
    );
    outln!("applicable GEMM1-4 layers: {}", r.total_ratio());
}

fn convert(a: ConvertArgs) -> CmdResult {
    let tensors = if a.raw {
        let (n, k) = a.shape.expect("clap enforces --shape with --raw");
        vec![import_raw(&a.input, n, k, a.class)
            .with_context(|| format!("cannot import {}", a.input.display()))?]
    } else {
        load_model(&a.input)?
            .layers
            .into_iter()
            .map(|l| l.payload.to_fp16())
            .collect()
    };
    let model = convert_model(tensors);
    save(&model, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    print_census(&census(&model), model.exception_count(), model.layers.len());
    Ok(ExitCode::SUCCESS)
}

/// Encoder with ties rounded away from zero, for fault-injection runs.
fn decompose_ties_away(x: Fp16Bits) -> Result<NestedPair, CodecError> {
    if !is_applicable(x) {
        return Err(CodecError::NotApplicable(x.0));
    }
    let head = ((x.0 >> 7) & 0x7F) as u8;
    let up = u8::from(x.0 & 0x7F >= 0x40);
    let sign = ((x.0 >> 8) & 0x80) as u8;
    Ok(NestedPair::new(sign | head.wrapping_add(up), x.0 as u8))
}

fn print_codec_report(r: &VerificationReport) {
    outln!(
        "applicable={} failures={} (roundtrip={} oracle={} branchy={} sign_borrow={})",
        r.applicable,
        r.failures(),
        r.failures_roundtrip,
        r.failures_oracle,
        r.failures_branchy,
        r.sign_borrows
    );
    if !r.failing_patterns.is_empty() {
        let hex: Vec<String> = r
            .failing_patterns
            .iter()
            .map(|p| format!("{p:#06x}"))
            .collect();
        outln!("failing patterns: {}", hex.join(" "));
    }
}

fn verify(a: VerifyArgs) -> CmdResult {
    let mut ok = true;
    if a.exhaustive {
        let report = if a.inject_tie_fault {
            verify_patterns(0..=u16::MAX, decompose_ties_away)
        } else {
            verify_exhaustive()
        };
        print_codec_report(&report);
        ok &= report.passed();
    }
    if let Some(path) = &a.model {
        let model = load_model(path)?;
        let mut mismatched = Vec::new();
        for layer in &model.layers {
            let rebuilt = layer.payload.to_fp16();
            if crc32fast::hash(&rebuilt.to_le_bytes()) != layer.entry.source_crc32 {
                mismatched.push(layer.entry.name.clone());
            }
        }
        outln!(
            "layers={} nested={} mismatches={}",
            model.layers.len(),
            model.layers.len() - model.exception_count(),
            mismatched.len()
        );
        if !mismatched.is_empty() {
            outln!("mismatched layers: {}", mismatched.join(" "));
        }
        ok &= mismatched.is_empty();
    }
    if ok {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: verification failed");
        Ok(ExitCode::from(1))
    }
}

fn report(a: ReportArgs) -> CmdResult {
    let model = load_model(&a.input)?;
    let r = census(&model);
    match a.format {
        ReportFormat::Table => {
            let classes: Vec<GemmClass> = r.per_class.keys().copied().collect();
            let mut header = vec![String::from("class")];
            let mut row = vec![String::from("applicable")];
            for c in &classes {
                let ratio = r.class(*c).ratio();
                let w = ratio.len().max(c.as_str().len());
                header.push(format!("{:>w$}", c.as_str()));
                row.push(format!("{ratio:>w$}"));
            }
            let total = r.total_ratio();
            let w = total.len().max(5);
            header.push(format!("{:>w$}", "total"));
            row.push(format!("{total:>w$}"));
            outln!("{:<10} {}", header[0], header[1..].join("  "));
            outln!("{:<10} {}", row[0], row[1..].join("  "));
            outln!("exception layers: {}", model.exception_count());
            if let (Some(lo), Some(hi)) = (r.min_value, r.max_value) {
                outln!("value range: [{lo}, {hi}]");
            }
        }
        ReportFormat::Json => {
            let per_class: serde_json::Map<String, serde_json::Value> = r
                .per_class
                .iter()
                .map(|(c, n)| {
                    (
                        c.as_str().to_string(),
                        json!({"applicable": n.applicable, "total": n.total, "ratio": n.ratio()}),
                    )
                })
                .collect();
            let doc = json!({
                "per_class": per_class,
                "applicable": r.applicable,
                "total": r.total,
                "fraction": r.fraction,
                "ratio": r.total_ratio(),
                "exception_layers": model.exception_count(),
                "min_value": r.min_value,
                "max_value": r.max_value,
            });
            outln!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn gemm(a: GemmArgs) -> CmdResult {
    let (acts, weights) = gemm_operands(
        a.m as usize,
        a.n as usize,
        a.k as usize,
        a.weights_range,
        a.seed,
    );
    let engine = GemmEngine::new(false);
    let source = LayerPayload::Fp16(weights.clone());
    let nested = convert_layer(weights).payload;
    let (path, payload) = match a.mode {
        GemmMode::Fp16 => (GemmPath::Fp16, &source),
        GemmMode::Nfp16 => (GemmPath::NestedFp16, &nested),
        GemmMode::Nfp8 => (GemmPath::NestedFp8, &nested),
        GemmMode::Fp8 => (GemmPath::Fp8Baseline, &source),
    };
    let out = engine
        .execute(path, &acts, payload)
        .context("weights fall outside the nested range; use --mode fp16 or fp8")?;
    outln!("checksum={:#010x}", crc32fast::hash(&out.to_le_bytes()));
    if a.report_error {
        let reference = engine.execute(GemmPath::Fp16, &acts, &source)?;
        let m = error_metrics(&reference, &out)?;
        outln!(
            "max_rel={:.6e} frob_rel={:.6e} mse={:.6e}",
            m.max_rel,
            m.frob_rel,
            m.mse
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn trace_gen(a: TraceGenArgs) -> CmdResult {
    let pattern = match a.pattern {
        PatternArg::Burst => TracePattern::Burst {
            rate_min: a.rate_min,
            rate_max: a.rate_max,
        },
        PatternArg::Poisson => TracePattern::Poisson { rate: a.rate_max },
        PatternArg::Replay => {
            let path = a
                .source
                .as_ref()
                .ok_or_else(|| Failure::Usage("--pattern replay requires --source".into()))?;
            let source = ingest_trace(path, &columns(a.source_columns))
                .with_context(|| format!("cannot read {}", path.display()))?;
            TracePattern::Replay {
                source,
                scale: a.scale,
            }
        }
    };
    let params = TraceParams {
        duration_s: a.duration,
        prompt_tokens: a.prompt_tokens,
        output_tokens: a.output_tokens,
    };
    let requests = generate_trace(&pattern, &params, a.seed).map_err(sim_error)?;
    let file = File::create(&a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    write_trace(BufWriter::new(file), &requests)?;
    outln!("wrote {} request(s) to {}", requests.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn simulate_cmd(a: SimulateArgs) -> CmdResult {
    let requests = ingest_trace(&a.trace, &columns(a.trace_columns))
        .with_context(|| format!("cannot read {}", a.trace.display()))?;
    let mut latency = LatencyModel::affine(a.base_ms, a.per_token_ms, a.fp8_speedup);
    latency.jitter = a.jitter;
    let policy = PolicyConfig {
        mode: match a.policy {
            PolicyArg::Fp16 => PolicyMode::Fp16Only,
            PolicyArg::Fp8 => PolicyMode::Fp8Only,
            PolicyArg::Dual => PolicyMode::Dual,
        },
        tpot_slo_ms: a.slo_tpot,
        ttft_slo_ms: a.slo_ttft,
        hysteresis_iters: a.hysteresis,
    };
    let defaults = SchedulerConfig::default();
    let scheduler = SchedulerConfig {
        max_batched_tokens: a.max_batched_tokens,
        chunk_size: defaults.chunk_size.min(a.max_batched_tokens),
        ..defaults
    };
    let m = simulate(&requests, &latency, &policy, &scheduler, a.seed).map_err(sim_error)?;
    let s = &m.summary;
    outln!(
        "requests={} iterations={} duration_ms={:.1}",
        s.requests_completed,
        s.iterations,
        s.duration_ms
    );
    outln!(
        "ttft_p90_ms={:.3} tpot_p90_ms={:.3} slo_violation_seconds={} fp16_time_fraction={:.4}",
        s.ttft_p90_ms,
        s.tpot_p90_ms,
        s.slo_violation_seconds,
        s.fp16_time_fraction
    );
    if let Some(p) = &a.out {
        export_metrics(&m, p, ExportFormat::Json)
            .with_context(|| format!("cannot write {}", p.display()))?;
    }
    if let Some(p) = &a.timeline {
        export_metrics(&m, p, ExportFormat::Csv)
            .with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn fixture(a: FixtureArgs) -> CmdResult {
    if a.rows == 0 || a.cols == 0 {
        return Err(Failure::Usage("--rows and --cols must be >= 1".into()));
    }
    let plan = match a.plan {
        PlanArg::Llama8b => &LLAMA_8B_PLAN,
        PlanArg::Phi4 => &PHI4_14B_PLAN,
    };
    let model = convert_model(synthetic_model(plan, a.rows, a.cols, a.seed));
    save(&model, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    let nested = model
        .manifest()
        .filter(|e| e.storage == Storage::Nested)
        .count();
    outln!(
        "wrote {} layer(s), {nested} nested, to {}",
        model.layers.len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
