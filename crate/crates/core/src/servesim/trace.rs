//! Request traces: CSV ingestion and seeded synthetic generation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub arrival_ms: f64,
    pub prompt_tokens: u32,
    pub output_tokens: u32,
}

/// Header names of the three trace columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub arrival: String,
    pub prompt: String,
    pub output: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            arrival: "arrival_ms".into(),
            prompt: "prompt_tokens".into(),
            output: "output_tokens".into(),
        }
    }
}

impl ColumnMap {
    /// Headers of the public Azure LLM inference traces.
    pub fn azure() -> Self {
        Self {
            arrival: "TIMESTAMP".into(),
            prompt: "ContextTokens".into(),
            output: "GeneratedTokens".into(),
        }
    }
}

pub fn ingest_trace(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Vec<Request>, SimError> {
    ingest_reader(File::open(path)?, columns)
}

enum Arrival {
    Millis(f64),
    Stamp(NaiveDateTime),
}

fn parse_arrival(s: &str) -> Option<Arrival> {
    if let Ok(v) = s.parse::<f64>() {
        return (v.is_finite() && v >= 0.0).then_some(Arrival::Millis(v));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(Arrival::Stamp(dt.naive_utc()));
    }
    ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(Arrival::Stamp)
}

/// Parses a headered CSV trace. Arrival values are milliseconds, or
/// timestamps (rebased so the earliest is 0 ms); a file may not mix the two.
/// The result is sorted by arrival, ties in file order; ids follow file order.
pub fn ingest_reader<R: Read>(reader: R, columns: &ColumnMap) -> Result<Vec<Request>, SimError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SimError::MissingColumn(name.to_string()))
    };
    let (ia, ip, io) = (
        col(&columns.arrival)?,
        col(&columns.prompt)?,
        col(&columns.output)?,
    );

    let mut rows: Vec<(Arrival, u32, u32)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let err = |msg: String| SimError::Parse { row, msg };
        let arrival =
            parse_arrival(field(ia)).ok_or_else(|| err(format!("bad arrival `{}`", field(ia))))?;
        let tokens = |i: usize, what: &str| match field(i).parse::<u32>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(err(format!(
                "{what} must be an integer >= 1, got `{}`",
                field(i)
            ))),
        };
        let prompt = tokens(ip, "prompt tokens")?;
        let output = tokens(io, "output tokens")?;
        if let Some((first, ..)) = rows.first() {
            if matches!(first, Arrival::Millis(_)) != matches!(arrival, Arrival::Millis(_)) {
                return Err(err("mixes numeric and timestamp arrivals".into()));
            }
        }
        rows.push((arrival, prompt, output));
    }
    if rows.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let origin = rows
        .iter()
        .filter_map(|(a, ..)| match a {
            Arrival::Stamp(t) => Some(*t),
            Arrival::Millis(_) => None,
        })
        .min();
    let mut requests: Vec<Request> = rows
        .into_iter()
        .enumerate()
        .map(|(i, (a, prompt_tokens, output_tokens))| Request {
            id: i as u64,
            arrival_ms: match (a, origin) {
                (Arrival::Millis(v), _) => v,
                (Arrival::Stamp(t), Some(o)) => {
                    (t - o).num_microseconds().unwrap_or(i64::MAX) as f64 / 1000.0
                }
                (Arrival::Stamp(_), None) => unreachable!("origin exists when stamps do"),
            },
            prompt_tokens,
            output_tokens,
        })
        .collect();
    requests.sort_by(|a, b| a.arrival_ms.total_cmp(&b.arrival_ms));
    Ok(requests)
}

/// Writes a trace with canonical headers.
pub fn write_trace<W: Write>(writer: W, requests: &[Request]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["arrival_ms", "prompt_tokens", "output_tokens"])?;
    for r in requests {
        w.write_record([
            r.arrival_ms.to_string(),
            r.prompt_tokens.to_string(),
            r.output_tokens.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum TracePattern {
    /// Poisson arrivals at a constant rate (req/s).
    Poisson { rate: f64 },
    /// Piecewise-constant Poisson rates over 5 s segments. Segment rates are
    /// stratified draws of `min + (max - min) * u^1.5`, shuffled, so a trace
    /// visits both ends of the range and averages about `min + 0.4 (max - min)`.
    Burst { rate_min: f64, rate_max: f64 },
    /// Rescales an existing trace by `scale`: values below 1 keep each
    /// request with that probability, values above 1 compress arrival times.
    Replay { source: Vec<Request>, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceParams {
    /// Length of the generated window; replay drops requests past it.
    pub duration_s: f64,
    pub prompt_tokens: u32,
    pub output_tokens: u32,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            prompt_tokens: 256,
            output_tokens: 512,
        }
    }
}

const BURST_SEGMENT_S: f64 = 5.0;

fn poisson_window(rng: &mut ChaCha8Rng, rate: f64, start_s: f64, end_s: f64, out: &mut Vec<f64>) {
    if rate <= 0.0 {
        return;
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut t = start_s;
    loop {
        t += exp.sample(rng);
        if t >= end_s {
            break;
        }
        out.push(t * 1000.0);
    }
}

pub fn generate_trace(
    pattern: &TracePattern,
    params: &TraceParams,
    seed: u64,
) -> Result<Vec<Request>, SimError> {
    let invalid = |m: &str| Err(SimError::InvalidParams(m.to_string()));
    if !(params.duration_s.is_finite() && params.duration_s > 0.0) {
        return invalid("duration must be positive and finite");
    }
    if params.prompt_tokens == 0 || params.output_tokens == 0 {
        return invalid("token counts must be >= 1");
    }
    let valid_rate = |r: f64| r.is_finite() && r >= 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end_ms = params.duration_s * 1000.0;

    let fixed = |times: Vec<f64>| {
        times
            .into_iter()
            .enumerate()
            .map(|(i, t)| Request {
                id: i as u64,
                arrival_ms: t,
                prompt_tokens: params.prompt_tokens,
                output_tokens: params.output_tokens,
            })
            .collect::<Vec<_>>()
    };

    match pattern {
        TracePattern::Poisson { rate } => {
            if !valid_rate(*rate) {
                return invalid("rate must be finite and >= 0");
            }
            let mut times = Vec::new();
            poisson_window(&mut rng, *rate, 0.0, params.duration_s, &mut times);
            Ok(fixed(times))
        }
        TracePattern::Burst { rate_min, rate_max } => {
            if !valid_rate(*rate_min) || !valid_rate(*rate_max) || rate_min > rate_max {
                return invalid("need 0 <= rate_min <= rate_max");
            }
            let segments = (params.duration_s / BURST_SEGMENT_S).ceil() as usize;
            let mut rates: Vec<f64> = (0..segments)
                .map(|i| {
                    let u = (i as f64 + rng.gen::<f64>()) / segments as f64;
                    rate_min + (rate_max - rate_min) * u.powf(1.5)
                })
                .collect();
            rates.shuffle(&mut rng);
            let mut times = Vec::new();
            for (i, rate) in rates.into_iter().enumerate() {
                let start = i as f64 * BURST_SEGMENT_S;
                let end = (start + BURST_SEGMENT_S).min(params.duration_s);
                poisson_window(&mut rng, rate, start, end, &mut times);
            }
            Ok(fixed(times))
        }
        TracePattern::Replay { source, scale } => {
            if !(scale.is_finite() && *scale > 0.0) {
                return invalid("replay scale must be positive");
            }
            let mut out: Vec<Request> = source
                .iter()
                .filter(|_| *scale >= 1.0 || rng.gen_bool(*scale))
                .map(|r| Request {
                    arrival_ms: if *scale > 1.0 {
                        r.arrival_ms / scale
                    } else {
                        r.arrival_ms
                    },
                    ..r.clone()
                })
                .filter(|r| r.arrival_ms < end_ms)
                .collect();
            out.sort_by(|a, b| a.arrival_ms.total_cmp(&b.arrival_ms));
            for (i, r) in out.iter_mut().enumerate() {
                r.id = i as u64;
            }
            Ok(out)
        }
    }
}
