//! `nestedfp`: convert FP16 weights into nested FP8/FP16 containers, verify
//! the codec, report applicability, run reference GEMMs and simulate serving.
//!
//! Exit status is 0 on success, 1 on domain errors and 2 on usage errors.
//! Every error is reported as a single `error: ...` line on stderr.

/// `println!` that ignores write errors such as a closed pipe.
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "nestedfp", version, about = "Nested FP8/FP16 weight tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert FP16 weights into an NFPT container and print a census.
    Convert(ConvertArgs),
    /// Check the codec exhaustively and/or a container against its digests.
    Verify(VerifyArgs),
    /// Print per-class applicability of a container.
    Report(ReportArgs),
    /// Run one seeded GEMM and print a checksum of the output bits.
    Gemm(GemmArgs),
    /// Generate a request trace as CSV.
    TraceGen(TraceGenArgs),
    /// Simulate serving a trace under a precision policy.
    Simulate(SimulateArgs),
    /// Write a synthetic model with planted exception layers.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// NFPT container, or a raw little-endian FP16 file with --raw.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Treat the input as a raw FP16 tensor.
    #[arg(long, requires = "shape")]
    raw: bool,
    /// Raw tensor shape as N,K.
    #[arg(long, value_parser = parse_shape)]
    shape: Option<(usize, usize)>,
    /// GEMM class of the raw tensor.
    #[arg(long, default_value = "OTHER", value_parser = parse_class)]
    class: nestedfp_core::tensorstore::GemmClass,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("target").required(true).multiple(true).args(["exhaustive", "model"])))]
struct VerifyArgs {
    /// Check all 65,536 FP16 patterns.
    #[arg(long)]
    exhaustive: bool,
    /// Rebuild every layer of a container and compare with its digest.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Encode with a ties-away rounding rule instead of ties-to-even.
    #[arg(long, hide = true)]
    inject_tie_fault: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    format: ReportFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GemmMode {
    Fp16,
    Nfp16,
    Nfp8,
    Fp8,
}

#[derive(Debug, Args)]
struct GemmArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4096))]
    m: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4096))]
    n: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4096))]
    k: u32,
    #[arg(long, value_enum)]
    mode: GemmMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight sampling interval as LO,HI.
    #[arg(long, value_parser = parse_range, default_value = "-1.75,1.75", allow_hyphen_values = true)]
    weights_range: (f64, f64),
    /// Also print error metrics against the FP16 path.
    #[arg(long)]
    report_error: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PatternArg {
    Burst,
    Poisson,
    Replay,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TraceColumns {
    /// arrival_ms,prompt_tokens,output_tokens
    Canonical,
    /// TIMESTAMP,ContextTokens,GeneratedTokens
    Azure,
}

#[derive(Debug, Args)]
struct TraceGenArgs {
    #[arg(long, value_enum)]
    pattern: PatternArg,
    /// Trace length in seconds.
    #[arg(long, allow_negative_numbers = true, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    rate_min: f64,
    /// Peak rate for burst; the constant rate for poisson.
    #[arg(long, allow_negative_numbers = true, default_value_t = 11.0)]
    rate_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Trace to replay.
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TraceColumns::Canonical)]
    source_columns: TraceColumns,
    /// Replay scale: below 1 keeps that share of requests, above 1 compresses time.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.2)]
    scale: f64,
    #[arg(long, default_value_t = 256)]
    prompt_tokens: u32,
    #[arg(long, default_value_t = 512)]
    output_tokens: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fp16,
    Fp8,
    Dual,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = TraceColumns::Canonical)]
    trace_columns: TraceColumns,
    #[arg(long, value_enum, default_value_t = PolicyArg::Dual)]
    policy: PolicyArg,
    /// p90 TPOT target in ms.
    #[arg(long, allow_negative_numbers = true, default_value_t = 33.3)]
    slo_tpot: f64,
    /// TTFT target in ms.
    #[arg(long, allow_negative_numbers = true, default_value_t = 200.0)]
    slo_ttft: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.5)]
    fp8_speedup: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 10.0)]
    base_ms: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.08)]
    per_token_ms: f64,
    #[arg(long, default_value_t = 2048, value_parser = clap::value_parser!(u32).range(1..))]
    max_batched_tokens: u32,
    /// Minimum FP8 iterations after the dual policy switches down.
    #[arg(long, default_value_t = 16)]
    hysteresis: u32,
    /// Relative latency jitter in [0, 1).
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Summary JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-second timeline CSV output.
    #[arg(long)]
    timeline: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlanArg {
    /// 224 layers, all applicable.
    Llama8b,
    /// 160 layers with 14 planted exception layers.
    Phi4,
}

#[derive(Debug, Args)]
struct FixtureArgs {
    #[arg(long, value_enum)]
    plan: PlanArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    rows: usize,
    #[arg(long, default_value_t = 16)]
    cols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(T, T), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated values, got `{s}`"))?;
    let p = |v: &str| {
        v.trim()
            .parse::<T>()
            .map_err(|_| format!("invalid number `{v}`"))
    };
    Ok((p(a)?, p(b)?))
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (n, k) = parse_pair::<usize>(s)?;
    if n == 0 || k == 0 {
        return Err("shape dimensions must be >= 1".into());
    }
    Ok((n, k))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = parse_pair::<f64>(s)?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err("range must be finite with LO <= HI".into());
    }
    Ok((lo, hi))
}

fn parse_class(s: &str) -> Result<nestedfp_core::tensorstore::GemmClass, String> {
    s.parse()
        .map_err(|e: nestedfp_core::tensorstore::StoreError| e.to_string())
}

/// Failure of a subcommand, split by exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp
            | ErrorKind::DisplayVersion
            | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                };
            }
            _ => {
                let text = e.render().to_string();
                let msg: Vec<&str> = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| {
                        !l.is_empty()
                            && !l.starts_with("Usage:")
                            && !l.starts_with("For more information")
                    })
                    .collect();
                eprintln!("{}", one_line(&msg.join(" ")));
                return ExitCode::from(2);
            }
        },
    };
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(2)
        }
        Err(Failure::Domain(err)) => {
            eprintln!("error: {}", one_line(&format!("{err:#}")));
            ExitCode::from(1)
        }
    }
}
