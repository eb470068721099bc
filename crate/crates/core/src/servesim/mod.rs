//! Trace-driven continuous-batching simulator with per-iteration FP16/FP8
//! precision switching.
//!
//! Each iteration batches one decode token per running request plus prefill
//! chunks, asks the precision policy for FP16 or FP8, and advances the clock
//! by the latency model's cost for that batch. Latency metrics derive from
//! the recorded token emission times.

mod config;
mod metrics;
mod policy;
mod sim;
mod trace;

use std::io;

use thiserror::Error;

pub use config::{LatencyModel, PolicyConfig, PolicyMode, Precision, SchedulerConfig};
pub use metrics::{
    export_metrics, percentile, ExportFormat, PrecisionSpan, RequestMetrics, SecondStats,
    SimMetrics, SimSummary, TIMELINE_HEADER,
};
pub use policy::{DualPolicy, FixedPolicy, IterationContext, PrecisionPolicy};
pub use sim::{simulate, simulate_with_policy};
pub use trace::{
    generate_trace, ingest_reader, ingest_trace, write_trace, ColumnMap, Request, TraceParams,
    TracePattern,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("row {row}: {msg}")]
    Parse { row: u64, msg: String },
    #[error("trace contains no requests")]
    EmptyTrace,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}
