//! Run configuration, evaluation protocols, baseline comparison, the `k`
//! ablation and the latency bench.

mod ablation;
mod compare;
mod config;
mod eval;
mod latency;

pub use ablation::{ablation_pipeline, ablation_spans, run_ablation_k, AblationReport, AblationVariant};
pub use compare::{compare_baselines, discover_runs, CompareReport, CompareRow, ProtocolTable, RunEntry, FINAL_CHECKPOINT};
pub use config::{EvalConfig, RunConfig};
pub use eval::{
    checkpoint_run_config, evaluate, evaluate_network, summarize, EvalProtocol, EvalReport, EvalRow, ProtocolKind,
    Summary, MAX_TEST_DELAY, REPORT_HEADER,
};
pub use latency::{bench_delays, render_delay_stats, BenchSettings, DelayStats, Jitter, LatencyProfile, Stat};

use thiserror::Error;

use crate::delay::{DelayError, PipelineMode};
use crate::env::EnvError;
use crate::nn::NeuralError;
use crate::ppo::PpoError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint has no usable run configuration: {0}")]
    MissingMetadata(String),
    #[error("checkpoint architecture does not match the {method} pipeline")]
    ArchMismatch { method: PipelineMode },
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Delay(#[from] DelayError),
}
