//! Corpus-level orchestration: configuration, graph builds, evaluation and
//! graph statistics.

pub mod config;
mod eval;
mod run;
mod stats;

pub use config::{
    config_hash, interpolate_env, Backends, ChainConfig, EvalConfig, KgMode, PipelineConfig,
    RetrievalDefaults, DEFAULT_QUESTION_TEMPLATE,
};
pub use eval::{evaluate, normalize_answer, render_question, EvalItem, EvalReport};
pub use run::{
    describe_and_verify, run_pipeline, run_with_backends, ItemReport, ItemStatus, RunOptions,
    RunOutcome, RunReport, RunSummary, RUN_REPORT_FILE, SCORES_DIR,
};
pub use stats::{stats, GraphStats};
