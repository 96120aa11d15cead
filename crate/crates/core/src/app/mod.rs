//! Command layer behind the `duplex` binary. Each subcommand is a function
//! over a resolved [`Context`]; reports embed the full configuration.

mod commands;
mod config;

pub use commands::{
    check_task, eval, gen_corpus, latency, replay, run_session_cmd, sweep, train, BackboneKind, Context, CorpusStats,
    EvalArgs, EvalReport, Provenance, SessionArgs, SweepArgs, Task, TrainArgs, TrainSummary,
};
pub use config::{EvalConfig, ModelShape, RunConfig, Stage1Config, Stage2Config};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DUPLEX_OUT";
