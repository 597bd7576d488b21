//! Config-driven experiment runner: estimate → Lyapunov norm checks →
//! periodic approximation → norm growth rates → joint spectral radius.

mod cli;
mod config;
mod pipeline;

pub use cli::cli;
pub use config::{
    BaseSpec, CocycleSpec, Experiment, ExperimentConfig, Horizons, JsrSpec, LyapunovSpec, TheoremSpec, WordEntry,
};
pub use pipeline::{
    fmt_f64, jsr_operators, provenance, run, run_plan, summary, ExponentSummary, HarnessError, JsrReport, NormChecks,
    Plan, PointNormCheck, Provenance, ResultBundle, Stage,
};
