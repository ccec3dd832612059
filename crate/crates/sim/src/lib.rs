//! Monte Carlo harness around `hbf-core`: sweep specs, seeded
//! realization runs and CSV/JSON result files. The `hbf` binary is a thin
//! command-line front end over this crate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod records;
pub mod run;
pub mod spec;

pub use records::{ResultRecord, SummaryRow};
pub use run::{run_convergence, run_sweep, ConvergenceRun, SweepOutput};
pub use spec::{load_spec, Algorithm, Scenario, SweepSpec};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    /// Invalid or unreadable sweep spec.
    #[error("spec error: {0}")]
    Spec(String),
    #[error(transparent)]
    Core(#[from] hbf_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
