//! Runs seeded greenhouse episodes and records one trace row per decision.
//!
//! Row 0 is the state at the first decision (what `reset` observes). Every
//! later row is the state after one more step, together with the litres that
//! step applied and the reward it returned; the last row of a finished
//! episode is the terminal state.

mod policy;
mod run;
mod trace;

use std::io;
use std::path::PathBuf;

use simenv::EnvError;
use thiserror::Error;

pub use policy::Policy;
pub use run::{
    run_env_episode, run_episode, standalone_trace, verify_equivalence, Divergence, Equivalence,
    Reference, RunConfig, RunOutcome, Termination, DEFAULT_MAX_DAYS,
};
pub use trace::{render_trace, write_trace, Format, TraceRecord, CSV_HEADER};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown environment id {0:?}")]
    UnknownEnv(String),
    #[error("invalid policy {0:?}: expected random, fallback or constant:<x> with 0 <= x <= 1")]
    InvalidPolicy(String),
    #[error("max-days must be at least 1")]
    InvalidMaxDays,
    #[error("verify-equivalence needs a constant policy, got {0}")]
    NonDeterministicPolicy(Policy),
    #[error(transparent)]
    Env(EnvError),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("cannot write an empty trace")]
    EmptyTrace,
    #[error("cannot write trace to {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("cannot serialize trace: {0}")]
    Serialize(String),
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::UnknownEnv(id) => CliError::UnknownEnv(id),
            e => CliError::Env(e),
        }
    }
}

impl CliError {
    /// 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::UnknownEnv(_)
            | CliError::InvalidPolicy(_)
            | CliError::InvalidMaxDays
            | CliError::NonDeterministicPolicy(_) => 1,
            _ => 2,
        }
    }
}
