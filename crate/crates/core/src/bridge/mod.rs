//! Decision points as Gym-style environments.
//!
//! The simulation runs on a dedicated thread per episode. Whenever it calls a
//! decision function wrapped by [`DecisionPointRegistry::make_step`] while an
//! environment is bound, the wrapper sends an [`EpisodeEvent`] to the caller
//! and blocks until `step` delivers the next action. The caller blocks while
//! the simulation runs, so exactly one side is runnable at a time and the
//! simulation code never needs to know it is being driven from outside.
//!
//! ```text
//!   caller                         simulation thread
//!   reset() ──spawn──────────────▶ sim.reset(); sim.run() ...
//!          ◀──DecisionReached───── decision fn called
//!   step(a) ──Act(a)─────────────▶ decision fn returns action_map(a) ...
//!          ◀──DecisionReached───── next decision
//!   step(a) ──Act(a)─────────────▶ ... run() returns
//!          ◀──EpisodeEnded──────── terminal observation + reward
//! ```
//!
//! `close` (and `reset` during an episode) sends a cancellation instead of an
//! action; the pending decision call unwinds out of `run()` and the thread
//! exits.

mod decision;
mod definition;
mod env;
mod registry;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use thiserror::Error;

use crate::plugins::{PluginError, QualifiedName};
use crate::spaces::{Space, SpaceValue};

pub use decision::{generate_env, make_step, DecisionFn, DecisionPointRegistry};
pub use definition::{ActionMap, EnvDefinition, EnvDefinitionBuilder, RewardFn};
pub use env::{AlternationStats, EnvFactory, EnvHandle, Lifecycle, StepResult, DEFAULT_TIMEOUT};
pub use registry::{make, register, EnvRegistry};

/// Error type returned by [`Simulation::run`].
pub type SimulationError = Box<dyn std::error::Error + Send + Sync>;

/// A simulation that can be driven through an environment.
///
/// `run` is the simulation's own main loop. It must return in finitely many
/// steps once `stop` has been called and the loop condition is next checked.
pub trait Simulation: Send + 'static {
    /// State handed to the decision function and the environment mappings.
    type State: 'static;

    /// Returns the simulation to its initial state.
    fn reset(&mut self);

    /// Runs the simulation loop until the episode ends.
    fn run(&mut self) -> Result<(), SimulationError>;

    /// Asks the loop to stop at its next check.
    fn stop(&mut self);

    /// Current state; `None` before the first reset.
    fn state(&self) -> Option<&Self::State>;

    /// Seed used by the next `reset`.
    fn seed(&mut self, _seed: u64) {}
}

/// Event delivered from the simulation thread to the caller at each transfer.
#[derive(Debug, Clone, PartialEq)]
pub enum EpisodeEvent {
    DecisionReached {
        observation: SpaceValue,
        reward: f64,
        info: Info,
    },
    EpisodeEnded {
        observation: SpaceValue,
        reward: f64,
        info: Info,
    },
    SimulationFault {
        description: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InfoValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl InfoValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            InfoValue::Int(i) => Some(i as f64),
            InfoValue::Float(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            InfoValue::Int(i) => Some(i),
            _ => None,
        }
    }
}

impl fmt::Display for InfoValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InfoValue::Int(v) => write!(f, "{v}"),
            InfoValue::Float(v) => write!(f, "{v}"),
            InfoValue::Bool(v) => write!(f, "{v}"),
            InfoValue::Text(v) => f.write_str(v),
        }
    }
}

impl From<i64> for InfoValue {
    fn from(v: i64) -> Self {
        InfoValue::Int(v)
    }
}

impl From<u64> for InfoValue {
    fn from(v: u64) -> Self {
        InfoValue::Int(i64::try_from(v).unwrap_or(i64::MAX))
    }
}

impl From<usize> for InfoValue {
    fn from(v: usize) -> Self {
        InfoValue::from(v as u64)
    }
}

impl From<f64> for InfoValue {
    fn from(v: f64) -> Self {
        InfoValue::Float(v)
    }
}

impl From<bool> for InfoValue {
    fn from(v: bool) -> Self {
        InfoValue::Bool(v)
    }
}

impl From<&str> for InfoValue {
    fn from(v: &str) -> Self {
        InfoValue::Text(v.to_owned())
    }
}

impl From<String> for InfoValue {
    fn from(v: String) -> Self {
        InfoValue::Text(v)
    }
}

/// Diagnostics returned alongside each step. Ordered by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Info(BTreeMap<String, InfoValue>);

impl Info {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<InfoValue>) {
        self.0.insert(key.into(), value.into());
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<InfoValue>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&InfoValue> {
        self.0.get(key)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(InfoValue::as_f64)
    }

    pub fn get_i64(&self, key: &str) -> Option<i64> {
        self.get(key).and_then(InfoValue::as_i64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &InfoValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment id {0:?} is not registered")]
    UnknownEnv(String),
    #[error("environment id {0:?} is already registered")]
    DuplicateEnv(String),
    #[error("environment id {0:?} does not follow the Name-vN convention")]
    InvalidEnvId(String),
    #[error("decision point {0} is not registered")]
    UnknownDecisionPoint(String),
    #[error("decision point {0} is already registered")]
    DuplicateDecisionPoint(QualifiedName),
    #[error("decision point {0} was registered for a different simulation state type")]
    StateTypeMismatch(QualifiedName),
    #[error("invalid environment definition: {0}")]
    InvalidDefinition(String),
    #[error(transparent)]
    Plugin(#[from] PluginError),
    #[error("decision point {0} is already bound to a running episode")]
    DecisionPointBusy(QualifiedName),
    #[error("the simulation instance is already running an episode")]
    SimulationBusy,
    #[error("{operation} is not allowed while the environment is {lifecycle:?}")]
    Contract {
        operation: &'static str,
        lifecycle: Lifecycle,
    },
    #[error("action {action} is not contained in the action space {space}")]
    ActionOutOfSpace { action: SpaceValue, space: Space },
    #[error("episode ended before first decision")]
    EndedBeforeFirstDecision,
    #[error("simulation fault: {0}")]
    SimulationFault(String),
    #[error("{operation} did not complete within {timeout:?}")]
    Liveness {
        operation: &'static str,
        timeout: Duration,
    },
}

impl EnvError {
    /// Whether the error is a misuse of the environment protocol rather than
    /// a failure of the simulation or the engine.
    pub fn is_contract_violation(&self) -> bool {
        matches!(
            self,
            EnvError::Contract { .. } | EnvError::ActionOutOfSpace { .. }
        )
    }
}
