//! Gym-style environments for decision points inside existing simulations.
//!
//! A simulation keeps calling its own decision functions as usual. Wrapping one
//! of them with [`make_step`](bridge::DecisionPointRegistry::make_step) lets an
//! external caller drive the simulation through `reset`/`step` instead: the
//! simulation runs on its own execution context and hands control back to the
//! caller every time it reaches the decision point.
//!
//! - [`spaces`]: observation and action domains.
//! - [`plugins`]: before/after/instead handlers on named functions.
//! - [`bridge`]: decision points, environment handles and the environment registry.

pub mod bridge;
pub mod plugins;
pub mod spaces;

pub use bridge::{
    ActionMap, DecisionFn, DecisionPointRegistry, EnvDefinition, EnvError, EnvFactory, EnvHandle,
    EnvRegistry, EpisodeEvent, Info, InfoValue, Lifecycle, Simulation, SimulationError, StepResult,
};
pub use plugins::{
    Handler, HandlerOutcome, HandlerPosition, HookRegistry, Hooked, PluginError, QualifiedName,
};
pub use spaces::{BoxSpace, DiscreteSpace, Space, SpaceError, SpaceValue};
