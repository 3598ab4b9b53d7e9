//! A greenhouse watering model and the environments built on it.
//!
//! [`model`] is a plain simulation of 200 potted plants: a random-walk
//! temperature, evaporation into the greenhouse air, daily air exchange with
//! the outside, and a fixed default of 200 L of water per day that slowly
//! overwaters the plants. [`env`] turns the daily watering decision into an
//! environment without touching the model code.

pub mod env;
pub mod model;

pub use env::{
    action_to_water, new_air_exchange, obs_from_greenhouse, register_greenhouse_envs,
    EpisodeRewardState, GreenhouseSim, GreenhouseWiring, LogSink, Variant, BASELINE_ENV_ID,
    HOT_VENT_ENV_ID,
};
pub use model::{Greenhouse, GreenhouseError, ModelHooks, Plant};
