use std::any::Any;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use super::definition::{EnvDefinition, RewardFn};
use super::env::{self, Command, EnvFactory, SimLink, Unwind};
use super::{EnvError, EpisodeEvent, Simulation};
use crate::plugins::QualifiedName;
use crate::spaces::Space;

/// Episode state shared between the engine and the wrapped decision function.
/// Only the simulation thread of the episode locks `reward` and `link`.
pub(crate) struct BoundEpisode<S> {
    token: u64,
    reward: Mutex<RewardFn<S>>,
    link: Mutex<SimLink>,
}

struct DecisionEntry<S, D> {
    definition: EnvDefinition<S, D>,
    fallback: Box<dyn Fn(&S) -> D + Send + Sync>,
    binding: Mutex<Option<Arc<BoundEpisode<S>>>>,
}

/// The engine's view of a decision point, independent of its domain value type.
pub(crate) trait DecisionCore<S>: Send + Sync {
    fn name(&self) -> &QualifiedName;
    fn observation_space(&self) -> &Space;
    fn action_space(&self) -> &Space;
    fn bind(&self, token: u64, link: SimLink) -> Result<(), EnvError>;
    fn unbind(&self, token: u64);
    /// Terminal event for the episode `token` once `run()` has returned.
    fn terminal_event(&self, token: u64, state: &S) -> EpisodeEvent;
}

impl<S, D> DecisionEntry<S, D> {
    fn active_episode(&self) -> Option<Arc<BoundEpisode<S>>> {
        let current = env::current_episode_token()?;
        self.binding
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .as_ref()
            .filter(|ep| ep.token == current)
            .cloned()
    }
}

impl<S: 'static, D: Clone + Send + Sync + 'static> DecisionCore<S> for DecisionEntry<S, D> {
    fn name(&self) -> &QualifiedName {
        &self.definition.decision_point
    }

    fn observation_space(&self) -> &Space {
        &self.definition.observation_space
    }

    fn action_space(&self) -> &Space {
        &self.definition.action_space
    }

    fn bind(&self, token: u64, link: SimLink) -> Result<(), EnvError> {
        let mut binding = self.binding.lock().unwrap_or_else(|e| e.into_inner());
        if binding.is_some() {
            return Err(EnvError::DecisionPointBusy(self.name().clone()));
        }
        *binding = Some(Arc::new(BoundEpisode {
            token,
            reward: Mutex::new(self.definition.new_reward_fn()),
            link: Mutex::new(link),
        }));
        Ok(())
    }

    fn unbind(&self, token: u64) {
        let mut binding = self.binding.lock().unwrap_or_else(|e| e.into_inner());
        if binding.as_ref().is_some_and(|ep| ep.token == token) {
            *binding = None;
        }
    }

    fn terminal_event(&self, token: u64, state: &S) -> EpisodeEvent {
        let episode = self
            .binding
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .as_ref()
            .filter(|ep| ep.token == token)
            .cloned();
        let Some(episode) = episode else {
            return EpisodeEvent::SimulationFault {
                description: format!("{} lost its episode binding", self.name()),
            };
        };
        match self.definition.observe(state) {
            Ok((observation, info)) => {
                let reward = (episode.reward.lock().unwrap_or_else(|e| e.into_inner()))(state);
                EpisodeEvent::EpisodeEnded {
                    observation,
                    reward,
                    info,
                }
            }
            Err(description) => EpisodeEvent::SimulationFault { description },
        }
    }
}

/// A decision function wrapped by [`DecisionPointRegistry::make_step`].
///
/// Called from a simulation that is not being driven by an environment, it
/// behaves exactly like the original function. Called from the simulation
/// thread of a bound environment, it hands the current state to the caller
/// and returns the mapped action delivered by the next `step`.
pub struct DecisionFn<S, D> {
    entry: Arc<DecisionEntry<S, D>>,
}

impl<S, D> Clone for DecisionFn<S, D> {
    fn clone(&self) -> Self {
        Self {
            entry: Arc::clone(&self.entry),
        }
    }
}

impl<S, D> fmt::Debug for DecisionFn<S, D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DecisionFn")
            .field("decision_point", &self.entry.definition.decision_point)
            .finish()
    }
}

impl<S, D: Clone> DecisionFn<S, D> {
    pub fn name(&self) -> &QualifiedName {
        &self.entry.definition.decision_point
    }

    /// Whether a call on the current thread would be routed to an environment.
    pub fn is_bound(&self) -> bool {
        self.entry.active_episode().is_some()
    }

    pub fn call(&self, state: &S) -> D {
        match self.entry.active_episode() {
            None => (self.entry.fallback)(state),
            Some(episode) => self.hand_over(&episode, state),
        }
    }

    fn hand_over(&self, episode: &BoundEpisode<S>, state: &S) -> D {
        let definition = &self.entry.definition;
        let (observation, info) = match definition.observe(state) {
            Ok(observed) => observed,
            Err(description) => env::unwind(Unwind::Fault(description)),
        };
        let reward = (episode.reward.lock().unwrap_or_else(|e| e.into_inner()))(state);

        let command = {
            let link = episode.link.lock().unwrap_or_else(|e| e.into_inner());
            link.hand_over(EpisodeEvent::DecisionReached {
                observation,
                reward,
                info,
            })
        };
        match command {
            Command::Act(action) => match definition.action_map.apply(&action) {
                Some(value) => value,
                None => env::unwind(Unwind::Fault(format!(
                    "action {action} has no entry in the action table of {}",
                    self.name()
                ))),
            },
            Command::Cancel => env::unwind(Unwind::Cancelled),
        }
    }
}

/// Registered decision points, keyed by qualified name.
#[derive(Default)]
pub struct DecisionPointRegistry {
    points: RwLock<HashMap<QualifiedName, Arc<dyn Any + Send + Sync>>>,
}

impl fmt::Debug for DecisionPointRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let points = self.points.read().unwrap_or_else(|e| e.into_inner());
        let mut names: Vec<_> = points.keys().collect();
        names.sort();
        f.debug_struct("DecisionPointRegistry")
            .field("points", &names)
            .finish()
    }
}

/// Stored in the registry so `generate_env` can recover the typed core
/// without knowing the domain value type.
struct ErasedPoint<S>(Arc<dyn DecisionCore<S>>);

impl DecisionPointRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global() -> &'static DecisionPointRegistry {
        static GLOBAL: OnceLock<DecisionPointRegistry> = OnceLock::new();
        GLOBAL.get_or_init(DecisionPointRegistry::new)
    }

    /// Registers `definition` and wraps `decision_fn` as its fallback.
    pub fn make_step<S, D>(
        &self,
        definition: EnvDefinition<S, D>,
        decision_fn: impl Fn(&S) -> D + Send + Sync + 'static,
    ) -> Result<DecisionFn<S, D>, EnvError>
    where
        S: 'static,
        D: Clone + Send + Sync + 'static,
    {
        let mut points = self.points.write().unwrap_or_else(|e| e.into_inner());
        let name = definition.decision_point.clone();
        if points.contains_key(&name) {
            return Err(EnvError::DuplicateDecisionPoint(name));
        }
        let entry = Arc::new(DecisionEntry {
            definition,
            fallback: Box::new(decision_fn),
            binding: Mutex::new(None),
        });
        let core: Arc<dyn DecisionCore<S>> = entry.clone();
        points.insert(name, Arc::new(ErasedPoint(core)));
        Ok(DecisionFn { entry })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.points
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .any(|k| k.as_str() == name)
    }

    /// Factory for environments that drive `simulation` through the decision
    /// point `decision_point`. All handles from the factory share the one
    /// simulation instance, so only one of them can run an episode at a time.
    pub fn generate_env<Sim: Simulation>(
        &self,
        simulation: Sim,
        decision_point: &str,
    ) -> Result<EnvFactory, EnvError> {
        let erased = {
            let points = self.points.read().unwrap_or_else(|e| e.into_inner());
            points
                .iter()
                .find(|(k, _)| k.as_str() == decision_point)
                .map(|(k, v)| (k.clone(), Arc::clone(v)))
        };
        let (name, erased) =
            erased.ok_or_else(|| EnvError::UnknownDecisionPoint(decision_point.to_owned()))?;
        let point = erased
            .downcast::<ErasedPoint<Sim::State>>()
            .map_err(|_| EnvError::StateTypeMismatch(name))?;
        Ok(EnvFactory::new(simulation, Arc::clone(&point.0)))
    }
}

/// Registers on the global registry.
pub fn make_step<S, D>(
    definition: EnvDefinition<S, D>,
    decision_fn: impl Fn(&S) -> D + Send + Sync + 'static,
) -> Result<DecisionFn<S, D>, EnvError>
where
    S: 'static,
    D: Clone + Send + Sync + 'static,
{
    DecisionPointRegistry::global().make_step(definition, decision_fn)
}

/// Environment factory from the global registry.
pub fn generate_env<Sim: Simulation>(
    simulation: Sim,
    decision_point: &str,
) -> Result<EnvFactory, EnvError> {
    DecisionPointRegistry::global().generate_env(simulation, decision_point)
}
