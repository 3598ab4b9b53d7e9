use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{EnvError, Info};
use crate::plugins::QualifiedName;
use crate::spaces::{Space, SpaceValue};

/// Per-episode reward function. Created fresh at every reset so it can keep
/// state across the decisions of one episode.
pub type RewardFn<S> = Box<dyn FnMut(&S) -> f64 + Send>;

type ObservationMap<S> = Arc<dyn Fn(&S) -> SpaceValue + Send + Sync>;
type RewardFactory<S> = Arc<dyn Fn() -> RewardFn<S> + Send + Sync>;
type Diagnostics<S> = Arc<dyn Fn(&S) -> Info + Send + Sync>;

/// Turns an action from the action space into the value the decision
/// function returns to the simulation.
pub enum ActionMap<D> {
    Function(Arc<dyn Fn(&SpaceValue) -> D + Send + Sync>),
    /// Lookup by discrete index; the keys must be exactly `0..n`.
    Table(BTreeMap<u64, D>),
}

impl<D> ActionMap<D> {
    pub fn function(f: impl Fn(&SpaceValue) -> D + Send + Sync + 'static) -> Self {
        ActionMap::Function(Arc::new(f))
    }

    pub fn table(entries: impl IntoIterator<Item = (u64, D)>) -> Self {
        ActionMap::Table(entries.into_iter().collect())
    }
}

impl<D: Clone> ActionMap<D> {
    /// `None` only for a table index outside the key set.
    pub fn apply(&self, action: &SpaceValue) -> Option<D> {
        match self {
            ActionMap::Function(f) => Some(f(action)),
            ActionMap::Table(table) => action.as_index().and_then(|i| table.get(&i).cloned()),
        }
    }
}

/// Spaces and mappings that turn a decision point into an environment.
pub struct EnvDefinition<S, D> {
    pub(crate) decision_point: QualifiedName,
    pub(crate) observation_space: Space,
    pub(crate) observation_map: ObservationMap<S>,
    pub(crate) action_space: Space,
    pub(crate) action_map: ActionMap<D>,
    pub(crate) reward_factory: RewardFactory<S>,
    pub(crate) diagnostics: Option<Diagnostics<S>>,
}

impl<S, D> fmt::Debug for EnvDefinition<S, D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvDefinition")
            .field("decision_point", &self.decision_point)
            .field("observation_space", &self.observation_space)
            .field("action_space", &self.action_space)
            .finish_non_exhaustive()
    }
}

impl<S, D> EnvDefinition<S, D> {
    pub fn builder(decision_point: &str) -> EnvDefinitionBuilder<S, D> {
        EnvDefinitionBuilder {
            decision_point: decision_point.to_owned(),
            observation: None,
            action: None,
            reward_factory: None,
            diagnostics: None,
        }
    }

    pub fn decision_point(&self) -> &QualifiedName {
        &self.decision_point
    }

    pub fn observation_space(&self) -> &Space {
        &self.observation_space
    }

    pub fn action_space(&self) -> &Space {
        &self.action_space
    }

    /// Observation and diagnostics for `state`, or a description of why the
    /// observation falls outside the declared space.
    pub(crate) fn observe(&self, state: &S) -> Result<(SpaceValue, Info), String> {
        let observation = (self.observation_map)(state);
        if !self.observation_space.contains(&observation) {
            return Err(format!(
                "observation {observation} for {} is outside {}",
                self.decision_point, self.observation_space
            ));
        }
        let info = self
            .diagnostics
            .as_ref()
            .map(|d| d(state))
            .unwrap_or_default();
        Ok((observation, info))
    }

    pub(crate) fn new_reward_fn(&self) -> RewardFn<S> {
        (self.reward_factory)()
    }
}

pub struct EnvDefinitionBuilder<S, D> {
    decision_point: String,
    observation: Option<(Space, ObservationMap<S>)>,
    action: Option<(Space, ActionMap<D>)>,
    reward_factory: Option<RewardFactory<S>>,
    diagnostics: Option<Diagnostics<S>>,
}

impl<S, D> EnvDefinitionBuilder<S, D> {
    pub fn observation(
        mut self,
        space: impl Into<Space>,
        map: impl Fn(&S) -> SpaceValue + Send + Sync + 'static,
    ) -> Self {
        self.observation = Some((space.into(), Arc::new(map)));
        self
    }

    pub fn action(mut self, space: impl Into<Space>, map: ActionMap<D>) -> Self {
        self.action = Some((space.into(), map));
        self
    }

    /// `factory` is called at every reset to create that episode's reward function.
    pub fn reward(mut self, factory: impl Fn() -> RewardFn<S> + Send + Sync + 'static) -> Self {
        self.reward_factory = Some(Arc::new(factory));
        self
    }

    /// Stateless reward mapping.
    pub fn reward_fn(self, f: impl Fn(&S) -> f64 + Send + Sync + 'static) -> Self
    where
        S: 'static,
    {
        let f = Arc::new(f);
        self.reward(move || {
            let f = Arc::clone(&f);
            Box::new(move |s: &S| f(s))
        })
    }

    /// Extra entries for the `info` map of every step.
    pub fn diagnostics(mut self, f: impl Fn(&S) -> Info + Send + Sync + 'static) -> Self {
        self.diagnostics = Some(Arc::new(f));
        self
    }

    pub fn build(self) -> Result<EnvDefinition<S, D>, EnvError> {
        let decision_point = QualifiedName::new(self.decision_point)?;
        let missing = |what: &str| EnvError::InvalidDefinition(format!("missing {what}"));
        let (observation_space, observation_map) = self
            .observation
            .ok_or_else(|| missing("observation space"))?;
        let (action_space, action_map) = self.action.ok_or_else(|| missing("action space"))?;
        let reward_factory = self
            .reward_factory
            .ok_or_else(|| missing("reward mapping"))?;

        if let ActionMap::Table(table) = &action_map {
            let Space::Discrete(d) = &action_space else {
                return Err(EnvError::InvalidDefinition(
                    "an action table needs a discrete action space".into(),
                ));
            };
            let keys_match = table.len() as u64 == d.n() && table.keys().copied().eq(0..d.n());
            if !keys_match {
                return Err(EnvError::InvalidDefinition(format!(
                    "action table keys must be exactly 0..{}",
                    d.n()
                )));
            }
        }

        Ok(EnvDefinition {
            decision_point,
            observation_space,
            observation_map,
            action_space,
            action_map,
            reward_factory,
            diagnostics: self.diagnostics,
        })
    }
}
