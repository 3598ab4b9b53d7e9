//! The watering decision as an environment.
//!
//! Each env id gets its own hook registry and decision-point registry, so the
//! baseline and the hot-vent variant can live side by side in one process.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use simenv::{
    ActionMap, BoxSpace, DecisionFn, DecisionPointRegistry, EnvDefinition, EnvError, EnvFactory,
    EnvRegistry, Handler, HookRegistry, Info, Simulation, SimulationError, SpaceValue,
};

use crate::model::{Greenhouse, ModelHooks, AIR_EXCHANGE, CHOOSE_WATER_AMOUNT, MAX_TEMP, MIN_TEMP};

pub const BASELINE_ENV_ID: &str = "Greenhouse-v0";
pub const HOT_VENT_ENV_ID: &str = "GreenhouseHotVent-v0";

/// Litres per unit of action.
pub const WATER_SCALE: f64 = 1000.0;
const POT_SCALE: f64 = 1000.0;

/// Where the daily `day N alive: A, dead: D` lines go.
#[derive(Clone)]
pub struct LogSink(Arc<dyn Fn(&str) + Send + Sync>);

impl LogSink {
    pub fn new(f: impl Fn(&str) + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn stdout() -> Self {
        Self::new(|line| println!("{line}"))
    }

    pub fn silent() -> Self {
        Self::new(|_| {})
    }

    /// A sink that keeps every line, and the buffer it writes to.
    pub fn capture() -> (Self, Arc<Mutex<Vec<String>>>) {
        let lines = Arc::new(Mutex::new(Vec::new()));
        let buffer = Arc::clone(&lines);
        let sink = Self::new(move |line| {
            buffer
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .push(line.to_owned())
        });
        (sink, lines)
    }

    pub fn emit(&self, line: &str) {
        (self.0)(line)
    }
}

impl Default for LogSink {
    fn default() -> Self {
        Self::stdout()
    }
}

impl fmt::Debug for LogSink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LogSink")
    }
}

pub fn day_line(day: u64, alive: usize, dead: usize) -> String {
    format!("day {day} alive: {alive}, dead: {dead}")
}

/// Runs a greenhouse day by day until every plant is dead or `stop` is called.
#[derive(Debug)]
pub struct GreenhouseSim {
    greenhouse: Option<Greenhouse>,
    should_stop: Arc<AtomicBool>,
    day: u64,
    seed: Option<u64>,
    hooks: Arc<ModelHooks>,
    log: LogSink,
}

impl GreenhouseSim {
    pub fn new(hooks: Arc<ModelHooks>, seed: Option<u64>, log: LogSink) -> Self {
        Self {
            greenhouse: None,
            should_stop: Arc::new(AtomicBool::new(false)),
            day: 0,
            seed,
            hooks,
            log,
        }
    }

    pub fn day(&self) -> u64 {
        self.day
    }

    pub fn greenhouse(&self) -> Option<&Greenhouse> {
        self.greenhouse.as_ref()
    }

    pub fn set_seed(&mut self, seed: Option<u64>) {
        self.seed = seed;
    }

    /// Flag checked at the top of every day; setting it has the same effect
    /// as `stop`, from any thread.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.should_stop)
    }
}

impl Simulation for GreenhouseSim {
    type State = Greenhouse;

    fn reset(&mut self) {
        self.greenhouse = Some(Greenhouse::with_hooks(self.seed, Arc::clone(&self.hooks)));
        self.should_stop.store(false, Ordering::SeqCst);
        self.day = 0;
    }

    fn run(&mut self) -> Result<(), SimulationError> {
        while !self.should_stop.load(Ordering::SeqCst) {
            let greenhouse = self.greenhouse.as_mut().ok_or("run called before reset")?;
            let alive = greenhouse.alive_count();
            self.log
                .emit(&day_line(self.day, alive, greenhouse.pots.len() - alive));
            greenhouse.update_day()?;
            self.day += 1;
            if alive == 0 {
                self.should_stop.store(true, Ordering::SeqCst);
            }
        }
        Ok(())
    }

    fn stop(&mut self) {
        self.should_stop.store(true, Ordering::SeqCst);
    }

    fn state(&self) -> Option<&Greenhouse> {
        self.greenhouse.as_ref()
    }

    fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }
}

pub fn observation_space() -> BoxSpace {
    BoxSpace::uniform(0.0, 1.0, 4).expect("valid bounds")
}

pub fn action_space() -> BoxSpace {
    BoxSpace::uniform(0.0, 1.0, 1).expect("valid bounds")
}

/// `[temperature, humidity, pot count, alive fraction]`, scaled and clamped
/// into the unit box. Humidity above 1 is reported as 1.
pub fn obs_from_greenhouse(g: &Greenhouse) -> SpaceValue {
    let raw = [
        (g.temp - MIN_TEMP) / (MAX_TEMP - MIN_TEMP),
        g.humidity,
        g.pots.len().min(POT_SCALE as usize) as f64 / POT_SCALE,
        g.alive_fraction(),
    ];
    let clamped = observation_space().clamp(&raw).expect("four components");
    SpaceValue::Vector(clamped)
}

/// Litres to pour for an action in `[0, 1]`.
pub fn action_to_water(action: &SpaceValue) -> f64 {
    let w = action
        .as_vector()
        .and_then(|v| v.first())
        .copied()
        .unwrap_or(0.0);
    (w * WATER_SCALE).clamp(0.0, WATER_SCALE)
}

/// Water use seen at the previous decision of the current episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeRewardState {
    pub last_water_use: f64,
}

impl EpisodeRewardState {
    /// Alive fraction minus the water cost since the previous call.
    pub fn reward(&mut self, g: &Greenhouse) -> f64 {
        let water_cost = (g.water_use - self.last_water_use) / WATER_SCALE;
        self.last_water_use = g.water_use;
        g.alive_fraction() - water_cost
    }
}

pub fn diagnostics(g: &Greenhouse) -> Info {
    Info::new()
        .with("temp", g.temp)
        .with("humidity", g.humidity)
        .with("alive", g.alive_count())
        .with("dead", g.dead_count())
        .with("water_use", g.water_use)
}

/// Air exchange that speeds up with temperature: none at 15 °C, complete at 35 °C.
pub fn new_air_exchange(g: &mut Greenhouse) {
    let factor = (g.temp - MIN_TEMP) / (MAX_TEMP - MIN_TEMP);
    g.humidity += factor * (g.outside_humidity - g.humidity);
}

pub fn greenhouse_definition() -> Result<EnvDefinition<Greenhouse, f64>, EnvError> {
    EnvDefinition::builder(CHOOSE_WATER_AMOUNT)
        .observation(observation_space(), obs_from_greenhouse)
        .action(action_space(), ActionMap::function(action_to_water))
        .reward(|| {
            let mut state = EpisodeRewardState::default();
            Box::new(move |g: &Greenhouse| state.reward(g))
        })
        .diagnostics(diagnostics)
        .build()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    HotVent,
}

impl Variant {
    pub fn env_id(self) -> &'static str {
        match self {
            Variant::Baseline => BASELINE_ENV_ID,
            Variant::HotVent => HOT_VENT_ENV_ID,
        }
    }

    pub fn from_env_id(env_id: &str) -> Option<Self> {
        let env_id = env_id.rsplit(':').next().unwrap_or(env_id);
        [Variant::Baseline, Variant::HotVent]
            .into_iter()
            .find(|v| v.env_id() == env_id)
    }
}

/// Hooks, decision point and handlers for one variant.
///
/// `choose_water_amount` is routed through the wrapped decision function, so
/// a simulation built from [`GreenhouseWiring::simulation`] hands control to
/// an environment when one is bound and waters 200 L per day otherwise.
#[derive(Debug)]
pub struct GreenhouseWiring {
    variant: Variant,
    hooks: HookRegistry,
    model: Arc<ModelHooks>,
    decision_points: DecisionPointRegistry,
    decision: DecisionFn<Greenhouse, f64>,
}

impl GreenhouseWiring {
    pub fn new(variant: Variant) -> Result<Self, EnvError> {
        let hooks = HookRegistry::new();
        let model = ModelHooks::expose(&hooks)?;
        let decision_points = DecisionPointRegistry::new();
        let decision = decision_points
            .make_step(greenhouse_definition()?, Greenhouse::default_water_amount)?;

        let routed = decision.clone();
        hooks.attach(
            Handler::instead(move |g: &mut Greenhouse, ()| routed.call(g)),
            CHOOSE_WATER_AMOUNT,
        )?;
        if variant == Variant::HotVent {
            hooks.attach(
                Handler::instead(|g: &mut Greenhouse, ()| new_air_exchange(g)),
                AIR_EXCHANGE,
            )?;
        }
        Ok(Self {
            variant,
            hooks,
            model,
            decision_points,
            decision,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Registry holding this variant's model hooks, for extra handlers.
    pub fn hooks(&self) -> &HookRegistry {
        &self.hooks
    }

    pub fn model_hooks(&self) -> Arc<ModelHooks> {
        Arc::clone(&self.model)
    }

    pub fn decision(&self) -> &DecisionFn<Greenhouse, f64> {
        &self.decision
    }

    pub fn simulation(&self, seed: Option<u64>, log: LogSink) -> GreenhouseSim {
        GreenhouseSim::new(self.model_hooks(), seed, log)
    }

    pub fn env_factory(&self, simulation: GreenhouseSim) -> Result<EnvFactory, EnvError> {
        self.decision_points
            .generate_env(simulation, CHOOSE_WATER_AMOUNT)
    }
}

/// Registers both greenhouse env ids on `registry`.
pub fn register_greenhouse_envs(registry: &mut EnvRegistry, log: LogSink) -> Result<(), EnvError> {
    for variant in [Variant::Baseline, Variant::HotVent] {
        if registry.contains(variant.env_id()) {
            return Err(EnvError::DuplicateEnv(variant.env_id().to_owned()));
        }
    }
    for variant in [Variant::Baseline, Variant::HotVent] {
        let wiring = GreenhouseWiring::new(variant)?;
        let factory = wiring.env_factory(wiring.simulation(None, log.clone()))?;
        registry.register(variant.env_id(), factory)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(v: &SpaceValue) -> &[f64] {
        v.as_vector().unwrap()
    }

    #[test]
    fn observation_mapping() {
        let mut g = Greenhouse::new(Some(0));
        assert_eq!(vector(&obs_from_greenhouse(&g)), &[0.25, 0.6, 0.2, 1.0]);
        g.temp = 35.0;
        assert_eq!(vector(&obs_from_greenhouse(&g))[0], 1.0);
        g.temp = 15.0;
        assert_eq!(vector(&obs_from_greenhouse(&g))[0], 0.0);
        g.humidity = 1.03;
        assert_eq!(vector(&obs_from_greenhouse(&g))[1], 1.0);
        for p in g.pots.iter_mut().take(50) {
            p.health = 0.0;
        }
        assert_eq!(vector(&obs_from_greenhouse(&g))[3], 0.75);
    }

    #[test]
    fn action_mapping() {
        assert_eq!(action_to_water(&vec![0.2].into()), 200.0);
        assert_eq!(action_to_water(&vec![1.0].into()), 1000.0);
        assert_eq!(action_to_water(&vec![0.0].into()), 0.0);
    }

    #[test]
    fn reward_mapping() {
        let mut g = Greenhouse::new(Some(0));
        let mut state = EpisodeRewardState::default();
        assert_eq!(state.reward(&g), 1.0);
        g.water_use = 200.0;
        assert!((state.reward(&g) - 0.8).abs() < 1e-15);
        assert_eq!(state.last_water_use, 200.0);
        for p in &mut g.pots {
            p.health = 0.0;
        }
        assert_eq!(state.reward(&g), 0.0);
    }

    #[test]
    fn hot_vent_air_exchange() {
        let mut g = Greenhouse::new(Some(0));
        g.temp = 15.0;
        g.humidity = 0.9;
        new_air_exchange(&mut g);
        assert_eq!(g.humidity, 0.9);
        g.temp = 35.0;
        g.humidity = 1.0;
        new_air_exchange(&mut g);
        assert!((g.humidity - 0.6).abs() < 1e-15);
        g.temp = 25.0;
        g.humidity = 0.8;
        new_air_exchange(&mut g);
        assert!((g.humidity - 0.7).abs() < 1e-12);
    }

    #[test]
    fn variant_ids() {
        assert_eq!(
            Variant::from_env_id("Greenhouse-v0"),
            Some(Variant::Baseline)
        );
        assert_eq!(
            Variant::from_env_id("env_def:GreenhouseHotVent-v0"),
            Some(Variant::HotVent)
        );
        assert_eq!(Variant::from_env_id("Other-v0"), None);
    }

    #[test]
    fn sim_reset_and_stop() {
        let wiring = GreenhouseWiring::new(Variant::Baseline).unwrap();
        let mut sim = wiring.simulation(Some(3), LogSink::silent());
        assert!(sim.state().is_none());
        sim.reset();
        assert_eq!(sim.day(), 0);
        assert_eq!(sim.state().unwrap().alive_count(), 200);
        let first = sim.state().unwrap().pots.clone();
        sim.stop();
        sim.reset();
        assert!(!sim.stop_handle().load(Ordering::SeqCst));
        assert_eq!(sim.state().unwrap().pots, first);
    }

    #[test]
    fn standalone_run_logs_and_ends_when_all_dead() {
        let wiring = GreenhouseWiring::new(Variant::Baseline).unwrap();
        let (log, lines) = LogSink::capture();
        let mut sim = wiring.simulation(Some(11), log);
        sim.reset();
        sim.run().unwrap();
        let lines = lines.lock().unwrap();
        assert_eq!(lines.len() as u64, sim.day());
        assert_eq!(lines[0], "day 0 alive: 200, dead: 0");
        assert_eq!(
            lines.last().unwrap(),
            &format!("day {} alive: 0, dead: 200", sim.day() - 1)
        );
        assert_eq!(lines.iter().filter(|l| l.contains("alive: 0,")).count(), 1);
    }

    #[test]
    fn registration() {
        let mut registry = EnvRegistry::new();
        register_greenhouse_envs(&mut registry, LogSink::silent()).unwrap();
        assert!(registry.contains(BASELINE_ENV_ID));
        assert!(registry.contains(HOT_VENT_ENV_ID));
        assert!(matches!(
            register_greenhouse_envs(&mut registry, LogSink::silent()),
            Err(EnvError::DuplicateEnv(_))
        ));
    }
}
