//! Greenhouse watering model.
//!
//! Randomness comes from a per-instance ChaCha8 stream seeded with
//! `seed_from_u64`; uniform draws use the 53-bit conversion of `rand` 0.8.
//! Draw order is fixed: two draws per plant at construction (health, then
//! water requirement, in pot order) and one temperature draw at the start of
//! every day. Changing any of this changes every recorded trace.
//!
//! `update_air_exchange` and `choose_water_amount` are exposed to plugins, so
//! environments and experiments can replace them without editing this file.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simenv::{HookRegistry, Hooked, PluginError};
use thiserror::Error;

pub const AIR_EXCHANGE: &str = "model.Greenhouse.update_air_exchange";
pub const CHOOSE_WATER_AMOUNT: &str = "model.Greenhouse.choose_water_amount";

pub const POT_COUNT: usize = 200;
pub const DEFAULT_WATER_AMOUNT: f64 = 200.0;
pub const INITIAL_TEMP: f64 = 20.0;
pub const INITIAL_HUMIDITY: f64 = 0.6;
pub const OUTSIDE_HUMIDITY: f64 = 0.6;
pub const GREENHOUSE_SIZE: f64 = 2400.0;
pub const MIN_TEMP: f64 = 15.0;
pub const MAX_TEMP: f64 = 35.0;
/// kg/m³ of water vapour in saturated air.
pub const MAX_SATURATION: f64 = 0.20;
pub const INITIAL_POT_WATER: f64 = 2.0;
/// Pot water above this damages the plant.
pub const MAX_HEALTHY_WATER: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GreenhouseError {
    #[error("cannot water a greenhouse without pots")]
    NoPots,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    /// Litres in the pot.
    pub water: f64,
    /// 0 is dead, and stays dead.
    pub health: f64,
    /// Litres consumed per day.
    pub req_water: f64,
}

impl Plant {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let health = rng.gen::<f64>() * 0.8 + 0.1;
        let req_water = 0.3 * rng.gen::<f64>() + 0.1;
        Self {
            water: INITIAL_POT_WATER,
            health,
            req_water,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.health > 0.0
    }

    pub fn update_health(&mut self) {
        if self.health == 0.0 {
            return;
        }
        if self.water <= 0.0 || self.water > MAX_HEALTHY_WATER {
            self.health = f64::max(0.0, self.health - 0.25);
        } else {
            self.health = f64::min(1.0, self.health + 0.1);
        }
    }

    pub fn update_day(&mut self) {
        self.water = f64::max(0.0, self.water - self.req_water);
        self.update_health();
    }
}

/// The model functions open to plugins, exposed once per registry.
#[derive(Debug)]
pub struct ModelHooks {
    air_exchange: Hooked<Greenhouse, (), ()>,
    choose_water_amount: Hooked<Greenhouse, (), f64>,
}

impl ModelHooks {
    /// Exposes the model's extensible functions on `registry`.
    pub fn expose(registry: &HookRegistry) -> Result<Arc<Self>, PluginError> {
        let air_exchange = registry.expose(AIR_EXCHANGE, |g: &mut Greenhouse, ()| {
            g.default_air_exchange()
        })?;
        let choose_water_amount = registry
            .expose(CHOOSE_WATER_AMOUNT, |g: &mut Greenhouse, ()| {
                g.default_water_amount()
            })?;
        Ok(Arc::new(Self {
            air_exchange,
            choose_water_amount,
        }))
    }

    /// Hooks on a fresh registry of their own, with no handlers attached.
    pub fn private() -> Arc<Self> {
        Self::expose(&HookRegistry::new()).expect("a fresh registry has no names")
    }
}

#[derive(Clone)]
pub struct Greenhouse {
    pub pots: Vec<Plant>,
    /// Cumulative litres.
    pub water_use: f64,
    /// °C
    pub temp: f64,
    /// Relative humidity. Not clamped: heavy evaporation can push it past 1.
    pub humidity: f64,
    pub outside_humidity: f64,
    /// m³
    pub size: f64,
    rng: ChaCha8Rng,
    hooks: Arc<ModelHooks>,
}

impl fmt::Debug for Greenhouse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Greenhouse")
            .field("pots", &self.pots.len())
            .field("alive", &self.alive_count())
            .field("water_use", &self.water_use)
            .field("temp", &self.temp)
            .field("humidity", &self.humidity)
            .finish_non_exhaustive()
    }
}

impl Greenhouse {
    /// A greenhouse whose extensible functions run unmodified.
    pub fn new(seed: Option<u64>) -> Self {
        Self::with_hooks(seed, ModelHooks::private())
    }

    /// A greenhouse that routes its extensible functions through `hooks`.
    /// Without a seed the stream is drawn from OS entropy.
    pub fn with_hooks(seed: Option<u64>, hooks: Arc<ModelHooks>) -> Self {
        let mut rng = match seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_entropy(),
        };
        let pots = (0..POT_COUNT).map(|_| Plant::random(&mut rng)).collect();
        Self {
            pots,
            water_use: 0.0,
            temp: INITIAL_TEMP,
            humidity: INITIAL_HUMIDITY,
            outside_humidity: OUTSIDE_HUMIDITY,
            size: GREENHOUSE_SIZE,
            rng,
            hooks,
        }
    }

    pub fn alive_count(&self) -> usize {
        self.pots.iter().filter(|p| p.is_alive()).count()
    }

    pub fn dead_count(&self) -> usize {
        self.pots.len() - self.alive_count()
    }

    /// Fraction of live plants; 0 for an empty greenhouse.
    pub fn alive_fraction(&self) -> f64 {
        if self.pots.is_empty() {
            return 0.0;
        }
        self.alive_count() as f64 / self.pots.len() as f64
    }

    /// Evaporation from the pots into the air.
    pub fn update_humidity(&mut self) {
        let evaporation_factor = self.temp / 100.0 * (1.0 - self.humidity);
        let mut evaporated = 0.0;
        for plant in &mut self.pots {
            let lost = evaporation_factor * plant.water;
            evaporated += lost;
            plant.water = f64::max(0.0, plant.water - lost);
        }
        let saturation = self.humidity * MAX_SATURATION + evaporated / self.size;
        self.humidity = saturation / MAX_SATURATION;
    }

    pub fn update_air_exchange(&mut self) {
        let hooks = Arc::clone(&self.hooks);
        hooks.air_exchange.call_with(self, ());
    }

    /// Fixed 20 % exchange with the outside air.
    pub fn default_air_exchange(&mut self) {
        self.humidity = 0.8 * self.humidity + 0.2 * self.outside_humidity;
    }

    /// Litres of water to spread over the pots today.
    pub fn choose_water_amount(&mut self) -> f64 {
        let hooks = Arc::clone(&self.hooks);
        hooks.choose_water_amount.call_with(self, ())
    }

    pub fn default_water_amount(&self) -> f64 {
        DEFAULT_WATER_AMOUNT
    }

    pub fn water_plants(&mut self) -> Result<(), GreenhouseError> {
        if self.pots.is_empty() {
            return Err(GreenhouseError::NoPots);
        }
        let water_amount = self.choose_water_amount();
        let per_pot = water_amount / self.pots.len() as f64;
        for plant in &mut self.pots {
            plant.water += per_pot;
        }
        self.water_use += water_amount;
        Ok(())
    }

    /// Draws the temperature increment uniformly from {-2, ..., 2}.
    pub fn draw_temp_increment(&mut self) -> i32 {
        (self.rng.gen::<f64>() * 5.0) as i32 - 2
    }

    pub fn update_day(&mut self) -> Result<(), GreenhouseError> {
        let increment = self.draw_temp_increment();
        self.update_day_with_increment(increment)
    }

    /// One day with a given temperature increment instead of a random one.
    pub fn update_day_with_increment(&mut self, increment: i32) -> Result<(), GreenhouseError> {
        self.temp = (self.temp + f64::from(increment)).clamp(MIN_TEMP, MAX_TEMP);
        self.update_humidity();
        self.update_air_exchange();
        for plant in &mut self.pots {
            plant.update_day();
        }
        self.water_plants()
    }
}
