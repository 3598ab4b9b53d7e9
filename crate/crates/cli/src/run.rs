use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex};

use greenhouse::env::{action_to_water, EpisodeRewardState, GreenhouseWiring, LogSink, Variant};
use greenhouse::model::CHOOSE_WATER_AMOUNT;
use greenhouse::{register_greenhouse_envs, Greenhouse};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simenv::{EnvRegistry, Handler, Info, Simulation};

use crate::{CliError, Policy, TraceRecord};

pub const DEFAULT_MAX_DAYS: u64 = 365;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env_id: String,
    pub policy: Policy,
    pub seed: u64,
    /// Maximum number of trace rows, the reset row included.
    pub max_days: u64,
    pub quiet: bool,
}

impl RunConfig {
    pub fn new(env_id: &str, policy: Policy, seed: u64) -> Self {
        Self {
            env_id: env_id.to_owned(),
            policy,
            seed,
            max_days: DEFAULT_MAX_DAYS,
            quiet: true,
        }
    }

    fn log_sink(&self) -> LogSink {
        if self.quiet {
            LogSink::silent()
        } else {
            LogSink::new(|line| eprintln!("{line}"))
        }
    }

    fn validate(&self) -> Result<Variant, CliError> {
        if self.max_days == 0 {
            return Err(CliError::InvalidMaxDays);
        }
        if let Policy::Constant(x) = self.policy {
            if !(0.0..=1.0).contains(&x) {
                return Err(CliError::InvalidPolicy(self.policy.to_string()));
            }
        }
        Variant::from_env_id(&self.env_id).ok_or_else(|| CliError::UnknownEnv(self.env_id.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Every plant died.
    Done,
    /// The row cap was reached first.
    Cap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
}

/// Runs one episode. The fallback policy runs the model with no environment.
pub fn run_episode(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let variant = config.validate()?;
    match config.policy {
        Policy::Fallback => standalone_trace(
            variant,
            config.seed,
            None,
            config.max_days,
            config.log_sink(),
        ),
        _ => run_env_episode(config),
    }
}

fn record_from_info(info: &Info, action: Option<f64>, reward: Option<f64>) -> TraceRecord {
    let int = |key| info.get_i64(key).unwrap_or_default() as u64;
    let float = |key| info.get_f64(key).unwrap_or(f64::NAN);
    TraceRecord {
        day: int("step"),
        temp: float("temp"),
        humidity: float("humidity"),
        alive: int("alive"),
        dead: int("dead"),
        water_use: float("water_use"),
        action,
        reward,
    }
}

fn record_from_state(
    day: u64,
    g: &Greenhouse,
    action: Option<f64>,
    reward: Option<f64>,
) -> TraceRecord {
    TraceRecord {
        day,
        temp: g.temp,
        humidity: g.humidity,
        alive: g.alive_count() as u64,
        dead: g.dead_count() as u64,
        water_use: g.water_use,
        action,
        reward,
    }
}

/// Drives the environment `config.env_id` with `config.policy`. The policy's
/// random stream is seeded with `seed + 1`.
pub fn run_env_episode(config: &RunConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let mut registry = EnvRegistry::new();
    register_greenhouse_envs(&mut registry, config.log_sink())?;
    let mut env = registry.make(&config.env_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    env.seed(config.seed)?;
    let (_, info) = env.reset_with_info()?;
    let mut records = vec![record_from_info(&info, None, None)];
    let termination = loop {
        if records.len() as u64 >= config.max_days {
            break Termination::Cap;
        }
        let Some(action) = config.policy.action(env.action_space(), &mut rng) else {
            return Err(CliError::InvalidPolicy(config.policy.to_string()));
        };
        let litres = action_to_water(&action);
        let step = env.step(action)?;
        records.push(record_from_info(
            &step.info,
            Some(litres),
            Some(step.reward),
        ));
        if step.done {
            break Termination::Done;
        }
    };
    env.close();
    Ok(RunOutcome {
        records,
        termination,
    })
}

#[derive(Default)]
struct Recorder {
    records: Vec<TraceRecord>,
    reward: EpisodeRewardState,
    last_action: Option<f64>,
    capped: bool,
}

/// Runs the model with no environment bound and records the same rows an
/// environment run would. `forced` replaces the decision's litres.
pub fn standalone_trace(
    variant: Variant,
    seed: u64,
    forced: Option<f64>,
    max_days: u64,
    log: LogSink,
) -> Result<RunOutcome, CliError> {
    if max_days == 0 {
        return Err(CliError::InvalidMaxDays);
    }
    let wiring = GreenhouseWiring::new(variant)?;
    let mut sim = wiring.simulation(Some(seed), log);
    let stop = sim.stop_handle();
    let recorder = Arc::new(Mutex::new(Recorder::default()));

    if let Some(litres) = forced {
        wiring
            .hooks()
            .attach(
                Handler::instead(move |_: &mut Greenhouse, ()| litres),
                CHOOSE_WATER_AMOUNT,
            )
            .map_err(simenv::EnvError::from)?;
    }
    let rec = Arc::clone(&recorder);
    wiring
        .hooks()
        .attach(
            Handler::after(move |g: &mut Greenhouse, _: &(), litres: &f64| {
                let mut rec = rec.lock().unwrap_or_else(|e| e.into_inner());
                let day = rec.records.len() as u64;
                let reward = rec.reward.reward(g);
                let (action, reward) = if day == 0 {
                    (None, None)
                } else {
                    (rec.last_action, Some(reward))
                };
                rec.records.push(record_from_state(day, g, action, reward));
                rec.last_action = Some(*litres);
                if rec.records.len() as u64 >= max_days {
                    rec.capped = true;
                    stop.store(true, Ordering::SeqCst);
                }
                simenv::HandlerOutcome::Unchanged
            }),
            CHOOSE_WATER_AMOUNT,
        )
        .map_err(simenv::EnvError::from)?;

    sim.reset();
    sim.run().map_err(|e| CliError::Simulation(e.to_string()))?;

    let mut rec = recorder.lock().unwrap_or_else(|e| e.into_inner());
    let termination = if rec.capped {
        Termination::Cap
    } else {
        let g = sim.state().expect("reset was called");
        let day = rec.records.len() as u64;
        let reward = rec.reward.reward(g);
        let action = rec.last_action;
        rec.records
            .push(record_from_state(day, g, action, Some(reward)));
        Termination::Done
    };
    Ok(RunOutcome {
        records: std::mem::take(&mut rec.records),
        termination,
    })
}

/// What the environment trace is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reference {
    /// The model's own decision, untouched.
    #[default]
    Fallback,
    /// The model with its decision forced to the policy's litres.
    Forced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// Row index of the first difference.
    pub row: usize,
    pub day: u64,
    pub fields: Vec<&'static str>,
    pub env: Option<TraceRecord>,
    pub reference: Option<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equivalence {
    pub env: RunOutcome,
    pub reference: RunOutcome,
    pub divergence: Option<Divergence>,
}

impl Equivalence {
    pub fn is_identical(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Runs the environment under a constant policy and the model on its own,
/// and compares the two traces row by row.
pub fn verify_equivalence(
    config: &RunConfig,
    reference: Reference,
) -> Result<Equivalence, CliError> {
    let variant = config.validate()?;
    let Policy::Constant(x) = config.policy else {
        return Err(CliError::NonDeterministicPolicy(config.policy));
    };
    let env = run_env_episode(config)?;
    let forced = match reference {
        Reference::Fallback => None,
        Reference::Forced => Some(action_to_water(&vec![x].into())),
    };
    let reference = standalone_trace(
        variant,
        config.seed,
        forced,
        config.max_days,
        config.log_sink(),
    )?;

    let rows = env.records.len().max(reference.records.len());
    let divergence = (0..rows).find_map(|row| {
        let a = env.records.get(row);
        let b = reference.records.get(row);
        let fields = match (a, b) {
            (Some(a), Some(b)) => a.differing_fields(b),
            _ => crate::CSV_HEADER.to_vec(),
        };
        (!fields.is_empty()).then(|| Divergence {
            row,
            day: a.or(b).map(|r| r.day).unwrap_or_default(),
            fields,
            env: a.cloned(),
            reference: b.cloned(),
        })
    });
    Ok(Equivalence {
        env,
        reference,
        divergence,
    })
}
