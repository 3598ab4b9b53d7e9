//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use greenhouse::env::LogSink;
use greenhouse::model::{Greenhouse, Plant};
use greenhouse::{register_greenhouse_envs, BASELINE_ENV_ID, HOT_VENT_ENV_ID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simenv::{
    EnvError, EnvRegistry, Handler, HandlerOutcome, HandlerPosition, HookRegistry, Hooked,
    Lifecycle, SpaceValue,
};
use simenv_cli::{run_episode, verify_equivalence, Policy, Reference, RunConfig, TraceRecord};

const EQUIVALENCE_SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const EQUIVALENCE_BUDGET: Duration = Duration::from_secs(5);
/// Day on which the pinned greenhouse has no live plant left, frozen from the
/// straight-line oracles before the model was written.
const FROZEN_COLLAPSE_DAY: u64 = 7;
const STOCHASTIC_SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const PHYSICS_TOL: f64 = 1e-9;
const CONFORMANCE_SEEDS: u64 = 10;
const CONFORMANCE_STEPS: usize = 1000;
const LIVENESS_BUDGET: Duration = Duration::from_secs(5);
const DIVERGENCE_SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
const DIVERGENCE_WITHIN_DAYS: u64 = 3;
const TELESCOPE_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn envs() -> EnvRegistry {
    let mut registry = EnvRegistry::new();
    register_greenhouse_envs(&mut registry, LogSink::silent()).expect("registration");
    registry
}

fn perspective_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rows = 0;
    for seed in EQUIVALENCE_SEEDS {
        let config = RunConfig::new(BASELINE_ENV_ID, Policy::Constant(0.2), seed);
        let result = verify_equivalence(&config, Reference::Fallback).map_err(|e| e.to_string())?;
        if let Some(d) = &result.divergence {
            return Err(format!(
                "seed {seed}: diverged at row {} in {:?}",
                d.row, d.fields
            ));
        }
        rows += result.env.records.len();
    }
    let elapsed = started.elapsed();
    ensure(elapsed < EQUIVALENCE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "seeds 1..=20 identical, {rows} rows compared in {elapsed:?}"
    ))
}

fn plugin_pipeline() -> Outcome {
    let registry = HookRegistry::new();
    let f: Hooked<(), i64, i64> = registry
        .expose("example.f", |_: &mut (), x: i64| x + 1)
        .map_err(|e| e.to_string())?;
    ensure(f.call(2) == 3, || format!("f(2) = {}", f.call(2)))?;

    let log = Arc::new(Mutex::new(Vec::new()));
    let sink = log.clone();
    registry
        .attach(
            Handler::<(), i64, i64>::before(move |_, x| {
                sink.lock().unwrap().push(format!("f called with {x}"));
                HandlerOutcome::Unchanged
            }),
            &f,
        )
        .map_err(|e| e.to_string())?;
    let logged = f.call(2);
    ensure(logged == 3, || format!("with logger f(2) = {logged}"))?;
    ensure(*log.lock().unwrap() == ["f called with 2"], || {
        format!("log {:?}", log.lock().unwrap())
    })?;

    registry
        .remove(&f, HandlerPosition::Before)
        .map_err(|e| e.to_string())?;
    registry
        .attach(
            Handler::<(), i64, i64>::before(|_, x| HandlerOutcome::ChangedArgs(x * 2)),
            &f,
        )
        .map_err(|e| e.to_string())?;
    let doubled = f.call(2);
    ensure(doubled == 5, || format!("with doubling f(2) = {doubled}"))?;
    ensure(log.lock().unwrap().len() == 1, || {
        "logger still attached".into()
    })?;
    Ok("f(2) = 3, logged then 3, doubled to 5".into())
}

/// Pinned greenhouse re-simulated from scratch: temperature 20, 2 L, health
/// 0.5, requirement 0.25, 200 L a day. Returns the first day whose start sees
/// no live plant.
fn collapse_day_oracle() -> u64 {
    let n = 200;
    let temp: f64 = 20.0;
    let mut humidity: f64 = 0.6;
    let mut water = vec![2.0f64; n];
    let mut health = vec![0.5f64; n];
    let req = 0.25;
    let mut day = 0;
    while health.iter().any(|&h| h > 0.0) {
        let f = temp / 100.0 * (1.0 - humidity);
        let mut evaporated = 0.0;
        for w in water.iter_mut() {
            evaporated += f * *w;
            *w = (*w - f * *w).max(0.0);
        }
        humidity = (humidity * 0.20 + evaporated / 2400.0) / 0.20;
        humidity = 0.8 * humidity + 0.2 * 0.6;
        for (w, h) in water.iter_mut().zip(health.iter_mut()) {
            *w = (*w - req).max(0.0);
            if *h != 0.0 {
                *h = if *w <= 0.0 || *w > 3.0 {
                    (*h - 0.25).max(0.0)
                } else {
                    (*h + 0.1).min(1.0)
                };
            }
        }
        for w in water.iter_mut() {
            *w += 200.0 / n as f64;
        }
        day += 1;
    }
    day
}

fn overwatering_collapse() -> Outcome {
    let oracle = collapse_day_oracle();
    ensure(oracle == FROZEN_COLLAPSE_DAY, || {
        format!("oracle says {oracle}")
    })?;

    let mut g = Greenhouse::new(Some(0));
    for p in &mut g.pots {
        *p = Plant {
            water: 2.0,
            health: 0.5,
            req_water: 0.25,
        };
    }
    let mut day = 0;
    while g.alive_count() > 0 && day < 365 {
        g.update_day_with_increment(0).map_err(|e| e.to_string())?;
        day += 1;
    }
    ensure(day == FROZEN_COLLAPSE_DAY, || {
        format!("model collapses on day {day}")
    })?;

    let mut longest = 0;
    for seed in STOCHASTIC_SEEDS {
        let mut g = Greenhouse::new(Some(seed));
        let mut alive = g.alive_count();
        let mut days = 0;
        while alive > 0 {
            ensure(days < 365, || format!("seed {seed} alive after 365 days"))?;
            g.update_day().map_err(|e| e.to_string())?;
            let now = g.alive_count();
            ensure(now <= alive, || {
                format!("seed {seed}: alive rose on day {days}")
            })?;
            alive = now;
            days += 1;
        }
        longest = longest.max(days);
    }
    Ok(format!(
        "pinned variant dead on day {day} (oracle {oracle}); seeds 1..=20 collapse within {longest} days"
    ))
}

fn unit_physics() -> Outcome {
    let mut g = Greenhouse::new(Some(0));
    g.update_humidity();
    ensure(
        (g.humidity - 0.6666666666666666).abs() < PHYSICS_TOL,
        || format!("humidity {}", g.humidity),
    )?;
    ensure(
        g.pots.iter().all(|p| (p.water - 1.84).abs() < PHYSICS_TOL),
        || "pot water differs from 1.84".into(),
    )?;

    let mut g = Greenhouse::new(Some(0));
    g.humidity = 0.6;
    g.update_air_exchange();
    ensure(g.humidity == 0.6, || {
        format!("fixed point moved to {}", g.humidity)
    })?;

    let health_after = |water: f64| {
        let mut p = Plant {
            water,
            health: 0.5,
            req_water: 0.0,
        };
        p.update_health();
        p.health
    };
    let cases = [(0.0, 0.25), (3.0, 0.6), (3.0 + 1e-9, 0.25)];
    for (water, expected) in cases {
        let got = health_after(water);
        ensure(got == expected, || {
            format!("health at water {water}: {got}")
        })?;
    }
    Ok("humidity 0.6666667, water 1.84, fixed point 0.6, thresholds 0/3/3+e".into())
}

fn in_unit_box(obs: &SpaceValue) -> bool {
    obs.as_vector()
        .is_some_and(|v| v.len() == 4 && v.iter().all(|x| (0.0..=1.0).contains(x)))
}

fn gym_conformance() -> Outcome {
    let registry = envs();
    let mut violations = 0;
    let mut steps_total = 0;
    for id in [BASELINE_ENV_ID, HOT_VENT_ENV_ID] {
        for seed in 0..CONFORMANCE_SEEDS {
            let mut env = registry.make(id).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            env.seed(seed).map_err(|e| e.to_string())?;
            let obs = env.reset().map_err(|e| e.to_string())?;
            violations += usize::from(!in_unit_box(&obs));
            for _ in 0..CONFORMANCE_STEPS {
                let action = env.action_space().sample(&mut rng);
                let r = env.step(action).map_err(|e| e.to_string())?;
                steps_total += 1;
                violations += usize::from(!in_unit_box(&r.observation));
                ensure(
                    r.reward.is_finite() && r.info.get_i64("step").is_some(),
                    || "malformed step result".into(),
                )?;
                if r.done {
                    let obs = env.reset().map_err(|e| e.to_string())?;
                    violations += usize::from(!in_unit_box(&obs));
                }
            }
        }
    }
    ensure(violations == 0, || {
        format!("{violations} out-of-bounds observations")
    })?;

    let mut env = registry.make(BASELINE_ENV_ID).map_err(|e| e.to_string())?;
    let contract = |r: Result<_, EnvError>, lifecycle: Lifecycle| matches!(r, Err(EnvError::Contract { operation: "step", lifecycle: l }) if l == lifecycle);
    ensure(
        contract(env.step(vec![0.2].into()), Lifecycle::Idle),
        || "step before reset accepted".into(),
    )?;
    env.reset().map_err(|e| e.to_string())?;
    for bad in [
        SpaceValue::Vector(vec![1.5]),
        SpaceValue::Vector(vec![-0.1]),
        SpaceValue::Vector(vec![0.2, 0.2]),
        SpaceValue::Vector(vec![f64::NAN]),
        SpaceValue::Index(0),
    ] {
        let r = env.step(bad.clone());
        ensure(matches!(r, Err(EnvError::ActionOutOfSpace { .. })), || {
            format!("action {bad} accepted")
        })?;
        ensure(env.lifecycle() == Lifecycle::AwaitingAction, || {
            "rejected action changed state".into()
        })?;
    }
    while !env.step(vec![0.2].into()).map_err(|e| e.to_string())?.done {}
    ensure(
        contract(env.step(vec![0.2].into()), Lifecycle::Done),
        || "step after done accepted".into(),
    )?;
    Ok(format!(
        "{steps_total} random steps over {CONFORMANCE_SEEDS} seeds x 2 ids, 0 violations; contract errors raised"
    ))
}

fn timed<T>(budget: Duration, what: &str, f: impl FnOnce() -> T) -> Result<(T, Duration), String> {
    let started = Instant::now();
    let value = f();
    let elapsed = started.elapsed();
    ensure(elapsed < budget, || format!("{what} took {elapsed:?}"))?;
    Ok((value, elapsed))
}

fn liveness() -> Outcome {
    let registry = envs();
    let mut slowest = Duration::ZERO;
    for id in [BASELINE_ENV_ID, HOT_VENT_ENV_ID] {
        let factory = registry.factory(id).ok_or("factory missing")?;
        let mut env = registry.make(id).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for episode in 0..5 {
            let (r, t) = timed(LIVENESS_BUDGET, "reset", || env.reset())?;
            r.map_err(|e| e.to_string())?;
            slowest = slowest.max(t);
            for _ in 0..(episode * 2) {
                let action = SpaceValue::Vector(vec![rng.gen()]);
                let (r, t) = timed(LIVENESS_BUDGET, "step", || env.step(action))?;
                slowest = slowest.max(t);
                if r.map_err(|e| e.to_string())?.done {
                    break;
                }
            }
        }
        env.reset().map_err(|e| e.to_string())?;
        env.step(vec![0.5].into()).map_err(|e| e.to_string())?;
        ensure(factory.live_contexts() == 1, || {
            "no live context mid-episode".into()
        })?;
        let (_, t) = timed(LIVENESS_BUDGET, "close", || env.close())?;
        slowest = slowest.max(t);
        ensure(factory.live_contexts() == 0, || {
            format!("{} contexts alive after close", factory.live_contexts())
        })?;
        let stats = env.alternation_stats();
        ensure(stats.violations == 0, || {
            format!("{} alternation violations", stats.violations)
        })?;
    }
    Ok(format!(
        "slowest operation {slowest:?}; contexts back to 0 after close"
    ))
}

/// Humidity at each decision for one seed under 200 L a day, re-simulated
/// from the raw generator stream. `hot_vent` selects the temperature
/// dependent air exchange.
fn humidity_oracle(seed: u64, hot_vent: bool, days: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pots: Vec<[f64; 3]> = (0..200)
        .map(|_| {
            let health = rng.gen::<f64>() * 0.8 + 0.1;
            let req = 0.3 * rng.gen::<f64>() + 0.1;
            [2.0, health, req]
        })
        .collect();
    let mut temp: f64 = 20.0;
    let mut humidity: f64 = 0.6;
    let mut seen = Vec::new();
    for _ in 0..days {
        let increment = (rng.gen::<f64>() * 5.0) as i32 - 2;
        temp = (temp + increment as f64).clamp(15.0, 35.0);
        let f = temp / 100.0 * (1.0 - humidity);
        let mut evaporated = 0.0;
        for pot in &mut pots {
            evaporated += f * pot[0];
            pot[0] = (pot[0] - f * pot[0]).max(0.0);
        }
        humidity = (humidity * 0.20 + evaporated / 2400.0) / 0.20;
        if hot_vent {
            humidity += (temp - 15.0) / 20.0 * (0.6 - humidity);
        } else {
            humidity = 0.8 * humidity + 0.2 * 0.6;
        }
        for pot in &mut pots {
            pot[0] = (pot[0] - pot[2]).max(0.0);
            if pot[1] != 0.0 {
                pot[1] = if pot[0] <= 0.0 || pot[0] > 3.0 {
                    (pot[1] - 0.25).max(0.0)
                } else {
                    (pot[1] + 0.1).min(1.0)
                };
            }
        }
        seen.push(humidity);
        for pot in &mut pots {
            pot[0] += 1.0;
        }
    }
    seen
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("trace{i}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_simenv"))
            .args([
                "run", "--policy", "random", "--seed", "7", "--quiet", "--output",
            ])
            .arg(&path)
            .stderr(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("run exited with {status}"))?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], || "trace files differ".into())?;

    let mut days = Vec::new();
    for seed in DIVERGENCE_SEEDS {
        let trace = |id: &str| -> Result<Vec<TraceRecord>, String> {
            let config = RunConfig::new(id, Policy::Constant(0.2), seed);
            Ok(run_episode(&config).map_err(|e| e.to_string())?.records)
        };
        let base = trace(BASELINE_ENV_ID)?;
        let hot = trace(HOT_VENT_ENV_ID)?;
        let observed = base
            .iter()
            .zip(&hot)
            .position(|(a, b)| a.humidity != b.humidity)
            .ok_or_else(|| format!("seed {seed}: humidity never diverges"))?;

        let horizon = observed + 1;
        let oracle_base = humidity_oracle(seed, false, horizon);
        let oracle_hot = humidity_oracle(seed, true, horizon);
        let expected = oracle_base
            .iter()
            .zip(&oracle_hot)
            .position(|(a, b)| a != b)
            .ok_or_else(|| format!("seed {seed}: oracle sees no divergence"))?;
        ensure(observed == expected, || {
            format!("seed {seed}: diverges on day {observed}, oracle says {expected}")
        })?;
        for (k, (record, oracle)) in base.iter().zip(&oracle_base).enumerate() {
            ensure(record.humidity == *oracle, || {
                format!(
                    "seed {seed} day {k}: humidity {} vs oracle {oracle}",
                    record.humidity
                )
            })?;
        }
        ensure((observed as u64) < DIVERGENCE_WITHIN_DAYS, || {
            format!("seed {seed}: diverges only on day {observed}")
        })?;
        days.push(observed);
    }
    Ok(format!(
        "byte-identical CSV across processes; humidity divergence days {days:?} match the oracle"
    ))
}

fn reward_telescoping() -> Outcome {
    let registry = envs();
    let mut episodes = 0;
    let mut worst: f64 = 0.0;
    for id in [BASELINE_ENV_ID, HOT_VENT_ENV_ID] {
        let mut env = registry.make(id).map_err(|e| e.to_string())?;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            env.seed(seed).map_err(|e| e.to_string())?;
            env.reset().map_err(|e| e.to_string())?;
            let mut cost_sum = 0.0;
            loop {
                let action = env.action_space().sample(&mut rng);
                let r = env.step(action).map_err(|e| e.to_string())?;
                let alive = r.info.get_i64("alive").unwrap_or_default() as f64;
                let dead = r.info.get_i64("dead").unwrap_or_default() as f64;
                cost_sum += alive / (alive + dead) - r.reward;
                if r.done {
                    let water_use = r.info.get_f64("water_use").unwrap_or(f64::NAN);
                    let gap = (cost_sum - water_use / 1000.0).abs();
                    worst = worst.max(gap);
                    ensure(gap <= TELESCOPE_TOL, || {
                        format!("{id} seed {seed}: sum {cost_sum} vs {}", water_use / 1000.0)
                    })?;
                    break;
                }
            }
            episodes += 1;
        }
    }

    let mut env = registry.make(BASELINE_ENV_ID).map_err(|e| e.to_string())?;
    env.seed(7).map_err(|e| e.to_string())?;
    env.reset().map_err(|e| e.to_string())?;
    let mut checked = 0;
    loop {
        let r = env.step(vec![0.2].into()).map_err(|e| e.to_string())?;
        let alive = r.info.get_i64("alive").unwrap_or_default();
        if alive == 200 {
            let expected = 1.0 - 0.2;
            ensure((r.reward - expected).abs() <= TELESCOPE_TOL, || {
                format!("reward {} while all alive", r.reward)
            })?;
            checked += 1;
        }
        if r.done {
            break;
        }
    }
    ensure(checked > 0, || "no all-alive steps".into())?;
    Ok(format!(
        "{episodes} episodes telescope (max gap {worst:.1e}); constant:0.2 reward = 0.8 on {checked} all-alive steps"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("perspective equivalence", perspective_equivalence),
        ("plugin pipeline", plugin_pipeline),
        ("overwatering collapse", overwatering_collapse),
        ("unit physics", unit_physics),
        ("gym contract conformance", gym_conformance),
        ("liveness", liveness),
        ("determinism", determinism),
        ("reward telescoping", reward_telescoping),
    ];

    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
