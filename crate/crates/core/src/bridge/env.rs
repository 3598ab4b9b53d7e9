use std::cell::Cell;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::decision::DecisionCore;
use super::{EnvError, EpisodeEvent, Info, Simulation};
use crate::plugins::QualifiedName;
use crate::spaces::{Space, SpaceValue};

/// Default bound on how long reset, step and close wait for the simulation.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifecycle {
    Idle,
    AwaitingAction,
    Done,
    Closed,
}

/// Sent from the caller to the simulation thread.
#[derive(Debug)]
pub(crate) enum Command {
    Act(SpaceValue),
    Cancel,
}

/// Panic payload used to unwind the simulation thread out of `run()`.
#[derive(Debug)]
pub(crate) enum Unwind {
    Cancelled,
    Fault(String),
}

pub(crate) fn unwind(reason: Unwind) -> ! {
    // resume_unwind skips the panic hook, so cancellation prints nothing.
    panic::resume_unwind(Box::new(reason))
}

thread_local! {
    static EPISODE_TOKEN: Cell<Option<u64>> = const { Cell::new(None) };
}

/// Token of the episode whose simulation runs on this thread, if any.
pub(crate) fn current_episode_token() -> Option<u64> {
    EPISODE_TOKEN.with(Cell::get)
}

fn next_episode_token() -> u64 {
    static NEXT: AtomicU64 = AtomicU64::new(1);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy)]
enum Side {
    Caller,
    Simulation,
}

/// Running flags for the two contexts, toggled at every transfer.
///
/// A side clears its flag before handing over and sets it after being
/// resumed. Seeing the other flag set at that point means both contexts
/// were runnable at once.
#[derive(Debug)]
pub(crate) struct Monitor {
    caller_running: AtomicBool,
    sim_running: AtomicBool,
    transfers: AtomicU64,
    violations: AtomicU64,
}

impl Monitor {
    fn new() -> Self {
        Self {
            caller_running: AtomicBool::new(true),
            sim_running: AtomicBool::new(false),
            transfers: AtomicU64::new(0),
            violations: AtomicU64::new(0),
        }
    }

    fn flags(&self, side: Side) -> (&AtomicBool, &AtomicBool) {
        match side {
            Side::Caller => (&self.caller_running, &self.sim_running),
            Side::Simulation => (&self.sim_running, &self.caller_running),
        }
    }

    fn resume(&self, side: Side) {
        let (mine, other) = self.flags(side);
        mine.store(true, Ordering::SeqCst);
        self.transfers.fetch_add(1, Ordering::SeqCst);
        if other.load(Ordering::SeqCst) {
            self.violations.fetch_add(1, Ordering::SeqCst);
        }
    }

    fn suspend(&self, side: Side) {
        self.flags(side).0.store(false, Ordering::SeqCst);
    }
}

/// Counts of control transfers and of transfers where both contexts were
/// found running.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlternationStats {
    pub transfers: u64,
    pub violations: u64,
}

/// Simulation-side end of the rendezvous.
pub(crate) struct SimLink {
    events: SyncSender<EpisodeEvent>,
    commands: Receiver<Command>,
    monitor: Arc<Monitor>,
}

impl SimLink {
    /// Delivers `event` and blocks until the caller answers. A caller that has
    /// gone away counts as a cancellation.
    pub(crate) fn hand_over(&self, event: EpisodeEvent) -> Command {
        self.monitor.suspend(Side::Simulation);
        if self.events.send(event).is_err() {
            return Command::Cancel;
        }
        let command = self.commands.recv().unwrap_or(Command::Cancel);
        self.monitor.resume(Side::Simulation);
        command
    }
}

/// Caller-side end of one running episode.
struct Episode {
    events: Receiver<EpisodeEvent>,
    commands: SyncSender<Command>,
    thread: Option<JoinHandle<()>>,
}

impl Episode {
    fn await_event(
        &self,
        operation: &'static str,
        timeout: Duration,
    ) -> Result<EpisodeEvent, EnvError> {
        match self.events.recv_timeout(timeout) {
            Ok(event) => Ok(event),
            Err(RecvTimeoutError::Timeout) => Err(EnvError::Liveness { operation, timeout }),
            Err(RecvTimeoutError::Disconnected) => Err(EnvError::SimulationFault(
                "simulation context exited without reporting".into(),
            )),
        }
    }

    /// Waits for the simulation thread to exit and joins it. On timeout the
    /// thread is left detached.
    fn finish(mut self, operation: &'static str, timeout: Duration) -> Result<(), EnvError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.events.recv_timeout(left) {
                Ok(_) => continue,
                Err(RecvTimeoutError::Disconnected) => break,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(EnvError::Liveness { operation, timeout })
                }
            }
        }
        if let Some(thread) = self.thread.take() {
            // The thread catches every unwind of the simulation itself.
            let _ = thread.join();
        }
        Ok(())
    }

    fn cancel(self, operation: &'static str, timeout: Duration) -> Result<(), EnvError> {
        let _ = self.commands.try_send(Command::Cancel);
        self.finish(operation, timeout)
    }
}

trait Launch: Send + Sync {
    fn decision_point(&self) -> &QualifiedName;
    fn observation_space(&self) -> &Space;
    fn action_space(&self) -> &Space;
    fn live_contexts(&self) -> usize;
    fn launch(&self, seed: Option<u64>, monitor: Arc<Monitor>) -> Result<Episode, EnvError>;
}

struct Launcher<Sim: Simulation> {
    slot: Arc<Mutex<Option<Sim>>>,
    point: Arc<dyn DecisionCore<Sim::State>>,
    live: Arc<AtomicUsize>,
}

struct LiveGuard(Arc<AtomicUsize>);

impl Drop for LiveGuard {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl<Sim: Simulation> Launch for Launcher<Sim> {
    fn decision_point(&self) -> &QualifiedName {
        self.point.name()
    }

    fn observation_space(&self) -> &Space {
        self.point.observation_space()
    }

    fn action_space(&self) -> &Space {
        self.point.action_space()
    }

    fn live_contexts(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    fn launch(&self, seed: Option<u64>, monitor: Arc<Monitor>) -> Result<Episode, EnvError> {
        let sim = self
            .slot
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .take()
            .ok_or(EnvError::SimulationBusy)?;
        let token = next_episode_token();
        // Capacity 1 lets the final event be sent even if nobody reads it.
        let (event_tx, event_rx) = mpsc::sync_channel(1);
        let (command_tx, command_rx) = mpsc::sync_channel(1);
        let link = SimLink {
            events: event_tx.clone(),
            commands: command_rx,
            monitor: Arc::clone(&monitor),
        };
        if let Err(e) = self.point.bind(token, link) {
            *self.slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(sim);
            return Err(e);
        }

        self.live.fetch_add(1, Ordering::SeqCst);
        let guard = LiveGuard(Arc::clone(&self.live));
        let point = Arc::clone(&self.point);
        let slot = Arc::clone(&self.slot);
        let spawned = thread::Builder::new()
            .name(format!("episode:{}", self.point.name()))
            .spawn(move || {
                let _guard = guard;
                run_episode(sim, seed, point, slot, token, event_tx, monitor);
            });
        match spawned {
            Ok(thread) => Ok(Episode {
                events: event_rx,
                commands: command_tx,
                thread: Some(thread),
            }),
            Err(e) => {
                self.point.unbind(token);
                Err(EnvError::SimulationFault(format!(
                    "could not start simulation context: {e}"
                )))
            }
        }
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "simulation panicked".to_owned()
    }
}

/// Body of the simulation thread for one episode.
fn run_episode<Sim: Simulation>(
    mut sim: Sim,
    seed: Option<u64>,
    point: Arc<dyn DecisionCore<Sim::State>>,
    slot: Arc<Mutex<Option<Sim>>>,
    token: u64,
    events: SyncSender<EpisodeEvent>,
    monitor: Arc<Monitor>,
) {
    EPISODE_TOKEN.with(|t| t.set(Some(token)));
    monitor.resume(Side::Simulation);

    let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
        if let Some(seed) = seed {
            sim.seed(seed);
        }
        sim.reset();
        sim.run()
    }));
    let fault = |description: String| Some(EpisodeEvent::SimulationFault { description });
    let event = match outcome {
        Ok(Ok(())) => match sim.state() {
            Some(state) => Some(point.terminal_event(token, state)),
            None => fault("simulation has no state after run".into()),
        },
        Ok(Err(e)) => fault(e.to_string()),
        Err(payload) => match payload.downcast::<Unwind>() {
            Ok(reason) => match *reason {
                Unwind::Cancelled => {
                    sim.stop();
                    None
                }
                Unwind::Fault(description) => fault(description),
            },
            Err(payload) => fault(panic_message(payload.as_ref())),
        },
    };

    point.unbind(token);
    EPISODE_TOKEN.with(|t| t.set(None));
    *slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(sim);
    monitor.suspend(Side::Simulation);
    if let Some(event) = event {
        let _ = events.send(event);
    }
}

/// Creates [`EnvHandle`]s bound to one decision point and one simulation instance.
#[derive(Clone)]
pub struct EnvFactory {
    launcher: Arc<dyn Launch>,
}

impl fmt::Debug for EnvFactory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvFactory")
            .field("decision_point", self.launcher.decision_point())
            .finish()
    }
}

impl EnvFactory {
    pub(crate) fn new<Sim: Simulation>(
        simulation: Sim,
        point: Arc<dyn DecisionCore<Sim::State>>,
    ) -> Self {
        Self {
            launcher: Arc::new(Launcher {
                slot: Arc::new(Mutex::new(Some(simulation))),
                point,
                live: Arc::new(AtomicUsize::new(0)),
            }),
        }
    }

    /// A new handle whose id is the decision point name.
    pub fn create(&self) -> EnvHandle {
        self.create_with_id(self.launcher.decision_point().as_str())
    }

    pub fn create_with_id(&self, env_id: &str) -> EnvHandle {
        EnvHandle {
            env_id: env_id.to_owned(),
            launcher: Arc::clone(&self.launcher),
            lifecycle: Lifecycle::Idle,
            episode: None,
            steps: 0,
            seed: None,
            timeout: DEFAULT_TIMEOUT,
            monitor: Arc::new(Monitor::new()),
        }
    }

    /// Simulation threads currently alive for this factory's simulation.
    pub fn live_contexts(&self) -> usize {
        self.launcher.live_contexts()
    }
}

/// Result of [`EnvHandle::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: SpaceValue,
    pub reward: f64,
    pub done: bool,
    /// Always carries `step`, the number of steps taken in this episode.
    pub info: Info,
}

/// A live environment.
///
/// Owned by one caller at a time. Dropping the handle closes it.
pub struct EnvHandle {
    env_id: String,
    launcher: Arc<dyn Launch>,
    lifecycle: Lifecycle,
    episode: Option<Episode>,
    steps: u64,
    seed: Option<u64>,
    timeout: Duration,
    monitor: Arc<Monitor>,
}

impl fmt::Debug for EnvHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvHandle")
            .field("env_id", &self.env_id)
            .field("lifecycle", &self.lifecycle)
            .field("steps", &self.steps)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl EnvHandle {
    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    pub fn lifecycle(&self) -> Lifecycle {
        self.lifecycle
    }

    pub fn observation_space(&self) -> &Space {
        self.launcher.observation_space()
    }

    pub fn action_space(&self) -> &Space {
        self.launcher.action_space()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    /// Simulation threads alive for the simulation this handle drives.
    pub fn live_contexts(&self) -> usize {
        self.launcher.live_contexts()
    }

    pub fn alternation_stats(&self) -> AlternationStats {
        AlternationStats {
            transfers: self.monitor.transfers.load(Ordering::SeqCst),
            violations: self.monitor.violations.load(Ordering::SeqCst),
        }
    }

    /// Seed forwarded to the simulation at the next reset.
    pub fn seed(&mut self, seed: u64) -> Result<(), EnvError> {
        match self.lifecycle {
            Lifecycle::Idle | Lifecycle::Done => {
                self.seed = Some(seed);
                Ok(())
            }
            lifecycle => Err(EnvError::Contract {
                operation: "seed",
                lifecycle,
            }),
        }
    }

    /// Starts a new episode and returns the observation at its first decision.
    /// A running episode is cancelled first.
    pub fn reset(&mut self) -> Result<SpaceValue, EnvError> {
        self.reset_with_info().map(|(observation, _)| observation)
    }

    /// Like [`reset`](Self::reset), also returning the diagnostics of the
    /// first decision.
    pub fn reset_with_info(&mut self) -> Result<(SpaceValue, Info), EnvError> {
        if self.lifecycle == Lifecycle::Closed {
            return Err(EnvError::Contract {
                operation: "reset",
                lifecycle: Lifecycle::Closed,
            });
        }
        self.end_episode("reset")?;
        self.lifecycle = Lifecycle::Idle;
        self.steps = 0;

        self.monitor.suspend(Side::Caller);
        let episode = match self.launcher.launch(self.seed, Arc::clone(&self.monitor)) {
            Ok(episode) => episode,
            Err(e) => {
                self.monitor.resume(Side::Caller);
                return Err(e);
            }
        };
        let event = episode.await_event("reset", self.timeout);
        self.monitor.resume(Side::Caller);

        match event? {
            EpisodeEvent::DecisionReached {
                observation,
                mut info,
                ..
            } => {
                self.episode = Some(episode);
                self.lifecycle = Lifecycle::AwaitingAction;
                info.insert("step", 0u64);
                Ok((observation, info))
            }
            EpisodeEvent::EpisodeEnded { .. } => {
                episode.finish("reset", self.timeout)?;
                Err(EnvError::EndedBeforeFirstDecision)
            }
            EpisodeEvent::SimulationFault { description } => {
                episode.finish("reset", self.timeout)?;
                Err(EnvError::SimulationFault(description))
            }
        }
    }

    /// Delivers `action` to the pending decision and runs the simulation to
    /// its next decision or to the end of the episode.
    pub fn step(&mut self, action: SpaceValue) -> Result<StepResult, EnvError> {
        if self.lifecycle != Lifecycle::AwaitingAction {
            return Err(EnvError::Contract {
                operation: "step",
                lifecycle: self.lifecycle,
            });
        }
        if !self.action_space().contains(&action) {
            return Err(EnvError::ActionOutOfSpace {
                action,
                space: self.action_space().clone(),
            });
        }
        let Some(episode) = self.episode.take() else {
            unreachable!("an episode is running while awaiting an action");
        };

        self.monitor.suspend(Side::Caller);
        let sent = episode.commands.send(Command::Act(action));
        let event = if sent.is_ok() {
            episode.await_event("step", self.timeout)
        } else {
            Err(EnvError::SimulationFault(
                "simulation context exited while awaiting an action".into(),
            ))
        };
        self.monitor.resume(Side::Caller);

        let event = match event {
            Ok(event) => event,
            Err(e) => {
                // A timed-out or vanished episode cannot be resumed; dropping
                // it cancels the simulation at its next handover.
                self.lifecycle = Lifecycle::Done;
                return Err(e);
            }
        };
        self.steps += 1;
        match event {
            EpisodeEvent::DecisionReached {
                observation,
                reward,
                mut info,
            } => {
                self.episode = Some(episode);
                info.insert("step", self.steps);
                Ok(StepResult {
                    observation,
                    reward,
                    done: false,
                    info,
                })
            }
            EpisodeEvent::EpisodeEnded {
                observation,
                reward,
                mut info,
            } => {
                self.lifecycle = Lifecycle::Done;
                episode.finish("step", self.timeout)?;
                info.insert("step", self.steps);
                Ok(StepResult {
                    observation,
                    reward,
                    done: true,
                    info,
                })
            }
            EpisodeEvent::SimulationFault { description } => {
                self.lifecycle = Lifecycle::Done;
                episode.finish("step", self.timeout)?;
                Err(EnvError::SimulationFault(description))
            }
        }
    }

    /// Stops any running episode and releases the simulation. Idempotent.
    pub fn close(&mut self) {
        if self.lifecycle == Lifecycle::Closed {
            return;
        }
        if let Err(e) = self.end_episode("close") {
            eprintln!("warning: closing {}: {e}", self.env_id);
        }
        self.lifecycle = Lifecycle::Closed;
    }

    fn end_episode(&mut self, operation: &'static str) -> Result<(), EnvError> {
        let Some(episode) = self.episode.take() else {
            return Ok(());
        };
        self.monitor.suspend(Side::Caller);
        let ended = if self.lifecycle == Lifecycle::AwaitingAction {
            self.lifecycle = Lifecycle::Done;
            episode.cancel(operation, self.timeout)
        } else {
            episode.finish(operation, self.timeout)
        };
        self.monitor.resume(Side::Caller);
        ended
    }
}

impl Drop for EnvHandle {
    fn drop(&mut self) {
        self.close();
    }
}
