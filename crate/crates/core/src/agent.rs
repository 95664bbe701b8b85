//! The episode loop: observe, decide, locate and execute, observe again,
//! reflect; stop on a success verdict or when the step budget runs out.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::device::{Device, Driver};
use crate::gateway::{self, ChatModel, GatewayError, Locator, PromptBundle};
use crate::geometry::bbox_center;
use crate::sim::state::{render_screen, WorldState};
use crate::sim::world::World;
use crate::sim::SimCatalog;
use crate::trace::{
    read_trace, summarize_steps, summarize_with_pending, write_trace_dir, EpisodeTrace, ObsRef, ObservationStore, Outcome,
    Phase, Step, TaskSpec, TraceFormatError,
};

pub const DEFAULT_MAX_STEPS: usize = 20;

/// Fixed cost charged per phase by the virtual clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseCosts {
    /// Charged once per screen capture (twice per step).
    pub observe_ms: u64,
    pub decide_ms: u64,
    pub locate_ms: u64,
    pub execute_ms: u64,
    pub reflect_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClockConfig {
    /// Real elapsed time.
    #[default]
    Wall,
    /// Simulated time advanced only by fixed phase costs; runs are reproducible.
    Virtual(PhaseCosts),
}

/// Milliseconds since the start of an episode.
#[derive(Debug)]
pub struct Clock {
    start: Instant,
    costs: Option<PhaseCosts>,
    virtual_now: u64,
}

impl Clock {
    pub fn start(cfg: ClockConfig) -> Self {
        let costs = match cfg {
            ClockConfig::Wall => None,
            ClockConfig::Virtual(c) => Some(c),
        };
        Clock { start: Instant::now(), costs, virtual_now: 0 }
    }

    pub fn now_ms(&self) -> u64 {
        match self.costs {
            Some(_) => self.virtual_now,
            None => self.start.elapsed().as_millis() as u64,
        }
    }

    /// Marks the end of a phase; advances virtual time by its cost.
    pub fn charge(&mut self, phase: Phase) {
        if let Some(c) = self.costs {
            self.virtual_now += match phase {
                Phase::Observe => c.observe_ms,
                Phase::Decide => c.decide_ms,
                Phase::Locate => c.locate_ms,
                Phase::Execute => c.execute_ms,
                Phase::Reflect => c.reflect_ms,
                Phase::Timeout => 0,
            };
        }
    }
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Checked at every phase boundary; a step over budget is discarded and
    /// the episode ends with a timeout error.
    #[serde(default)]
    pub per_step_timeout_ms: Option<u64>,
    #[serde(default)]
    pub record_dir: Option<PathBuf>,
    #[serde(default)]
    pub clock: ClockConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { max_steps: DEFAULT_MAX_STEPS, per_step_timeout_ms: None, record_dir: None, clock: ClockConfig::Wall }
    }
}

impl LoopConfig {
    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_record_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.record_dir = Some(dir.into());
        self
    }

    pub fn with_clock(mut self, clock: ClockConfig) -> Self {
        self.clock = clock;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1".into());
        }
        if self.per_step_timeout_ms == Some(0) {
            return Err("per_step_timeout_ms must be positive".into());
        }
        Ok(())
    }
}

/// Per-episode values recorded in the trace header.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EpisodeMeta {
    pub config_fingerprint: String,
    pub seed: u64,
    pub run_index: usize,
    /// Packages to clear before the first observation; `None` skips the reset.
    pub reset_cache: Option<Vec<String>>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error("cannot record trace in {path}: {source}")]
    Record { path: String, source: std::io::Error },
}

#[derive(Debug)]
pub struct EpisodeRun {
    pub trace: EpisodeTrace,
    pub observations: ObservationStore,
    /// Directory holding `trace.jsonl` when recording was on.
    pub dir: Option<PathBuf>,
}

/// File-system safe form of a task id.
pub fn sanitize_id(id: &str) -> String {
    let s: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        format!("_{s}")
    } else {
        s
    }
}

/// `<record_dir>/<task_id>/<run_index>/`
pub fn episode_dir(record_dir: &Path, task_id: &str, run_index: usize) -> PathBuf {
    record_dir.join(sanitize_id(task_id)).join(run_index.to_string())
}

struct Timer {
    clock: Clock,
    step_start: u64,
    mark: u64,
    timeout: Option<u64>,
}

impl Timer {
    /// Ends a phase: returns its duration, or `Err` when the step is over budget.
    fn lap(&mut self) -> Result<u64, ()> {
        let now = self.clock.now_ms();
        let d = now - self.mark;
        self.mark = now;
        match self.timeout {
            Some(t) if now - self.step_start > t => Err(()),
            _ => Ok(d),
        }
    }

    fn begin_step(&mut self) {
        self.step_start = self.clock.now_ms();
        self.mark = self.step_start;
    }
}

enum StepEnd {
    Done(Box<Step>),
    Abort(Phase, String),
}

fn timeout_msg(limit: Option<u64>) -> (Phase, String) {
    (Phase::Timeout, format!("step exceeded {} ms", limit.unwrap_or_default()))
}

#[allow(clippy::too_many_arguments)]
fn run_step(
    index: usize,
    task: &TaskSpec,
    device: &mut dyn Device,
    mllm: &dyn ChatModel,
    locator: &dyn Locator,
    prompts: &PromptBundle,
    steps: &[Step],
    store: &mut ObservationStore,
    timer: &mut Timer,
) -> StepEnd {
    macro_rules! lap {
        () => {
            match timer.lap() {
                Ok(ms) => ms,
                Err(()) => {
                    let (p, m) = timeout_msg(timer.timeout);
                    return StepEnd::Abort(p, m);
                }
            }
        };
    }
    let capture = |device: &mut dyn Device, timer: &mut Timer, store: &mut ObservationStore| {
        let mut obs = device.capture_screenshot().map_err(|e| e.to_string())?;
        timer.clock.charge(Phase::Observe);
        obs.captured_at_ms = timer.clock.now_ms();
        let r = store.insert(&obs);
        Ok::<_, String>((obs, r))
    };

    timer.begin_step();
    let (pre, pre_ref) = match capture(device, timer, store) {
        Ok(v) => v,
        Err(m) => return StepEnd::Abort(Phase::Observe, m),
    };
    let history = summarize_steps(steps);
    let decision = gateway::decide(mllm, prompts, task, &history, &pre);
    timer.clock.charge(Phase::Decide);
    let decision = match decision {
        Ok(d) => d,
        Err(e) => return StepEnd::Abort(Phase::Decide, e.to_string()),
    };
    let decide_ms = lap!();

    let mut locator_box = None;
    let mut tap_point = None;
    let mut resolved_app = None;
    let mut exec_error: Option<String> = None;

    let mut locate_ms = 0;
    if let Action::Click { ui_command } = &decision.action {
        let located = gateway::locate(locator, &pre, ui_command);
        timer.clock.charge(Phase::Locate);
        match located {
            Ok(b) => match bbox_center(&b, pre.screen_w, pre.screen_h) {
                Ok(p) => {
                    locator_box = Some(b);
                    tap_point = Some(p);
                }
                Err(e) => exec_error = Some(format!("locate: {e}")),
            },
            Err(e) if e.is_step_local() => exec_error = Some(format!("locate: {e}")),
            Err(e) => return StepEnd::Abort(Phase::Locate, e.to_string()),
        }
        locate_ms = lap!();
    }

    let executed = match &decision.action {
        Action::Click { .. } => match tap_point {
            Some(p) => device.tap(p),
            None => Ok(()),
        },
        Action::Type { text } => device.type_text(text.as_str()),
        Action::Swipe { direction } => device.swipe(*direction),
        Action::OpenApp { app_id } => match device.list_apps() {
            Err(e) => Err(e),
            Ok(apps) => match gateway::select_app(mllm, prompts, task, &apps, app_id.as_str()) {
                Ok(id) => {
                    resolved_app = Some(id.clone());
                    device.launch_app(&id)
                }
                Err(e @ (GatewayError::AppSelection { .. } | GatewayError::EmptyAppList)) => {
                    exec_error = Some(format!("select_app: {e}"));
                    Ok(())
                }
                Err(e) => return StepEnd::Abort(Phase::Execute, e.to_string()),
            },
        },
    };
    match executed {
        Ok(()) => {}
        Err(e) if e.is_step_local() => exec_error = Some(format!("execute: {e}")),
        Err(e) => return StepEnd::Abort(Phase::Execute, e.to_string()),
    }
    timer.clock.charge(Phase::Execute);
    let (post, post_ref) = match capture(device, timer, store) {
        Ok(v) => v,
        Err(m) => return StepEnd::Abort(Phase::Observe, m),
    };
    let execute_ms = lap!();

    let history = summarize_with_pending(steps, &decision.action);
    let reflection = gateway::reflect(mllm, prompts, task, &history, &post);
    timer.clock.charge(Phase::Reflect);
    let reflection = match reflection {
        Ok(r) => r,
        Err(e) => return StepEnd::Abort(Phase::Reflect, e.to_string()),
    };
    let reflect_ms = lap!();

    StepEnd::Done(Box::new(Step {
        index,
        pre_obs: pre_ref,
        decision_raw: decision.raw,
        decide_attempts: decision.attempts,
        action: decision.action,
        locator_box,
        tap_point,
        resolved_app,
        exec_error,
        post_obs: post_ref,
        verdict: reflection.verdict,
        reflect_attempts: reflection.attempts,
        decide_ms,
        locate_ms,
        execute_ms,
        reflect_ms,
    }))
}

/// Runs one episode. Client and device failures end the episode with an
/// error outcome; only invalid configuration and recording failures are
/// returned as `Err`.
pub fn run_episode(
    task: &TaskSpec,
    device: &mut dyn Device,
    mllm: &dyn ChatModel,
    locator: &dyn Locator,
    cfg: &LoopConfig,
    prompts: &PromptBundle,
    meta: &EpisodeMeta,
) -> Result<EpisodeRun, AgentError> {
    cfg.validate().map_err(AgentError::Config)?;
    let mut trace = EpisodeTrace::new(
        task.clone(),
        meta.config_fingerprint.clone(),
        meta.seed,
        device.info().clone(),
        meta.reset_cache.is_some(),
        cfg.max_steps,
    );
    let mut store = ObservationStore::new();
    let mut outcome = Outcome::BudgetExhausted;

    let reset = match &meta.reset_cache {
        Some(scope) => device.reset_cache(scope),
        None => Ok(()),
    };
    let mut timer = Timer { clock: Clock::start(cfg.clock), step_start: 0, mark: 0, timeout: cfg.per_step_timeout_ms };
    if let Err(e) = reset {
        outcome = Outcome::Error { phase: Phase::Observe, message: format!("cache reset: {e}") };
    } else {
        for index in 0..cfg.max_steps {
            match run_step(index, task, device, mllm, locator, prompts, &trace.steps, &mut store, &mut timer) {
                StepEnd::Done(step) => {
                    let success = step.verdict.is_success();
                    log::debug!("{} step {index}: {} -> {}", task.id, step.action, step.verdict.status.as_str());
                    trace.push_step(*step).expect("loop produces valid steps within budget");
                    if success {
                        outcome = Outcome::Success;
                        break;
                    }
                }
                StepEnd::Abort(phase, message) => {
                    log::warn!("{} step {index} aborted in {phase}: {message}", task.id);
                    outcome = Outcome::Error { phase, message };
                    break;
                }
            }
        }
    }
    trace.outcome = outcome;
    trace.total_ms = if trace.steps.is_empty() { 0 } else { timer.mark };

    let dir = match &cfg.record_dir {
        Some(root) => {
            let dir = episode_dir(root, &task.id, meta.run_index);
            write_trace_dir(&dir, &trace, &store).map_err(|source| AgentError::Record { path: dir.display().to_string(), source })?;
            Some(dir)
        }
        None => None,
    };
    Ok(EpisodeRun { trace, observations: store, dir })
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Format(#[from] TraceFormatError),
    #[error("only simulator traces can be replayed (trace driver: {0})")]
    NotSim(&'static str),
    #[error("cannot load world for replay: {0}")]
    World(String),
    #[error("replay diverged at step {step} ({which} observation): expected {expected}, got {found}")]
    Divergence { step: usize, which: &'static str, expected: String, found: String },
}

impl ReplayError {
    pub fn divergent_step(&self) -> Option<usize> {
        match self {
            ReplayError::Divergence { step, .. } => Some(*step),
            _ => None,
        }
    }
}

/// World a sim trace was recorded against: its source file if recorded,
/// otherwise a bundled world with the same id.
pub fn world_for_trace(trace: &EpisodeTrace) -> Result<Arc<World>, ReplayError> {
    if trace.device.driver != Driver::Sim {
        return Err(ReplayError::NotSim(trace.device.driver.as_str()));
    }
    if let Some(src) = &trace.device.source {
        return World::load(Path::new(src)).map(Arc::new).map_err(|e| ReplayError::World(e.to_string()));
    }
    SimCatalog::bundled().world(&trace.device.serial_or_world_id).cloned().map_err(|e| ReplayError::World(e.to_string()))
}

/// Re-executes the trace at `path` on a fresh world state and checks every
/// recorded observation digest.
pub fn replay(path: &Path) -> Result<EpisodeTrace, ReplayError> {
    let trace = read_trace(path)?;
    let world = world_for_trace(&trace)?;
    replay_against(&trace, &world)
}

fn check(step: usize, which: &'static str, recorded: &ObsRef, world: &World, state: &WorldState) -> Result<ObsRef, ReplayError> {
    let digest = crate::trace::sha256_hex(&render_screen(world, state));
    if digest != recorded.digest {
        return Err(ReplayError::Divergence { step, which, expected: recorded.digest.clone(), found: digest });
    }
    Ok(ObsRef { digest, ..recorded.clone() })
}

/// Effect of a recorded step on the world: the tap that was delivered, the
/// app that was resolved, and so on. Steps that failed to execute leave the
/// state unchanged.
pub fn apply_recorded(world: &World, state: WorldState, step: &Step) -> WorldState {
    match &step.action {
        Action::Click { .. } => match step.tap_point {
            Some(p) => state.apply_tap(world, p),
            None => state,
        },
        Action::Swipe { direction } => state.apply_swipe(world, *direction),
        Action::Type { text } => state.apply_type(world, text.as_str()).unwrap_or(state),
        Action::OpenApp { .. } => match &step.resolved_app {
            Some(app) => state.apply_launch(world, app).unwrap_or(state),
            None => state,
        },
    }
}

/// Initial state of a recorded episode.
pub fn initial_state(world: &World, trace: &EpisodeTrace) -> WorldState {
    let state = WorldState::initial(world, trace.seed);
    if trace.cache_reset {
        state.with_cache_cleared()
    } else {
        state
    }
}

pub fn replay_against(trace: &EpisodeTrace, world: &World) -> Result<EpisodeTrace, ReplayError> {
    if trace.device.driver != Driver::Sim {
        return Err(ReplayError::NotSim(trace.device.driver.as_str()));
    }
    let mut state = initial_state(world, trace);
    let mut out = trace.clone();
    for (i, step) in trace.steps.iter().enumerate() {
        out.steps[i].pre_obs = check(i, "pre", &step.pre_obs, world, &state)?;
        state = apply_recorded(world, state, step);
        out.steps[i].post_obs = check(i, "post", &step.post_obs, world, &state)?;
    }
    Ok(out)
}
