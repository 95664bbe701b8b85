//! Seeded error injectors wrapping the decision, locator and reflection
//! roles. Every injected error is logged with its step, component and the
//! random draw that triggered it; the log is the ground truth for failure
//! attribution.

use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::rng::{derive_seed, SplitMix64};
use super::state::SimScreen;
use crate::action::{parse_decision, render_action, Action, ActionKind, Direction};
use crate::gateway::{parse_verdict, ChatModel, ChatRequest, GatewayError, Locator, Purpose};
use crate::geometry::BoundingBox;
use crate::trace::{Observation, VerdictStatus};
use crate::action::UiCommand;

pub const INJECTIONS_FILE: &str = "injections.jsonl";

/// Text typed by an injected wrong Type action.
pub const JUNK_TEXT: &str = "zzz";

const DEAD_SPACE_GRID: usize = 20;
const DEAD_SPACE_MARGIN: f64 = 0.01;
const DEAD_SPACE_HALF: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorInjectionConfig {
    pub locator_miss_prob: f64,
    pub reflection_false_success_prob: f64,
    pub reflection_false_failure_prob: f64,
    pub decision_wrong_action_prob: f64,
    pub seed: u64,
}

impl ErrorInjectionConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("locator_miss_prob", self.locator_miss_prob),
            ("reflection_false_success_prob", self.reflection_false_success_prob),
            ("reflection_false_failure_prob", self.reflection_false_failure_prob),
            ("decision_wrong_action_prob", self.decision_wrong_action_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.locator_miss_prob > 0.0
            || self.reflection_false_success_prob > 0.0
            || self.reflection_false_failure_prob > 0.0
            || self.decision_wrong_action_prob > 0.0
    }

    pub fn locator_only(prob: f64, seed: u64) -> Self {
        ErrorInjectionConfig { locator_miss_prob: prob, seed, ..Self::default() }
    }

    /// Seed of one component's random stream within one episode.
    pub fn stream_seed(&self, episode_seed: u64, component: InjectionComponent) -> u64 {
        derive_seed(self.seed ^ episode_seed, component.as_str(), 0)
    }
}

/// Declared in tie-break order: within one step a decision error precedes
/// the locate that follows it, which precedes reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionComponent {
    Decision,
    Locator,
    Reflection,
}

impl InjectionComponent {
    pub const ALL: [InjectionComponent; 3] = [InjectionComponent::Decision, InjectionComponent::Locator, InjectionComponent::Reflection];

    pub fn as_str(self) -> &'static str {
        match self {
            InjectionComponent::Decision => "decision",
            InjectionComponent::Locator => "locator",
            InjectionComponent::Reflection => "reflection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionEvent {
    pub step: usize,
    pub component: InjectionComponent,
    /// The uniform draw that fell below the configured probability.
    pub draw: f64,
    pub detail: String,
}

#[derive(Debug, Default)]
struct LogInner {
    steps_started: usize,
    events: Vec<InjectionEvent>,
}

/// Shared between the wrappers of one episode. The decision wrapper starts a
/// new step on every first-attempt decision request.
#[derive(Debug, Clone, Default)]
pub struct InjectionLog {
    inner: Arc<Mutex<LogInner>>,
}

impl InjectionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events(events: Vec<InjectionEvent>) -> Self {
        let steps_started = events.iter().map(|e| e.step + 1).max().unwrap_or(0);
        InjectionLog { inner: Arc::new(Mutex::new(LogInner { steps_started, events })) }
    }

    fn begin_step(&self) {
        self.inner.lock().unwrap().steps_started += 1;
    }

    /// Index of the step in progress.
    pub fn current_step(&self) -> usize {
        self.inner.lock().unwrap().steps_started.saturating_sub(1)
    }

    fn record(&self, component: InjectionComponent, draw: f64, detail: String) {
        let step = self.current_step();
        log::debug!("injected {} error at step {step}: {detail}", component.as_str());
        self.inner.lock().unwrap().events.push(InjectionEvent { step, component, draw, detail });
    }

    pub fn events(&self) -> Vec<InjectionEvent> {
        self.inner.lock().unwrap().events.clone()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.lock().unwrap().events.is_empty()
    }

    /// Earliest event by (step, component).
    pub fn first(&self) -> Option<InjectionEvent> {
        self.events().into_iter().min_by(|a, b| (a.step, a.component).cmp(&(b.step, b.component)))
    }

    pub fn write_jsonl(&self, path: &Path) -> io::Result<()> {
        let mut out = Vec::new();
        for e in self.events() {
            serde_json::to_writer(&mut out, &e).map_err(io::Error::other)?;
            out.push(b'\n');
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)
    }

    pub fn read_jsonl(path: &Path) -> io::Result<InjectionLog> {
        let f = io::BufReader::new(std::fs::File::open(path)?);
        let mut events = Vec::new();
        for line in f.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
        }
        Ok(InjectionLog::from_events(events))
    }
}

/// Wraps the chat model: substitutes wrong decisions and flips verdicts.
pub struct NoisyChatModel<M> {
    inner: M,
    cfg: ErrorInjectionConfig,
    log: InjectionLog,
    decision_rng: Mutex<SplitMix64>,
    reflection_rng: Mutex<SplitMix64>,
    app_candidates: Vec<String>,
}

impl<M: ChatModel> NoisyChatModel<M> {
    pub fn new(inner: M, cfg: ErrorInjectionConfig, episode_seed: u64, log: InjectionLog) -> Self {
        NoisyChatModel {
            inner,
            decision_rng: Mutex::new(SplitMix64::new(cfg.stream_seed(episode_seed, InjectionComponent::Decision))),
            reflection_rng: Mutex::new(SplitMix64::new(cfg.stream_seed(episode_seed, InjectionComponent::Reflection))),
            cfg,
            log,
            app_candidates: Vec::new(),
        }
    }

    /// Apps a substituted OpenApp may name.
    pub fn with_app_candidates(mut self, apps: Vec<String>) -> Self {
        self.app_candidates = apps;
        self
    }

    fn wrong_action(&self, rng: &mut SplitMix64, correct: Option<&Action>, obs: Option<&Observation>) -> Option<Action> {
        let labels: Vec<String> = obs
            .and_then(|o| SimScreen::parse(&o.bytes))
            .map(|s| s.elements.iter().map(|e| e.text.trim().to_string()).filter(|t| !t.is_empty() && !t.contains('\n')).collect())
            .unwrap_or_default();
        let kinds: Vec<ActionKind> = ActionKind::ALL
            .into_iter()
            .filter(|k| Some(*k) != correct.map(Action::kind))
            .filter(|k| match k {
                ActionKind::Click => !labels.is_empty(),
                ActionKind::OpenApp => !self.app_candidates.is_empty(),
                _ => true,
            })
            .collect();
        if kinds.is_empty() {
            return None;
        }
        Some(match kinds[rng.below(kinds.len())] {
            ActionKind::Click => Action::click(format!("tap on element '{}'", labels[rng.below(labels.len())])).ok()?,
            ActionKind::Type => Action::type_text(JUNK_TEXT).ok()?,
            ActionKind::OpenApp => Action::open_app(&self.app_candidates[rng.below(self.app_candidates.len())]).ok()?,
            ActionKind::Swipe => Action::swipe(Direction::ALL[rng.below(Direction::ALL.len())]),
        })
    }
}

fn flip_status(raw: &str, to: VerdictStatus) -> String {
    let rationale = parse_verdict(raw).map(|v| v.rationale).unwrap_or_default();
    let status = match to {
        VerdictStatus::Success => "SUCCESS",
        VerdictStatus::Failure => "FAILURE",
    };
    if rationale.is_empty() {
        format!("STATUS: {status}")
    } else {
        format!("STATUS: {status}\n{rationale}")
    }
}

impl<M: ChatModel> ChatModel for NoisyChatModel<M> {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, GatewayError> {
        match req.purpose {
            Purpose::Decision => {
                if req.attempt == 0 {
                    self.log.begin_step();
                }
                let raw = self.inner.complete(req)?;
                if req.attempt != 0 {
                    return Ok(raw);
                }
                let mut rng = self.decision_rng.lock().unwrap();
                let draw = rng.next_f64();
                if draw >= self.cfg.decision_wrong_action_prob {
                    return Ok(raw);
                }
                let correct = parse_decision(&raw).ok();
                match self.wrong_action(&mut rng, correct.as_ref(), req.image) {
                    Some(wrong) => {
                        let rendered = render_action(&wrong);
                        self.log.record(InjectionComponent::Decision, draw, rendered.replace('\n', " | "));
                        Ok(rendered)
                    }
                    None => Ok(raw),
                }
            }
            Purpose::Reflection => {
                let raw = self.inner.complete(req)?;
                let Some(verdict) = parse_verdict(&raw) else { return Ok(raw) };
                let draw = self.reflection_rng.lock().unwrap().next_f64();
                let (prob, to, detail) = match verdict.status {
                    VerdictStatus::Success => (self.cfg.reflection_false_failure_prob, VerdictStatus::Failure, "false failure"),
                    VerdictStatus::Failure => (self.cfg.reflection_false_success_prob, VerdictStatus::Success, "false success"),
                };
                if draw < prob {
                    self.log.record(InjectionComponent::Reflection, draw, detail.to_string());
                    Ok(flip_status(&raw, to))
                } else {
                    Ok(raw)
                }
            }
            Purpose::AppSelect => self.inner.complete(req),
        }
    }
}

/// Wraps a locator: with probability `locator_miss_prob` the answer is
/// replaced by a small box in dead space.
pub struct NoisyLocator<L> {
    inner: L,
    prob: f64,
    log: InjectionLog,
    rng: Mutex<SplitMix64>,
}

impl<L: Locator> NoisyLocator<L> {
    pub fn new(inner: L, cfg: &ErrorInjectionConfig, episode_seed: u64, log: InjectionLog) -> Self {
        NoisyLocator {
            inner,
            prob: cfg.locator_miss_prob,
            log,
            rng: Mutex::new(SplitMix64::new(cfg.stream_seed(episode_seed, InjectionComponent::Locator))),
        }
    }
}

/// A small box centred on a grid point at least `DEAD_SPACE_MARGIN` away from
/// every visible element, scanning the grid from `start`.
pub fn dead_space_box(screen: &SimScreen, start: usize) -> Option<BoundingBox> {
    let cells = DEAD_SPACE_GRID * DEAD_SPACE_GRID;
    let step = 1.0 / DEAD_SPACE_GRID as f64;
    (0..cells).map(|i| (start + i) % cells).find_map(|cell| {
        let x = (cell % DEAD_SPACE_GRID) as f64 * step + step / 2.0;
        let y = (cell / DEAD_SPACE_GRID) as f64 * step + step / 2.0;
        let clear = screen.elements.iter().all(|e| {
            let [x1, y1, x2, y2] = e.bbox;
            x < x1 - DEAD_SPACE_MARGIN || x > x2 + DEAD_SPACE_MARGIN || y < y1 - DEAD_SPACE_MARGIN || y > y2 + DEAD_SPACE_MARGIN
        });
        if clear {
            BoundingBox::new(x - DEAD_SPACE_HALF, y - DEAD_SPACE_HALF, x + DEAD_SPACE_HALF, y + DEAD_SPACE_HALF).ok()
        } else {
            None
        }
    })
}

impl<L: Locator> Locator for NoisyLocator<L> {
    fn locate(&self, obs: &Observation, command: &UiCommand) -> Result<BoundingBox, GatewayError> {
        let (draw, start) = {
            let mut rng = self.rng.lock().unwrap();
            (rng.next_f64(), rng.below(DEAD_SPACE_GRID * DEAD_SPACE_GRID))
        };
        if draw >= self.prob {
            return self.inner.locate(obs, command);
        }
        let screen = SimScreen::parse(&obs.bytes).ok_or_else(|| GatewayError::MalformedBox("observation is not a simulator screen".into()))?;
        let miss = dead_space_box(&screen, start);
        let detail = match &miss {
            Some(b) => format!("miss at {:?} for {:?}", b.center(), command.as_str()),
            None => format!("no dead space; dropped {:?}", command.as_str()),
        };
        self.log.record(InjectionComponent::Locator, draw, detail);
        miss.ok_or_else(|| GatewayError::ElementNotFound(command.as_str().to_string()))
    }
}
