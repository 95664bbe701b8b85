//! Observations, episode traces, and the JSON Lines trace format.
//!
//! A trace file starts with a header record carrying `schema_version`, the
//! task, the config fingerprint and the seed, continues with one record per
//! step, and ends with an `{"outcome":…,"total_ms":…}` record. Observation
//! payloads live next to it under `obs/<sha256>.<format_tag>`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{render_action, Action};
use crate::device::DeviceInfo;
use crate::geometry::{BoundingBox, Point};

pub const SCHEMA_VERSION: &str = "1";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const OBS_DIR: &str = "obs";
pub const EMPTY_HISTORY: &str = "No actions taken yet.";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subset {
    General,
    WebShopping,
    Custom(String),
}

impl Subset {
    pub fn label(&self) -> &str {
        match self {
            Subset::General => "General",
            Subset::WebShopping => "WebShopping",
            Subset::Custom(s) => s,
        }
    }

    pub fn parse(label: &str) -> Subset {
        match label.trim().to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "general" | "aitwgeneral" => Subset::General,
            "webshopping" | "aitwwebshopping" => Subset::WebShopping,
            _ => Subset::Custom(label.trim().to_string()),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Subset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Subset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Subset::parse(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub subset: Subset,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_goal: Option<String>,
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, subset: Subset, instruction: impl Into<String>) -> Self {
        TaskSpec { id: id.into(), subset, instruction: instruction.into(), sim_goal: None }
    }

    pub fn with_goal(mut self, goal: impl Into<String>) -> Self {
        self.sim_goal = Some(goal.into());
        self
    }
}

/// A captured screen. `bytes` is opaque: PNG from a phone, a `simdesc`
/// document from the simulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub bytes: Arc<[u8]>,
    pub format_tag: String,
    pub screen_w: u32,
    pub screen_h: u32,
    pub captured_at_ms: u64,
}

impl Observation {
    pub fn new(bytes: impl Into<Arc<[u8]>>, format_tag: impl Into<String>, screen_w: u32, screen_h: u32, captured_at_ms: u64) -> Self {
        Observation { bytes: bytes.into(), format_tag: format_tag.into(), screen_w, screen_h, captured_at_ms }
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.bytes)
    }

    pub fn to_ref(&self) -> ObsRef {
        ObsRef {
            digest: self.digest(),
            format_tag: self.format_tag.clone(),
            screen_w: self.screen_w,
            screen_h: self.screen_h,
            captured_at_ms: self.captured_at_ms,
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.bytes.is_empty() && self.screen_w > 0 && self.screen_h > 0
    }
}

/// Content-addressed reference to an [`Observation`] stored beside a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsRef {
    pub digest: String,
    pub format_tag: String,
    pub screen_w: u32,
    pub screen_h: u32,
    pub captured_at_ms: u64,
}

impl ObsRef {
    pub fn file_name(&self) -> String {
        format!("{}.{}", self.digest, self.format_tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Success,
    Failure,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Success => "success",
            VerdictStatus::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub rationale: String,
}

impl Verdict {
    pub fn success(rationale: impl Into<String>) -> Self {
        Verdict { status: VerdictStatus::Success, rationale: rationale.into() }
    }

    pub fn failure(rationale: impl Into<String>) -> Self {
        Verdict { status: VerdictStatus::Failure, rationale: rationale.into() }
    }

    pub fn is_success(&self) -> bool {
        self.status == VerdictStatus::Success
    }
}

/// Loop phase, used for timing and for tagging errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Observe,
    Decide,
    Locate,
    Execute,
    Reflect,
    Timeout,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Observe => "observe",
            Phase::Decide => "decide",
            Phase::Locate => "locate",
            Phase::Execute => "execute",
            Phase::Reflect => "reflect",
            Phase::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub pre_obs: ObsRef,
    pub decision_raw: String,
    pub decide_attempts: u32,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locator_box: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap_point: Option<Point>,
    /// Installed app id chosen for an OpenApp action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_app: Option<String>,
    /// Non-fatal execution failure (locate, app selection, no focused field).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_error: Option<String>,
    pub post_obs: ObsRef,
    pub verdict: Verdict,
    pub reflect_attempts: u32,
    pub decide_ms: u64,
    pub locate_ms: u64,
    pub execute_ms: u64,
    pub reflect_ms: u64,
}

impl Step {
    pub fn phase_total_ms(&self) -> u64 {
        self.decide_ms + self.locate_ms + self.execute_ms + self.reflect_ms
    }

    /// Locator output is present only for clicks, and a click either has both
    /// box and tap point or records why it could not be executed.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.action.is_click() {
            if self.locator_box.is_none() && self.tap_point.is_some() {
                return Err("tap_point without locator_box".into());
            }
            if self.tap_point.is_none() && self.exec_error.is_none() {
                return Err("click without tap_point must carry exec_error".into());
            }
        } else if self.locator_box.is_some() || self.tap_point.is_some() {
            return Err("locator fields present on a non-click step".into());
        }
        if self.resolved_app.is_some() && !matches!(self.action, Action::OpenApp { .. }) {
            return Err("resolved_app present on a non-open-app step".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    BudgetExhausted,
    Error { phase: Phase, message: String },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::BudgetExhausted => "budget_exhausted",
            Outcome::Error { .. } => "error",
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub task: TaskSpec,
    pub config_fingerprint: String,
    pub seed: u64,
    pub device: DeviceInfo,
    /// True when the device cache was cleared before the episode.
    pub cache_reset: bool,
    pub max_steps: usize,
    pub steps: Vec<Step>,
    pub outcome: Outcome,
    pub total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("step {index}: {reason}")]
    InvalidStep { index: usize, reason: String },
    #[error("trace exceeds its step budget ({steps} > {max_steps})")]
    OverBudget { steps: usize, max_steps: usize },
    #[error("outcome {outcome} disagrees with final verdict")]
    OutcomeMismatch { outcome: &'static str },
}

impl EpisodeTrace {
    pub fn new(task: TaskSpec, config_fingerprint: impl Into<String>, seed: u64, device: DeviceInfo, cache_reset: bool, max_steps: usize) -> Self {
        EpisodeTrace {
            task,
            config_fingerprint: config_fingerprint.into(),
            seed,
            device,
            cache_reset,
            max_steps,
            steps: Vec::new(),
            outcome: Outcome::BudgetExhausted,
            total_ms: 0,
        }
    }

    pub fn push_step(&mut self, step: Step) -> Result<(), TraceError> {
        if step.index != self.steps.len() {
            return Err(TraceError::InvalidStep { index: step.index, reason: format!("expected index {}", self.steps.len()) });
        }
        step.check_invariants().map_err(|reason| TraceError::InvalidStep { index: step.index, reason })?;
        if self.steps.len() >= self.max_steps {
            return Err(TraceError::OverBudget { steps: self.steps.len() + 1, max_steps: self.max_steps });
        }
        self.steps.push(step);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        for (i, step) in self.steps.iter().enumerate() {
            if step.index != i {
                return Err(TraceError::InvalidStep { index: step.index, reason: format!("expected index {i}") });
            }
            step.check_invariants().map_err(|reason| TraceError::InvalidStep { index: i, reason })?;
        }
        if self.steps.len() > self.max_steps {
            return Err(TraceError::OverBudget { steps: self.steps.len(), max_steps: self.max_steps });
        }
        let last_success = self.steps.last().is_some_and(|s| s.verdict.is_success());
        match self.outcome {
            Outcome::Success if !last_success => return Err(TraceError::OutcomeMismatch { outcome: "success" }),
            Outcome::BudgetExhausted if last_success => return Err(TraceError::OutcomeMismatch { outcome: "budget_exhausted" }),
            _ => {}
        }
        Ok(())
    }

    pub fn phase_total_ms(&self) -> u64 {
        self.steps.iter().map(Step::phase_total_ms).sum()
    }

    pub fn last_post_obs(&self) -> Option<&ObsRef> {
        self.steps.last().map(|s| &s.post_obs)
    }
}

fn history_line(number: usize, action: &Action, status: &str) -> String {
    format!("{number}. {} | verdict: {status}", render_action(action).replace('\n', " | "))
}

/// One numbered line per step with the rendered action and verdict status.
pub fn summarize_history(trace: &EpisodeTrace) -> String {
    summarize_steps(&trace.steps)
}

pub fn summarize_steps(steps: &[Step]) -> String {
    if steps.is_empty() {
        return EMPTY_HISTORY.to_string();
    }
    steps
        .iter()
        .map(|s| history_line(s.index + 1, &s.action, s.verdict.status.as_str()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// History as seen by reflection: prior steps plus the action just executed.
pub fn summarize_with_pending(steps: &[Step], pending: &Action) -> String {
    let pending_line = history_line(steps.len() + 1, pending, "pending");
    if steps.is_empty() {
        pending_line
    } else {
        format!("{}\n{pending_line}", summarize_steps(steps))
    }
}

#[derive(Debug, Error)]
pub enum TraceFormatError {
    #[error("unsupported schema_version {found:?} (expected {SCHEMA_VERSION:?})")]
    SchemaVersionMismatch { found: String },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    schema_version: &'static str,
    task: &'a TaskSpec,
    config_fingerprint: &'a str,
    seed: u64,
    device: &'a DeviceInfo,
    cache_reset: bool,
    max_steps: usize,
}

#[derive(Deserialize)]
struct HeaderIn {
    task: TaskSpec,
    config_fingerprint: String,
    seed: u64,
    device: DeviceInfo,
    cache_reset: bool,
    max_steps: usize,
}

#[derive(Serialize, Deserialize)]
struct Footer {
    outcome: Outcome,
    total_ms: u64,
}

fn push_json_line<T: Serialize>(out: &mut Vec<u8>, value: &T) {
    serde_json::to_writer(&mut *out, value).expect("trace records serialize infallibly");
    out.push(b'\n');
}

pub fn serialize_trace(trace: &EpisodeTrace) -> Vec<u8> {
    let mut out = Vec::new();
    push_json_line(
        &mut out,
        &HeaderOut {
            schema_version: SCHEMA_VERSION,
            task: &trace.task,
            config_fingerprint: &trace.config_fingerprint,
            seed: trace.seed,
            device: &trace.device,
            cache_reset: trace.cache_reset,
            max_steps: trace.max_steps,
        },
    );
    for step in &trace.steps {
        push_json_line(&mut out, step);
    }
    push_json_line(&mut out, &Footer { outcome: trace.outcome.clone(), total_ms: trace.total_ms });
    out
}

pub fn deserialize_trace(bytes: &[u8]) -> Result<EpisodeTrace, TraceFormatError> {
    let malformed = |line: usize, reason: String| TraceFormatError::MalformedRecord { line, reason };
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(1, e.to_string()))?;
    let lines: Vec<&str> = text.lines().collect();

    let header_line = lines.first().ok_or_else(|| malformed(1, "empty trace".into()))?;
    let header_value: serde_json::Value = serde_json::from_str(header_line).map_err(|e| malformed(1, e.to_string()))?;
    match header_value.get("schema_version").and_then(|v| v.as_str()) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(TraceFormatError::SchemaVersionMismatch { found: other.to_string() }),
        None => return Err(malformed(1, "header lacks schema_version".into())),
    }
    let header: HeaderIn = serde_json::from_value(header_value).map_err(|e| malformed(1, e.to_string()))?;

    let mut trace = EpisodeTrace::new(header.task, header.config_fingerprint, header.seed, header.device, header.cache_reset, header.max_steps);
    let mut footer = None;
    for (i, line) in lines.iter().enumerate().skip(1) {
        let line_no = i + 1;
        if footer.is_some() {
            return Err(malformed(line_no, "record after outcome".into()));
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
        if value.get("outcome").is_some() {
            footer = Some(serde_json::from_value::<Footer>(value).map_err(|e| malformed(line_no, e.to_string()))?);
        } else {
            let step: Step = serde_json::from_value(value).map_err(|e| malformed(line_no, e.to_string()))?;
            trace.push_step(step).map_err(|e| malformed(line_no, e.to_string()))?;
        }
    }
    let footer = footer.ok_or_else(|| malformed(lines.len() + 1, "missing outcome record".into()))?;
    trace.outcome = footer.outcome;
    trace.total_ms = footer.total_ms;
    trace.validate().map_err(|e| malformed(lines.len(), e.to_string()))?;
    Ok(trace)
}

/// Observation payloads collected during an episode, keyed by digest.
#[derive(Debug, Clone, Default)]
pub struct ObservationStore {
    blobs: BTreeMap<String, Observation>,
}

impl ObservationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, obs: &Observation) -> ObsRef {
        let r = obs.to_ref();
        self.blobs.entry(r.digest.clone()).or_insert_with(|| obs.clone());
        r
    }

    pub fn get(&self, digest: &str) -> Option<&Observation> {
        self.blobs.get(digest)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }
}

/// Writes `trace.jsonl` and the observation payloads into `dir`.
pub fn write_trace_dir(dir: &Path, trace: &EpisodeTrace, store: &ObservationStore) -> io::Result<PathBuf> {
    let obs_dir = dir.join(OBS_DIR);
    fs::create_dir_all(&obs_dir)?;
    for obs in store.blobs.values() {
        let path = obs_dir.join(format!("{}.{}", obs.digest(), obs.format_tag));
        if !path.exists() {
            fs::write(&path, &obs.bytes)?;
        }
    }
    let path = dir.join(TRACE_FILE);
    fs::write(&path, serialize_trace(trace))?;
    Ok(path)
}

/// Accepts either a trace directory or the `trace.jsonl` file itself.
pub fn read_trace(path: &Path) -> Result<EpisodeTrace, TraceFormatError> {
    let file = if path.is_dir() { path.join(TRACE_FILE) } else { path.to_path_buf() };
    deserialize_trace(&fs::read(file)?)
}

pub fn load_observation(trace_dir: &Path, r: &ObsRef) -> io::Result<Observation> {
    let bytes = fs::read(trace_dir.join(OBS_DIR).join(r.file_name()))?;
    if sha256_hex(&bytes) != r.digest {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("digest mismatch for {}", r.file_name())));
    }
    Ok(Observation::new(bytes, r.format_tag.clone(), r.screen_w, r.screen_h, r.captured_at_ms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::Driver;

    fn obs(tag: &str, body: &str) -> ObsRef {
        Observation::new(body.as_bytes().to_vec(), tag, 1080, 1920, 0).to_ref()
    }

    fn click_step(index: usize, status: VerdictStatus) -> Step {
        let b = BoundingBox::new(0.05, 0.10, 0.20, 0.18).unwrap();
        Step {
            index,
            pre_obs: obs("simdesc", "a"),
            decision_raw: "ACTION: CLICK\nTARGET: click on the Gmail icon.".into(),
            decide_attempts: 1,
            action: Action::click("click on the Gmail icon.").unwrap(),
            locator_box: Some(b),
            tap_point: Some(crate::geometry::bbox_center(&b, 1080, 1920).unwrap()),
            resolved_app: None,
            exec_error: None,
            post_obs: obs("simdesc", "b"),
            verdict: Verdict { status, rationale: "r".into() },
            reflect_attempts: 1,
            decide_ms: 3,
            locate_ms: 2,
            execute_ms: 1,
            reflect_ms: 4,
        }
    }

    fn sample_trace() -> EpisodeTrace {
        let device = DeviceInfo { driver: Driver::Sim, screen_w: 1080, screen_h: 1920, serial_or_world_id: "w".into(), source: None };
        let task = TaskSpec::new("t1", Subset::General, "open gmail").with_goal("g");
        let mut t = EpisodeTrace::new(task, "fp", 42, device, false, 5);
        t.push_step(click_step(0, VerdictStatus::Failure)).unwrap();
        t.push_step(click_step(1, VerdictStatus::Success)).unwrap();
        t.outcome = Outcome::Success;
        t.total_ms = 25;
        t
    }

    #[test]
    fn history_formats() {
        let mut t = sample_trace();
        assert_eq!(
            summarize_steps(&t.steps[..1]),
            "1. ACTION: CLICK | TARGET: click on the Gmail icon. | verdict: failure"
        );
        assert_eq!(summarize_history(&t).lines().count(), 2);
        assert!(summarize_history(&t).lines().nth(1).unwrap().starts_with("2. "));
        t.steps.clear();
        assert_eq!(summarize_history(&t), EMPTY_HISTORY);
    }

    #[test]
    fn pending_line_is_appended() {
        let t = sample_trace();
        let s = summarize_with_pending(&t.steps[..1], &Action::swipe(crate::action::Direction::Up));
        assert_eq!(s.lines().last().unwrap(), "2. ACTION: SWIPE | DIRECTION: up | verdict: pending");
    }

    #[test]
    fn round_trip_and_determinism() {
        let t = sample_trace();
        let bytes = serialize_trace(&t);
        assert_eq!(bytes, serialize_trace(&t));
        assert_eq!(deserialize_trace(&bytes).unwrap(), t);
        let first = std::str::from_utf8(&bytes).unwrap().lines().next().unwrap();
        assert!(first.starts_with(r#"{"schema_version":"1","task":"#));
    }

    #[test]
    fn unknown_schema_version() {
        let bytes = serialize_trace(&sample_trace());
        let text = String::from_utf8(bytes).unwrap().replacen(r#""schema_version":"1""#, r#""schema_version":"99""#, 1);
        assert!(matches!(
            deserialize_trace(text.as_bytes()),
            Err(TraceFormatError::SchemaVersionMismatch { found }) if found == "99"
        ));
    }

    #[test]
    fn truncated_final_line() {
        let bytes = serialize_trace(&sample_trace());
        let cut = &bytes[..bytes.len() - 10];
        let n_lines = std::str::from_utf8(cut).unwrap().lines().count();
        match deserialize_trace(cut) {
            Err(TraceFormatError::MalformedRecord { line, .. }) => assert_eq!(line, n_lines),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn step_invariant_enforced_on_load() {
        let mut t = sample_trace();
        t.steps[0].action = Action::swipe(crate::action::Direction::Up);
        let bytes = serialize_trace(&t);
        assert!(matches!(deserialize_trace(&bytes), Err(TraceFormatError::MalformedRecord { line: 2, .. })));
    }

    #[test]
    fn outcome_must_match_final_verdict() {
        let mut t = sample_trace();
        t.outcome = Outcome::BudgetExhausted;
        assert!(t.validate().is_err());
        t.steps[1].verdict.status = VerdictStatus::Failure;
        assert!(t.validate().is_ok());
        t.outcome = Outcome::Success;
        assert!(t.validate().is_err());
    }

    #[test]
    fn trace_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ObservationStore::new();
        let o = Observation::new(b"payload".to_vec(), "simdesc", 10, 20, 5);
        let r = store.insert(&o);
        let t = sample_trace();
        write_trace_dir(dir.path(), &t, &store).unwrap();
        assert_eq!(read_trace(dir.path()).unwrap(), t);
        assert_eq!(load_observation(dir.path(), &r).unwrap(), o);
        assert!(dir.path().join("obs").join(format!("{}.simdesc", sha256_hex(b"payload"))).exists());
    }
}
