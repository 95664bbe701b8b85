//! Everything that talks to a model: prompt rendering, completion parsing with
//! bounded re-prompting, app selection, and the locator call.
//!
//! Backends implement [`ChatModel`] and [`Locator`]. The HTTP clients live in
//! [`http`], scripted doubles in [`mock`]; the simulator's oracle models are in
//! `crate::sim::models`.

pub mod http;
pub mod mock;
pub mod prompts;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{parse_decision, Action, ParseError, UiCommand};
use crate::geometry::BoundingBox;
use crate::trace::{Observation, TaskSpec, Verdict, VerdictStatus};

pub use prompts::{PromptBundle, PromptError};

/// Decision and reflection calls are tried at most this many times.
pub const MAX_PROMPT_ATTEMPTS: u32 = 3;

pub const UNPARSEABLE_RATIONALE: &str = "unparseable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Decision,
    Reflection,
    AppSelect,
}

/// One completion request. `prompt` and `image` are all an HTTP backend
/// sends; the structured fields let mocks answer without parsing prose.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub purpose: Purpose,
    /// 0 for the first prompt of a call, 1.. for re-prompts.
    pub attempt: u32,
    pub system: &'a str,
    pub prompt: &'a str,
    pub image: Option<&'a Observation>,
    pub task: &'a TaskSpec,
    pub app_list: &'a [String],
    pub app_hint: Option<&'a str>,
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, GatewayError>;
}

pub trait Locator: Send + Sync {
    fn locate(&self, obs: &Observation, command: &UiCommand) -> Result<BoundingBox, GatewayError>;
}

impl<T: ChatModel + ?Sized> ChatModel for std::sync::Arc<T> {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, GatewayError> {
        (**self).complete(req)
    }
}

impl<T: Locator + ?Sized> Locator for std::sync::Arc<T> {
    fn locate(&self, obs: &Observation, command: &UiCommand) -> Result<BoundingBox, GatewayError> {
        (**self).locate(obs, command)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error("model returned an empty completion")]
    ModelRefusal,
    #[error("no parseable decision after {attempts} attempt(s): {error}")]
    UnparseableDecision { attempts: u32, error: ParseError, last_raw: String },
    #[error("cannot match app answer {answer:?} to exactly one installed app")]
    AppSelection { answer: String },
    #[error("app selection needs a non-empty app list")]
    EmptyAppList,
    #[error("malformed locator box: {0}")]
    MalformedBox(String),
    #[error("element not found: {0}")]
    ElementNotFound(String),
}

impl GatewayError {
    /// Errors the agent loop absorbs into a failed step instead of ending the episode.
    pub fn is_step_local(&self) -> bool {
        matches!(
            self,
            GatewayError::MalformedBox(_) | GatewayError::ElementNotFound(_) | GatewayError::AppSelection { .. }
        )
    }
}

/// API key wrapper that never prints its contents.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Secret(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxFormat {
    /// `{"x1","y1","x2","y2"}` in [0, 1].
    #[default]
    NormalizedBox,
    /// Same keys in screenshot pixels.
    PixelBox,
    /// `{"x","y"}` in [0, 1]; becomes a zero-area box.
    NormalizedPoint,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<Secret>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub box_format: BoxFormat,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            api_key: None,
            model_name: model_name.into(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            temperature: 0.0,
            box_format: BoxFormat::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_ms == 0 {
            return Err("timeout_ms must be positive".into());
        }
        if !(self.temperature >= 0.0) {
            return Err("temperature must be non-negative".into());
        }
        reqwest::Url::parse(&self.base_url).map_err(|e| format!("base_url {:?}: {e}", self.base_url))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionOutput {
    pub action: Action,
    pub raw: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReflectionOutput {
    pub verdict: Verdict,
    pub raw: String,
    pub attempts: u32,
}

fn with_correction(prompt: &str, correction: &str) -> String {
    format!("{prompt}\n\n{correction}")
}

/// Asks for the next action; re-prompts on unparseable output, up to
/// [`MAX_PROMPT_ATTEMPTS`] prompts in total.
pub fn decide(
    model: &dyn ChatModel,
    prompts: &PromptBundle,
    task: &TaskSpec,
    history: &str,
    obs: &Observation,
) -> Result<DecisionOutput, GatewayError> {
    let base = prompts.render_decision_prompt(task, history);
    let mut prompt = base.clone();
    let mut last = None;
    for attempt in 0..MAX_PROMPT_ATTEMPTS {
        let req = ChatRequest {
            purpose: Purpose::Decision,
            attempt,
            system: &prompts.system,
            prompt: &prompt,
            image: Some(obs),
            task,
            app_list: &[],
            app_hint: None,
        };
        let raw = model.complete(&req)?;
        if raw.trim().is_empty() {
            return Err(GatewayError::ModelRefusal);
        }
        match parse_decision(&raw) {
            Ok(action) => return Ok(DecisionOutput { action, raw, attempts: attempt + 1 }),
            Err(error) => {
                log::debug!("decision attempt {} unparseable: {error}", attempt + 1);
                let correction = prompts::DECISION_CORRECTION.replace("{error}", &error.to_string());
                prompt = with_correction(&base, &correction);
                last = Some((error, raw));
            }
        }
    }
    let (error, last_raw) = last.expect("at least one attempt");
    Err(GatewayError::UnparseableDecision { attempts: MAX_PROMPT_ATTEMPTS, error, last_raw })
}

/// Reads a `STATUS: SUCCESS|FAILURE` line; every other line becomes the rationale.
pub fn parse_verdict(raw: &str) -> Option<Verdict> {
    let mut status = None;
    let mut rest = Vec::new();
    for line in raw.lines() {
        if status.is_none() {
            let stripped: String = line.chars().filter(|c| !matches!(c, '*' | '`' | '#')).collect();
            if let Some((key, value)) = stripped.split_once(':') {
                if key.trim().eq_ignore_ascii_case("status") {
                    let word = value.trim().trim_end_matches(['.', '!']).to_ascii_lowercase();
                    status = match word.as_str() {
                        "success" => Some(VerdictStatus::Success),
                        "failure" => Some(VerdictStatus::Failure),
                        _ => None,
                    };
                    if status.is_some() {
                        continue;
                    }
                }
            }
        }
        if !line.trim().is_empty() {
            rest.push(line.trim());
        }
    }
    status.map(|status| Verdict { status, rationale: rest.join("\n") })
}

/// Judges the post-action screen. A reflection that never yields a status
/// line counts as a failure verdict so the episode can continue.
pub fn reflect(
    model: &dyn ChatModel,
    prompts: &PromptBundle,
    task: &TaskSpec,
    history: &str,
    obs: &Observation,
) -> Result<ReflectionOutput, GatewayError> {
    let base = prompts.render_reflection_prompt(task, history);
    let mut prompt = base.clone();
    let mut raw = String::new();
    for attempt in 0..MAX_PROMPT_ATTEMPTS {
        let req = ChatRequest {
            purpose: Purpose::Reflection,
            attempt,
            system: &prompts.system,
            prompt: &prompt,
            image: Some(obs),
            task,
            app_list: &[],
            app_hint: None,
        };
        raw = model.complete(&req)?;
        if let Some(verdict) = parse_verdict(&raw) {
            return Ok(ReflectionOutput { verdict, raw, attempts: attempt + 1 });
        }
        prompt = with_correction(&base, prompts::REFLECTION_CORRECTION);
    }
    Ok(ReflectionOutput { verdict: Verdict::failure(UNPARSEABLE_RATIONALE), raw, attempts: MAX_PROMPT_ATTEMPTS })
}

fn last_segment(id: &str) -> &str {
    id.rsplit('.').next().unwrap_or(id)
}

/// Maps a free-text app answer onto one installed id: exact match, then the
/// answer containing a full id, then an id containing the answer, then an id
/// whose last dotted segment (at least two characters) occurs in the answer.
/// The first tier with any match decides and must match exactly one id.
pub fn resolve_app(answer: &str, apps: &[String]) -> Result<String, GatewayError> {
    let trimmed = answer.trim().trim_matches(['"', '\'', '`', '.']).trim();
    if let Some(hit) = apps.iter().find(|a| a.as_str() == trimmed) {
        return Ok(hit.clone());
    }
    let lower = trimmed.to_lowercase();
    let tiers: [&dyn Fn(&str) -> bool; 3] = [
        &|id| lower.contains(id),
        &|id| !lower.is_empty() && id.contains(lower.as_str()),
        &|id| {
            let seg = last_segment(id);
            seg.len() >= 2 && lower.contains(seg)
        },
    ];
    for tier in tiers {
        let hits: Vec<&String> = apps.iter().filter(|a| tier(&a.to_lowercase())).collect();
        match hits.as_slice() {
            [] => continue,
            [one] => return Ok((*one).clone()),
            _ => break,
        }
    }
    Err(GatewayError::AppSelection { answer: answer.trim().to_string() })
}

/// Second query of an OpenApp action: pick one id from the device's list.
pub fn select_app(
    model: &dyn ChatModel,
    prompts: &PromptBundle,
    task: &TaskSpec,
    apps: &[String],
    hint: &str,
) -> Result<String, GatewayError> {
    if apps.is_empty() {
        return Err(GatewayError::EmptyAppList);
    }
    let prompt = prompts.render_app_select_prompt(task, apps, hint);
    let req = ChatRequest {
        purpose: Purpose::AppSelect,
        attempt: 0,
        system: &prompts.system,
        prompt: &prompt,
        image: None,
        task,
        app_list: apps,
        app_hint: Some(hint),
    };
    let answer = model.complete(&req)?;
    resolve_app(&answer, apps)
}

pub fn locate(locator: &dyn Locator, obs: &Observation, command: &UiCommand) -> Result<BoundingBox, GatewayError> {
    locator.locate(obs, command)
}

#[cfg(test)]
mod tests {
    use super::mock::{ScriptedChatModel, ScriptedLocator};
    use super::*;
    use crate::trace::Subset;

    fn task() -> TaskSpec {
        TaskSpec::new("t1", Subset::General, "Play the Eyes Closed video")
    }

    fn obs() -> Observation {
        Observation::new(b"\x89PNG....".to_vec(), "png", 1080, 1920, 0)
    }

    #[test]
    fn decide_parses_first_completion() {
        let m = ScriptedChatModel::new().decision("ACTION: CLICK\nTARGET: Click on the Eyes Closed Official Video");
        let out = decide(&m, &PromptBundle::default(), &task(), "No actions taken yet.", &obs()).unwrap();
        assert_eq!(out.action, Action::click("Click on the Eyes Closed Official Video").unwrap());
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn decide_reprompts_after_prose() {
        let m = ScriptedChatModel::new().decision("Let me think about this.").decision("ACTION: SWIPE\nDIRECTION: up");
        let out = decide(&m, &PromptBundle::default(), &task(), "h", &obs()).unwrap();
        assert_eq!(out.action, Action::swipe(crate::action::Direction::Up));
        assert_eq!(out.attempts, 2);
        let calls = m.calls();
        assert_eq!(calls.len(), 2);
        assert_eq!(calls[1].attempt, 1);
        assert!(calls[1].prompt.contains("could not be read"));
        assert!(!calls[0].prompt.contains("could not be read"));
    }

    #[test]
    fn decide_gives_up_after_three_prompts() {
        let m = ScriptedChatModel::new().decision("garbage").decision("more garbage").decision("still garbage").decision("ACTION: SWIPE\nDIRECTION: up");
        let err = decide(&m, &PromptBundle::default(), &task(), "h", &obs()).unwrap_err();
        assert!(matches!(err, GatewayError::UnparseableDecision { attempts: 3, .. }));
        assert_eq!(m.calls().len(), 3);
    }

    #[test]
    fn decide_empty_completion_is_refusal() {
        let m = ScriptedChatModel::new().decision("   ");
        assert_eq!(decide(&m, &PromptBundle::default(), &task(), "h", &obs()), Err(GatewayError::ModelRefusal));
    }

    #[test]
    fn reflect_verdicts() {
        let m = ScriptedChatModel::new().reflection("STATUS: SUCCESS\nThe video is playing.");
        let out = reflect(&m, &PromptBundle::default(), &task(), "h", &obs()).unwrap();
        assert_eq!(out.verdict, Verdict::success("The video is playing."));
        let m = ScriptedChatModel::new().reflection("status: failure\nStill on home screen.");
        let out = reflect(&m, &PromptBundle::default(), &task(), "h", &obs()).unwrap();
        assert_eq!(out.verdict, Verdict::failure("Still on home screen."));
    }

    #[test]
    fn reflect_unparseable_becomes_failure() {
        let m = ScriptedChatModel::new().reflection("hmm").reflection("not sure").reflection("maybe?");
        let out = reflect(&m, &PromptBundle::default(), &task(), "h", &obs()).unwrap();
        assert_eq!(out.verdict, Verdict::failure(UNPARSEABLE_RATIONALE));
        assert_eq!(out.attempts, 3);
    }

    #[test]
    fn verdict_parsing_tolerates_markup() {
        assert_eq!(parse_verdict("**STATUS:** SUCCESS.").unwrap().status, VerdictStatus::Success);
        assert!(parse_verdict("STATUS: maybe").is_none());
    }

    fn apps() -> Vec<String> {
        vec!["com.google.android.gm".into(), "com.android.settings".into()]
    }

    #[test]
    fn select_app_exact_and_fuzzy() {
        let m = ScriptedChatModel::new().app_select("com.google.android.gm").app_select("gmail").app_select("calculator");
        let p = PromptBundle::default();
        assert_eq!(select_app(&m, &p, &task(), &apps(), "Gmail").unwrap(), "com.google.android.gm");
        assert_eq!(select_app(&m, &p, &task(), &apps(), "Gmail").unwrap(), "com.google.android.gm");
        assert!(matches!(select_app(&m, &p, &task(), &apps(), "x"), Err(GatewayError::AppSelection { .. })));
        assert_eq!(select_app(&m, &p, &task(), &[], "x"), Err(GatewayError::EmptyAppList));
    }

    #[test]
    fn resolve_app_tiers() {
        assert_eq!(resolve_app("Settings", &apps()).unwrap(), "com.android.settings");
        assert_eq!(resolve_app("I pick com.android.settings.", &apps()).unwrap(), "com.android.settings");
        // "android" is in both ids
        assert!(resolve_app("android", &apps()).is_err());
    }

    #[test]
    fn locate_through_scripted_locator() {
        let b = BoundingBox::new(0.05, 0.10, 0.20, 0.18).unwrap();
        let l = ScriptedLocator::new().with("Click on the Gmail icon.", b);
        let cmd = UiCommand::new("Click on the Gmail icon.").unwrap();
        assert_eq!(locate(&l, &obs(), &cmd).unwrap(), b);
        let other = UiCommand::new("Click on the Maps icon.").unwrap();
        assert!(matches!(locate(&l, &obs(), &other), Err(GatewayError::ElementNotFound(_))));
    }

    #[test]
    fn endpoint_validation_and_secret_redaction() {
        let mut cfg = EndpointConfig::new("http://127.0.0.1:9", "m");
        cfg.api_key = Some(Secret::new("sk-live"));
        assert!(cfg.validate().is_ok());
        assert!(!format!("{cfg:?}").contains("sk-live"));
        assert!(!serde_json::to_string(&cfg).unwrap().contains("sk-live"));
        cfg.timeout_ms = 0;
        assert!(cfg.validate().is_err());
    }
}
