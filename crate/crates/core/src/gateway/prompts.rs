//! Prompt templates. Defaults ship in `assets/prompts/`; a directory holding
//! any of `system.txt`, `decision.txt`, `reflection.txt`, `app_select.txt`
//! overrides the corresponding default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::TaskSpec;

/// Inserted into the decision prompt when OCR anchoring is on.
pub const ANCHORING_SENTENCE: &str = "When the element you want to click shows any text, name it by that text in TARGET, e.g. \"Click on the email with the subject 'Meeting Agenda'\", rather than by its position, e.g. \"Click on the first email\".";

/// Appended to a decision prompt after an unparseable completion.
pub const DECISION_CORRECTION: &str = "Your previous answer could not be read ({error}). Reply again with exactly two lines: `ACTION: <CLICK|TYPE|OPEN_APP|SWIPE>` followed by the matching `TARGET:`, `TEXT:`, `APP:` or `DIRECTION:` line.";

/// Appended to a reflection prompt after a completion without a status line.
pub const REFLECTION_CORRECTION: &str = "Your previous answer had no status line. The first line must be exactly `STATUS: SUCCESS` or `STATUS: FAILURE`.";

const DEFAULT_SYSTEM: &str = include_str!("../../assets/prompts/system.txt");
const DEFAULT_DECISION: &str = include_str!("../../assets/prompts/decision.txt");
const DEFAULT_REFLECTION: &str = include_str!("../../assets/prompts/reflection.txt");
const DEFAULT_APP_SELECT: &str = include_str!("../../assets/prompts/app_select.txt");

const DECISION_SLOTS: &[&str] = &["task", "history", "anchoring"];
const REFLECTION_SLOTS: &[&str] = &["task", "history"];
const APP_SELECT_SLOTS: &[&str] = &["task", "app_list", "app_hint"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{template} template lacks placeholder {{{placeholder}}}")]
    MissingPlaceholder { template: &'static str, placeholder: &'static str },
    #[error("{template} template uses unknown placeholder {{{placeholder}}}")]
    UnknownPlaceholder { template: &'static str, placeholder: String },
    #[error("cannot read prompt override {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub decision_template: String,
    pub reflection_template: String,
    pub app_select_template: String,
    pub ocr_anchoring: bool,
}

impl Default for PromptBundle {
    fn default() -> Self {
        PromptBundle {
            system: DEFAULT_SYSTEM.trim_end().to_string(),
            decision_template: DEFAULT_DECISION.to_string(),
            reflection_template: DEFAULT_REFLECTION.to_string(),
            app_select_template: DEFAULT_APP_SELECT.to_string(),
            ocr_anchoring: true,
        }
    }
}

/// Names of `{word}` placeholders in order of appearance.
fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if close > 0 && after[..close].chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn check_template(name: &'static str, template: &str, slots: &'static [&'static str]) -> Result<(), PromptError> {
    let used = placeholders(template);
    for p in &used {
        if !slots.contains(p) {
            return Err(PromptError::UnknownPlaceholder { template: name, placeholder: p.to_string() });
        }
    }
    for slot in slots {
        if !used.contains(slot) {
            return Err(PromptError::MissingPlaceholder { template: name, placeholder: slot });
        }
    }
    Ok(())
}

/// Single-pass substitution: inserted values are never re-scanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let key = &after[..close];
            values.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        });
        match replaced {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

impl PromptBundle {
    pub fn validate(&self) -> Result<(), PromptError> {
        check_template("decision", &self.decision_template, DECISION_SLOTS)?;
        check_template("reflection", &self.reflection_template, REFLECTION_SLOTS)?;
        check_template("app_select", &self.app_select_template, APP_SELECT_SLOTS)?;
        Ok(())
    }

    /// Defaults overridden by whichever template files exist in `dir`.
    pub fn load_dir(dir: &Path, ocr_anchoring: bool) -> Result<PromptBundle, PromptError> {
        let mut bundle = PromptBundle { ocr_anchoring, ..PromptBundle::default() };
        let slots: [(&str, &mut String); 4] = [
            ("system.txt", &mut bundle.system),
            ("decision.txt", &mut bundle.decision_template),
            ("reflection.txt", &mut bundle.reflection_template),
            ("app_select.txt", &mut bundle.app_select_template),
        ];
        for (file, target) in slots {
            let path = dir.join(file);
            if path.exists() {
                *target = std::fs::read_to_string(&path)
                    .map_err(|e| PromptError::Io { path: path.display().to_string(), message: e.to_string() })?;
            }
        }
        bundle.system = bundle.system.trim_end().to_string();
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn with_anchoring(mut self, on: bool) -> Self {
        self.ocr_anchoring = on;
        self
    }

    pub fn render_decision_prompt(&self, task: &TaskSpec, history: &str) -> String {
        let anchoring = if self.ocr_anchoring { ANCHORING_SENTENCE } else { "" };
        fill(&self.decision_template, &[("task", &task.instruction), ("history", history), ("anchoring", anchoring)])
    }

    pub fn render_reflection_prompt(&self, task: &TaskSpec, history: &str) -> String {
        fill(&self.reflection_template, &[("task", &task.instruction), ("history", history)])
    }

    pub fn render_app_select_prompt(&self, task: &TaskSpec, apps: &[String], hint: &str) -> String {
        fill(&self.app_select_template, &[("task", &task.instruction), ("app_list", &apps.join("\n")), ("app_hint", hint)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Subset, EMPTY_HISTORY};

    fn task() -> TaskSpec {
        TaskSpec::new("t", Subset::General, "Open the Meeting Agenda email")
    }

    #[test]
    fn defaults_are_valid() {
        PromptBundle::default().validate().unwrap();
    }

    #[test]
    fn anchoring_toggle_only_changes_the_sentence() {
        let on = PromptBundle::default().render_decision_prompt(&task(), EMPTY_HISTORY);
        let off = PromptBundle::default().with_anchoring(false).render_decision_prompt(&task(), EMPTY_HISTORY);
        assert!(on.contains(ANCHORING_SENTENCE));
        assert!(!off.contains(ANCHORING_SENTENCE));
        assert_eq!(on.replacen(ANCHORING_SENTENCE, "", 1), off);
    }

    #[test]
    fn empty_history_sentinel_appears() {
        let p = PromptBundle::default().render_decision_prompt(&task(), EMPTY_HISTORY);
        assert!(p.contains("No actions taken yet."));
        assert!(p.contains("Open the Meeting Agenda email"));
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = TaskSpec::new("t", Subset::General, "type {history} literally");
        let p = PromptBundle::default().render_reflection_prompt(&t, "H");
        assert!(p.contains("type {history} literally"));
    }

    #[test]
    fn missing_and_unknown_placeholders() {
        let mut b = PromptBundle::default();
        b.reflection_template = "Task: {task}".into();
        assert_eq!(b.validate(), Err(PromptError::MissingPlaceholder { template: "reflection", placeholder: "history" }));
        b.reflection_template = "{task} {history} {mood}".into();
        assert_eq!(b.validate(), Err(PromptError::UnknownPlaceholder { template: "reflection", placeholder: "mood".into() }));
    }

    #[test]
    fn app_list_is_newline_separated() {
        let apps = vec!["com.a".to_string(), "com.b".to_string()];
        let p = PromptBundle::default().render_app_select_prompt(&task(), &apps, "mail");
        assert!(p.contains("com.a\ncom.b"));
        assert!(p.contains("open this app: mail"));
    }

    #[test]
    fn override_dir_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("decision.txt"), "{task} only").unwrap();
        assert!(matches!(PromptBundle::load_dir(dir.path(), true), Err(PromptError::MissingPlaceholder { template: "decision", .. })));
        std::fs::write(dir.path().join("decision.txt"), "{task}|{history}|{anchoring}").unwrap();
        let b = PromptBundle::load_dir(dir.path(), false).unwrap();
        assert_eq!(b.render_decision_prompt(&task(), "h"), "Open the Meeting Agenda email|h|");
    }
}
