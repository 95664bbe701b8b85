//! The four-action grammar the decision model speaks, and its parser.
//!
//! A decision completion must contain a block of the form
//!
//! ```text
//! ACTION: CLICK
//! TARGET: Click on the Eyes Closed Official Video
//! ```
//!
//! where the action keyword is one of `CLICK`, `TYPE`, `OPEN_APP` or `SWIPE`
//! and the following non-blank line carries the argument (`TARGET:`, `TEXT:`,
//! `APP:` or `DIRECTION:`). Keywords match case-insensitively and any prose
//! around the block is ignored; the first well-formed block wins.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rejected argument for one of the [`Action`] payload newtypes.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("{0} must fit on a single line")]
    Multiline(&'static str),
}

fn single_line(value: &str, what: &'static str) -> Result<String, ActionError> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Err(ActionError::Empty(what));
    }
    if trimmed.contains(['\n', '\r']) {
        return Err(ActionError::Multiline(what));
    }
    Ok(trimmed.to_string())
}

macro_rules! text_newtype {
    ($(#[$doc:meta])* $name:ident, $what:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl AsRef<str>) -> Result<Self, ActionError> {
                single_line(value.as_ref(), $what).map(Self)
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = ActionError;
            fn try_from(value: String) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(value: $name) -> String {
                value.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

text_newtype!(
    /// Natural-language instruction handed to the UI locator, e.g.
    /// "click on the Gmail icon.". Stored trimmed.
    UiCommand,
    "ui command"
);
text_newtype!(
    /// Text to be typed into the focused field. Stored trimmed.
    TypedText,
    "typed text"
);
text_newtype!(
    /// The decision model's app choice; resolved against the device app list later.
    AppChoice,
    "app id"
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Down, Direction::Left, Direction::Right, Direction::Up];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cleaned = s.trim().trim_end_matches(['.', '!']).to_ascii_lowercase();
        match cleaned.as_str() {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            _ => Err(ParseError::UnknownDirection(s.trim().to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Click { ui_command: UiCommand },
    Type { text: TypedText },
    OpenApp { app_id: AppChoice },
    Swipe { direction: Direction },
}

impl Action {
    pub fn click(command: impl AsRef<str>) -> Result<Self, ActionError> {
        Ok(Action::Click { ui_command: UiCommand::new(command)? })
    }

    pub fn type_text(text: impl AsRef<str>) -> Result<Self, ActionError> {
        Ok(Action::Type { text: TypedText::new(text)? })
    }

    pub fn open_app(app_id: impl AsRef<str>) -> Result<Self, ActionError> {
        Ok(Action::OpenApp { app_id: AppChoice::new(app_id)? })
    }

    pub fn swipe(direction: Direction) -> Self {
        Action::Swipe { direction }
    }

    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click { .. } => ActionKind::Click,
            Action::Type { .. } => ActionKind::Type,
            Action::OpenApp { .. } => ActionKind::OpenApp,
            Action::Swipe { .. } => ActionKind::Swipe,
        }
    }

    pub fn is_click(&self) -> bool {
        matches!(self, Action::Click { .. })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_action(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Type,
    OpenApp,
    Swipe,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [ActionKind::Click, ActionKind::Type, ActionKind::OpenApp, ActionKind::Swipe];

    fn keyword(self) -> &'static str {
        match self {
            ActionKind::Click => "CLICK",
            ActionKind::Type => "TYPE",
            ActionKind::OpenApp => "OPEN_APP",
            ActionKind::Swipe => "SWIPE",
        }
    }

    fn argument_key(self) -> &'static str {
        match self {
            ActionKind::Click => "TARGET",
            ActionKind::Type => "TEXT",
            ActionKind::OpenApp => "APP",
            ActionKind::Swipe => "DIRECTION",
        }
    }

    fn from_keyword(word: &str) -> Option<Self> {
        let normalized: String = word
            .trim()
            .trim_end_matches('.')
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_uppercase() })
            .collect();
        match normalized.as_str() {
            "CLICK" | "TAP" => Some(ActionKind::Click),
            "TYPE" => Some(ActionKind::Type),
            "OPEN_APP" | "OPENAPP" => Some(ActionKind::OpenApp),
            "SWIPE" => Some(ActionKind::Swipe),
            _ => None,
        }
    }
}

/// Why a decision completion could not be turned into an [`Action`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no ACTION line found")]
    NoActionTag,
    #[error("ACTION {0} is missing its argument line")]
    MissingArgument(&'static str),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("unknown swipe direction {0:?}")]
    UnknownDirection(String),
}

/// Splits `KEY: value`, ignoring markdown emphasis around the key.
fn split_key(line: &str) -> Option<(String, &str)> {
    let (raw_key, value) = line.split_once(':')?;
    let key: String = raw_key
        .chars()
        .filter(|c| !matches!(c, '*' | '#' | '`' | '-' | '>'))
        .collect::<String>()
        .trim()
        .to_ascii_uppercase();
    if key.is_empty() || key.contains(char::is_whitespace) {
        return None;
    }
    let mut value = value.trim();
    if raw_key.contains("**") {
        value = value.trim_start_matches("**").trim();
    }
    Some((key, value))
}

fn parse_block(kind_word: &str, rest: &[&str]) -> Result<Action, ParseError> {
    let kind = ActionKind::from_keyword(kind_word).ok_or_else(|| ParseError::UnknownAction(kind_word.trim().to_string()))?;
    let missing = || ParseError::MissingArgument(kind.keyword());
    let arg_line = rest.iter().find(|l| !l.trim().is_empty()).ok_or_else(missing)?;
    let (key, value) = split_key(arg_line).ok_or_else(missing)?;
    if key != kind.argument_key() || value.is_empty() {
        return Err(missing());
    }
    let action = match kind {
        ActionKind::Click => Action::click(value),
        ActionKind::Type => Action::type_text(value),
        ActionKind::OpenApp => Action::open_app(value),
        ActionKind::Swipe => return Ok(Action::swipe(value.parse()?)),
    };
    action.map_err(|_| missing())
}

/// Extracts the first well-formed action block from a decision completion.
///
/// When every block is malformed the error of the first one is returned.
pub fn parse_decision(raw: &str) -> Result<Action, ParseError> {
    let lines: Vec<&str> = raw.lines().collect();
    let mut first_error = None;
    for (i, line) in lines.iter().enumerate() {
        let Some((key, value)) = split_key(line) else { continue };
        if key != "ACTION" {
            continue;
        }
        match parse_block(value, &lines[i + 1..]) {
            Ok(action) => return Ok(action),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    Err(first_error.unwrap_or(ParseError::NoActionTag))
}

/// Canonical two-line rendering; `parse_decision(&render_action(a)) == Ok(a)`.
pub fn render_action(action: &Action) -> String {
    let (kind, arg) = match action {
        Action::Click { ui_command } => (ActionKind::Click, ui_command.as_str()),
        Action::Type { text } => (ActionKind::Type, text.as_str()),
        Action::OpenApp { app_id } => (ActionKind::OpenApp, app_id.as_str()),
        Action::Swipe { direction } => (ActionKind::Swipe, direction.as_str()),
    };
    format!("ACTION: {}\n{}: {}", kind.keyword(), kind.argument_key(), arg)
}
