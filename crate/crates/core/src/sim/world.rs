//! World definition files (TOML).
//!
//! ```toml
//! schema_version = "1"
//! id = "general-apps"
//! start_screen = "home"
//! screen_w = 1080
//! screen_h = 1920
//!
//! [[apps]]
//! id = "com.android.settings"
//! root = "settings_root"
//!
//! [[screens]]
//! id = "home"
//! pages = 1                      # optional, default 1
//! app = "com.android.settings"   # optional foreground app of this screen
//!
//! [[screens.elements]]
//! id = "settings_icon"
//! page = 0                       # optional, default 0
//! box = [0.05, 0.10, 0.20, 0.18] # normalized x1, y1, x2, y2
//! text = "Settings"
//! role = "icon"                  # button | link | text_field | icon | list_item
//!
//! [[rules]]
//! on = "tap"                     # tap | type | swipe | launch
//! screen = "home"                # required except for launch
//! element = "settings_icon"      # tap and type
//! text = "shoes"                 # type: fires when the buffer equals this
//! direction = "left"             # swipe: left or right
//! app = "com.x"                  # launch
//! when = "cache_cleared"         # optional guard, "!cache_cleared" negates
//! goto = "settings_root"         # effects: at least one of goto, focus, set_cache_cleared
//! focus = "search_field"
//! set_cache_cleared = false
//!
//! [[goals]]
//! id = "open_settings"
//! reach = "settings_root"        # or: app = "com.x"
//!                                # or: buffer = { screen = "s", element = "e", equals = "t" }
//! ```
//!
//! Rules are tried in file order; the first whose trigger and guard match wins.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Direction;
use crate::geometry::BoundingBox;

pub const WORLD_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Button,
    Link,
    TextField,
    Icon,
    ListItem,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Button => "button",
            Role::Link => "link",
            Role::TextField => "text_field",
            Role::Icon => "icon",
            Role::ListItem => "list_item",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: String,
    pub page: usize,
    pub bbox: BoundingBox,
    pub text: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenNode {
    pub id: String,
    pub page_count: usize,
    pub app: Option<String>,
    pub elements: Vec<Element>,
}

impl ScreenNode {
    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn visible(&self, page: usize) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(move |e| e.page == page)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trigger {
    Tap { screen: String, element: String },
    TypeSubmit { screen: String, element: String, equals: String },
    Swipe { screen: String, direction: Direction },
    Launch { app: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guard {
    CacheCleared(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Effect {
    pub goto: Option<String>,
    pub focus: Option<String>,
    pub set_cache_cleared: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRule {
    pub trigger: Trigger,
    pub guard: Option<Guard>,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalPredicate {
    Reach(String),
    Buffer { screen: String, element: String, equals: String },
    AppForeground(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimGoal {
    pub id: String,
    pub predicate: GoalPredicate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub id: String,
    pub description: String,
    pub screen_w: u32,
    pub screen_h: u32,
    pub start_screen: String,
    /// Installed apps: id → root screen.
    pub apps: BTreeMap<String, String>,
    pub screens: BTreeMap<String, ScreenNode>,
    pub rules: Vec<TransitionRule>,
    pub goals: BTreeMap<String, SimGoal>,
    /// sha256 of the source document.
    pub digest: String,
}

impl World {
    pub fn screen(&self, id: &str) -> Option<&ScreenNode> {
        self.screens.get(id)
    }

    pub fn goal(&self, id: &str) -> Option<&SimGoal> {
        self.goals.get(id)
    }

    /// Every text the world ever checks a buffer against; the only texts worth typing.
    pub fn typing_candidates(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for r in &self.rules {
            if let Trigger::TypeSubmit { equals, .. } = &r.trigger {
                out.insert(equals.clone());
            }
        }
        for g in self.goals.values() {
            if let GoalPredicate::Buffer { equals, .. } = &g.predicate {
                out.insert(equals.clone());
            }
        }
        out
    }

    pub fn from_toml_str(source: &str) -> Result<World, WorldError> {
        let doc: WorldDoc = toml::from_str(source).map_err(|e| WorldError::Parse(e.to_string()))?;
        let digest = crate::trace::sha256_hex(source.as_bytes());
        doc.build(digest)
    }

    pub fn load(path: &Path) -> Result<World, WorldError> {
        let source = std::fs::read_to_string(path).map_err(|e| WorldError::Io(format!("{}: {e}", path.display())))?;
        World::from_toml_str(&source)
    }
}

/// One validation failure, located by a TOML-style path such as `rules[3].goto`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("cannot read world file: {0}")]
    Io(String),
    #[error("world file is not valid TOML for the schema: {0}")]
    Parse(String),
    #[error("unsupported world schema_version {0:?}")]
    SchemaVersion(String),
    #[error("invalid world:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldDoc {
    schema_version: String,
    id: String,
    #[serde(default)]
    description: String,
    start_screen: String,
    screen_w: u32,
    screen_h: u32,
    #[serde(default)]
    apps: Vec<AppDoc>,
    screens: Vec<ScreenDoc>,
    #[serde(default)]
    rules: Vec<RuleDoc>,
    #[serde(default)]
    goals: Vec<GoalDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AppDoc {
    id: String,
    root: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScreenDoc {
    id: String,
    #[serde(default = "one")]
    pages: usize,
    app: Option<String>,
    #[serde(default)]
    elements: Vec<ElementDoc>,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementDoc {
    id: String,
    #[serde(default)]
    page: usize,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default)]
    text: String,
    role: Role,
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum TriggerKind {
    Tap,
    Type,
    Swipe,
    Launch,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    on: TriggerKind,
    screen: Option<String>,
    element: Option<String>,
    text: Option<String>,
    direction: Option<Direction>,
    app: Option<String>,
    when: Option<String>,
    goto: Option<String>,
    focus: Option<String>,
    set_cache_cleared: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BufferGoalDoc {
    screen: String,
    element: String,
    equals: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalDoc {
    id: String,
    reach: Option<String>,
    app: Option<String>,
    buffer: Option<BufferGoalDoc>,
}

struct Issues(Vec<Issue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Issue { path: path.into(), message: message.into() });
    }
}

impl WorldDoc {
    fn build(self, digest: String) -> Result<World, WorldError> {
        if self.schema_version != WORLD_SCHEMA_VERSION {
            return Err(WorldError::SchemaVersion(self.schema_version));
        }
        let mut issues = Issues(Vec::new());
        if self.screen_w == 0 || self.screen_h == 0 {
            issues.push("screen_w", "screen dimensions must be positive");
        }

        let mut screens = BTreeMap::new();
        for (si, s) in self.screens.iter().enumerate() {
            let path = format!("screens[{si}]");
            if s.pages == 0 {
                issues.push(format!("{path}.pages"), "must be at least 1");
            }
            let mut elements = Vec::new();
            let mut seen = BTreeSet::new();
            for (ei, e) in s.elements.iter().enumerate() {
                let epath = format!("{path}.elements[{ei}]");
                if !seen.insert(e.id.as_str()) {
                    issues.push(format!("{epath}.id"), format!("duplicate element id '{}' on screen '{}'", e.id, s.id));
                }
                if e.page >= s.pages.max(1) {
                    issues.push(format!("{epath}.page"), format!("page {} but screen has {} page(s)", e.page, s.pages));
                }
                match BoundingBox::new(e.bbox[0], e.bbox[1], e.bbox[2], e.bbox[3]) {
                    Ok(bbox) => elements.push(Element { id: e.id.clone(), page: e.page, bbox, text: e.text.clone(), role: e.role }),
                    Err(err) => issues.push(format!("{epath}.box"), err.to_string()),
                }
            }
            let node = ScreenNode { id: s.id.clone(), page_count: s.pages.max(1), app: s.app.clone(), elements };
            if screens.insert(s.id.clone(), node).is_some() {
                issues.push(format!("{path}.id"), format!("duplicate screen id '{}'", s.id));
            }
        }

        let mut apps = BTreeMap::new();
        for (ai, a) in self.apps.iter().enumerate() {
            if !screens.contains_key(&a.root) {
                issues.push(format!("apps[{ai}].root"), format!("unknown screen '{}'", a.root));
            }
            if apps.insert(a.id.clone(), a.root.clone()).is_some() {
                issues.push(format!("apps[{ai}].id"), format!("duplicate app id '{}'", a.id));
            }
        }
        for (si, s) in self.screens.iter().enumerate() {
            if let Some(app) = &s.app {
                if !apps.contains_key(app) {
                    issues.push(format!("screens[{si}].app"), format!("unknown app '{app}'"));
                }
            }
        }
        if !screens.contains_key(&self.start_screen) {
            issues.push("start_screen", format!("unknown screen '{}'", self.start_screen));
        }

        let rules = self
            .rules
            .iter()
            .enumerate()
            .filter_map(|(ri, r)| build_rule(ri, r, &screens, &apps, &mut issues))
            .collect();

        let mut goals = BTreeMap::new();
        for (gi, g) in self.goals.iter().enumerate() {
            if let Some(goal) = build_goal(gi, g, &screens, &apps, &mut issues) {
                if goals.insert(g.id.clone(), goal).is_some() {
                    issues.push(format!("goals[{gi}].id"), format!("duplicate goal id '{}'", g.id));
                }
            }
        }

        if !issues.0.is_empty() {
            return Err(WorldError::Invalid(issues.0));
        }
        Ok(World {
            id: self.id,
            description: self.description,
            screen_w: self.screen_w,
            screen_h: self.screen_h,
            start_screen: self.start_screen,
            apps,
            screens,
            rules,
            goals,
            digest,
        })
    }
}

fn require<'a>(issues: &mut Issues, path: &str, field: &str, value: &'a Option<String>) -> Option<&'a String> {
    if value.is_none() {
        issues.push(format!("{path}.{field}"), "required for this trigger");
    }
    value.as_ref()
}

fn check_element(issues: &mut Issues, path: &str, screens: &BTreeMap<String, ScreenNode>, screen: &str, element: &str, want_field: bool) {
    let Some(node) = screens.get(screen) else { return };
    match node.element(element) {
        None => issues.push(path.to_string(), format!("unknown element '{element}' on screen '{screen}'")),
        Some(e) if want_field && e.role != Role::TextField => {
            issues.push(path.to_string(), format!("element '{element}' on screen '{screen}' is not a text_field"))
        }
        Some(_) => {}
    }
}

fn build_rule(
    ri: usize,
    r: &RuleDoc,
    screens: &BTreeMap<String, ScreenNode>,
    apps: &BTreeMap<String, String>,
    issues: &mut Issues,
) -> Option<TransitionRule> {
    let path = format!("rules[{ri}]");
    let before = issues.0.len();

    let screen = if r.on == TriggerKind::Launch {
        None
    } else {
        let s = require(issues, &path, "screen", &r.screen);
        if let Some(s) = s {
            if !screens.contains_key(s) {
                issues.push(format!("{path}.screen"), format!("unknown screen '{s}'"));
            }
        }
        s
    };

    let trigger = match r.on {
        TriggerKind::Tap => {
            let element = require(issues, &path, "element", &r.element);
            if let (Some(s), Some(e)) = (screen, element) {
                check_element(issues, &format!("{path}.element"), screens, s, e, false);
            }
            screen.zip(element).map(|(s, e)| Trigger::Tap { screen: s.clone(), element: e.clone() })
        }
        TriggerKind::Type => {
            let element = require(issues, &path, "element", &r.element);
            let text = require(issues, &path, "text", &r.text);
            if let (Some(s), Some(e)) = (screen, element) {
                check_element(issues, &format!("{path}.element"), screens, s, e, true);
            }
            match (screen, element, text) {
                (Some(s), Some(e), Some(t)) => Some(Trigger::TypeSubmit { screen: s.clone(), element: e.clone(), equals: t.clone() }),
                _ => None,
            }
        }
        TriggerKind::Swipe => match r.direction {
            Some(d @ (Direction::Left | Direction::Right)) => screen.map(|s| Trigger::Swipe { screen: s.clone(), direction: d }),
            Some(_) => {
                issues.push(format!("{path}.direction"), "up/down scroll the page; only left/right can carry rules");
                None
            }
            None => {
                issues.push(format!("{path}.direction"), "required for this trigger");
                None
            }
        },
        TriggerKind::Launch => {
            let app = require(issues, &path, "app", &r.app);
            if let Some(a) = app {
                if !apps.contains_key(a) {
                    issues.push(format!("{path}.app"), format!("unknown app '{a}'"));
                }
            }
            app.map(|a| Trigger::Launch { app: a.clone() })
        }
    };

    let guard = match r.when.as_deref().map(str::trim) {
        None => None,
        Some("cache_cleared") => Some(Guard::CacheCleared(true)),
        Some("!cache_cleared") => Some(Guard::CacheCleared(false)),
        Some(other) => {
            issues.push(format!("{path}.when"), format!("unknown guard '{other}'"));
            None
        }
    };

    if let Some(target) = &r.goto {
        if !screens.contains_key(target) {
            issues.push(format!("{path}.goto"), format!("unknown screen '{target}'"));
        }
    }
    if let Some(field) = &r.focus {
        let target = r.goto.as_ref().or(screen);
        match target {
            Some(t) => check_element(issues, &format!("{path}.focus"), screens, t, field, true),
            None => issues.push(format!("{path}.focus"), "focus needs a goto or a screen"),
        }
    }
    if r.goto.is_none() && r.focus.is_none() && r.set_cache_cleared.is_none() {
        issues.push(path.clone(), "rule has no effect (goto, focus or set_cache_cleared)");
    }

    if issues.0.len() > before {
        return None;
    }
    Some(TransitionRule {
        trigger: trigger?,
        guard,
        effect: Effect { goto: r.goto.clone(), focus: r.focus.clone(), set_cache_cleared: r.set_cache_cleared },
    })
}

fn build_goal(
    gi: usize,
    g: &GoalDoc,
    screens: &BTreeMap<String, ScreenNode>,
    apps: &BTreeMap<String, String>,
    issues: &mut Issues,
) -> Option<SimGoal> {
    let path = format!("goals[{gi}]");
    let set = [g.reach.is_some(), g.app.is_some(), g.buffer.is_some()].iter().filter(|b| **b).count();
    if set != 1 {
        issues.push(path, "exactly one of reach, app, buffer is required");
        return None;
    }
    let predicate = if let Some(s) = &g.reach {
        if !screens.contains_key(s) {
            issues.push(format!("{path}.reach"), format!("unknown screen '{s}'"));
            return None;
        }
        GoalPredicate::Reach(s.clone())
    } else if let Some(a) = &g.app {
        if !apps.contains_key(a) {
            issues.push(format!("{path}.app"), format!("unknown app '{a}'"));
            return None;
        }
        GoalPredicate::AppForeground(a.clone())
    } else {
        let b = g.buffer.as_ref()?;
        if !screens.contains_key(&b.screen) {
            issues.push(format!("{path}.buffer.screen"), format!("unknown screen '{}'", b.screen));
            return None;
        }
        let before = issues.0.len();
        check_element(issues, &format!("{path}.buffer.element"), screens, &b.screen, &b.element, true);
        if issues.0.len() > before {
            return None;
        }
        GoalPredicate::Buffer { screen: b.screen.clone(), element: b.element.clone(), equals: b.equals.clone() }
    };
    Some(SimGoal { id: g.id.clone(), predicate })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
schema_version = "1"
id = "mini"
start_screen = "home"
screen_w = 100
screen_h = 200

[[apps]]
id = "com.example.settings"
root = "settings"

[[screens]]
id = "home"
[[screens.elements]]
id = "settings_icon"
box = [0.1, 0.1, 0.3, 0.2]
text = "Settings"
role = "icon"

[[screens]]
id = "settings"
app = "com.example.settings"

[[rules]]
on = "tap"
screen = "home"
element = "settings_icon"
goto = "settings"

[[goals]]
id = "open_settings"
reach = "settings"
"#;

    #[test]
    fn loads_minimal_world() {
        let w = World::from_toml_str(MINI).unwrap();
        assert_eq!(w.apps["com.example.settings"], "settings");
        assert_eq!(w.rules.len(), 1);
        assert_eq!(w.goals["open_settings"].predicate, GoalPredicate::Reach("settings".into()));
        assert_eq!(w.digest.len(), 64);
    }

    #[test]
    fn dangling_goto_reports_path() {
        let bad = MINI.replace("goto = \"settings\"", "goto = \"settngs\"");
        match World::from_toml_str(&bad) {
            Err(WorldError::Invalid(issues)) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].path, "rules[0].goto");
                assert!(issues[0].message.contains("settngs"));
            }
            other => panic!("expected invalid world, got {other:?}"),
        }
    }

    #[test]
    fn collects_multiple_issues() {
        let bad = MINI.replace("root = \"settings\"", "root = \"nowhere\"").replace("element = \"settings_icon\"", "element = \"ghost\"");
        let Err(WorldError::Invalid(issues)) = World::from_toml_str(&bad) else { panic!() };
        let paths: Vec<_> = issues.iter().map(|i| i.path.as_str()).collect();
        assert_eq!(paths, vec!["apps[0].root", "rules[0].element"]);
    }

    #[test]
    fn rejects_bad_box_and_schema() {
        let bad = MINI.replace("[0.1, 0.1, 0.3, 0.2]", "[0.4, 0.1, 0.3, 0.2]");
        let Err(WorldError::Invalid(issues)) = World::from_toml_str(&bad) else { panic!() };
        assert_eq!(issues[0].path, "screens[0].elements[0].box");
        let bad = MINI.replace("schema_version = \"1\"", "schema_version = \"2\"");
        assert_eq!(World::from_toml_str(&bad), Err(WorldError::SchemaVersion("2".into())));
    }

    #[test]
    fn type_rule_requires_text_field() {
        let bad = format!("{MINI}\n[[rules]]\non = \"type\"\nscreen = \"home\"\nelement = \"settings_icon\"\ntext = \"x\"\ngoto = \"home\"\n");
        let Err(WorldError::Invalid(issues)) = World::from_toml_str(&bad) else { panic!() };
        assert_eq!(issues[0].path, "rules[1].element");
        assert!(issues[0].message.contains("text_field"));
    }
}
