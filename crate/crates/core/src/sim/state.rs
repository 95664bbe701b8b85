use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::world::{Element, Effect, GoalPredicate, Guard, Role, ScreenNode, SimGoal, Trigger, World};
use crate::action::Direction;
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no focused text field")]
    NoFocusedField,
    #[error("app '{0}' is not installed")]
    UnknownApp(String),
}

/// Buffers are keyed `"<screen>/<element>"`.
pub fn buffer_key(screen: &str, element: &str) -> String {
    format!("{screen}/{element}")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldState {
    pub current_screen: String,
    pub scroll_page: usize,
    pub focused_field: Option<String>,
    pub buffers: BTreeMap<String, String>,
    pub installed_apps: BTreeMap<String, String>,
    pub cache_cleared: bool,
    pub rng_seed: u64,
}

impl WorldState {
    pub fn initial(world: &World, rng_seed: u64) -> Self {
        WorldState {
            current_screen: world.start_screen.clone(),
            scroll_page: 0,
            focused_field: None,
            buffers: BTreeMap::new(),
            installed_apps: world.apps.clone(),
            cache_cleared: false,
            rng_seed,
        }
    }

    pub fn screen<'w>(&self, world: &'w World) -> &'w ScreenNode {
        world.screen(&self.current_screen).expect("state always points at a screen of its world")
    }

    pub fn buffer(&self, screen: &str, element: &str) -> &str {
        self.buffers.get(&buffer_key(screen, element)).map(String::as_str).unwrap_or("")
    }

    pub fn foreground_app<'w>(&self, world: &'w World) -> Option<&'w str> {
        self.screen(world).app.as_deref()
    }

    fn guard_holds(&self, guard: Option<Guard>) -> bool {
        match guard {
            None => true,
            Some(Guard::CacheCleared(want)) => self.cache_cleared == want,
        }
    }

    fn apply_effect(&mut self, effect: &Effect) {
        if let Some(flag) = effect.set_cache_cleared {
            self.cache_cleared = flag;
        }
        if let Some(target) = &effect.goto {
            self.current_screen = target.clone();
            self.scroll_page = 0;
            self.focused_field = None;
        }
        if let Some(field) = &effect.focus {
            self.focused_field = Some(field.clone());
        }
    }

    fn fire_first(&mut self, world: &World, matches: impl Fn(&Trigger) -> bool) -> bool {
        let rule = world.rules.iter().find(|r| matches(&r.trigger) && self.guard_holds(r.guard));
        match rule {
            Some(r) => {
                self.apply_effect(&r.effect);
                true
            }
            None => false,
        }
    }

    /// Hit-tests `p` against the visible page. Overlapping elements are tried
    /// smallest first (ties by id); the first with a live tap rule fires.
    pub fn apply_tap(&self, world: &World, p: Point) -> WorldState {
        let (nx, ny) = p.normalized();
        let screen = self.screen(world);
        let mut hits: Vec<&Element> = screen.visible(self.scroll_page).filter(|e| e.bbox.contains(nx, ny)).collect();
        hits.sort_by(|a, b| area(a).total_cmp(&area(b)).then_with(|| a.id.cmp(&b.id)));
        let mut next = self.clone();
        for hit in hits {
            let fired = next.fire_first(world, |t| matches!(t, Trigger::Tap { screen, element } if *screen == self.current_screen && *element == hit.id));
            if fired {
                break;
            }
        }
        next
    }

    /// Up/down page through the screen (clamped); left/right only act through rules.
    pub fn apply_swipe(&self, world: &World, direction: Direction) -> WorldState {
        let mut next = self.clone();
        let pages = self.screen(world).page_count;
        match direction {
            Direction::Up => next.scroll_page = (self.scroll_page + 1).min(pages - 1),
            Direction::Down => next.scroll_page = self.scroll_page.saturating_sub(1),
            Direction::Left | Direction::Right => {
                next.fire_first(world, |t| matches!(t, Trigger::Swipe { screen, direction: d } if *screen == self.current_screen && *d == direction));
                return next;
            }
        }
        if next.scroll_page != self.scroll_page {
            if let Some(field) = &next.focused_field {
                let still_visible = next.screen(world).element(field).is_some_and(|e| e.page == next.scroll_page);
                if !still_visible {
                    next.focused_field = None;
                }
            }
        }
        next
    }

    /// Appends to the focused field, then fires the first type rule whose
    /// expected text equals the new buffer.
    pub fn apply_type(&self, world: &World, text: &str) -> Result<WorldState, SimError> {
        let field = self.focused_field.clone().ok_or(SimError::NoFocusedField)?;
        let mut next = self.clone();
        let key = buffer_key(&self.current_screen, &field);
        let buffer = next.buffers.entry(key).or_default();
        buffer.push_str(text);
        let value = buffer.clone();
        next.fire_first(world, |t| {
            matches!(t, Trigger::TypeSubmit { screen, element, equals } if *screen == self.current_screen && *element == field && *equals == value)
        });
        Ok(next)
    }

    pub fn apply_launch(&self, world: &World, app: &str) -> Result<WorldState, SimError> {
        let root = self.installed_apps.get(app).ok_or_else(|| SimError::UnknownApp(app.to_string()))?;
        let mut next = self.clone();
        let fired = next.fire_first(world, |t| matches!(t, Trigger::Launch { app: a } if a == app));
        if !fired {
            next.current_screen = root.clone();
            next.scroll_page = 0;
            next.focused_field = None;
        }
        Ok(next)
    }

    pub fn with_cache_cleared(&self) -> WorldState {
        WorldState { cache_cleared: true, ..self.clone() }
    }
}

fn area(e: &Element) -> f64 {
    (e.bbox.x2() - e.bbox.x1()) * (e.bbox.y2() - e.bbox.y1())
}

pub fn goal_check(world: &World, state: &WorldState, goal: &SimGoal) -> bool {
    match &goal.predicate {
        GoalPredicate::Reach(screen) => state.current_screen == *screen,
        GoalPredicate::Buffer { screen, element, equals } => state.buffer(screen, element) == equals,
        GoalPredicate::AppForeground(app) => state.foreground_app(world) == Some(app.as_str()),
    }
}

/// Canonical screen description: the "screenshot" of the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScreen {
    pub format: String,
    pub world: String,
    pub screen: String,
    pub page: usize,
    pub page_count: usize,
    pub focus: Option<String>,
    pub elements: Vec<SimElement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimElement {
    pub id: String,
    pub role: Role,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

pub const SIMDESC_FORMAT: &str = "simdesc/1";
pub const SIMDESC_TAG: &str = "simdesc";

impl SimScreen {
    pub fn parse(bytes: &[u8]) -> Option<SimScreen> {
        serde_json::from_slice::<SimScreen>(bytes).ok().filter(|s| s.format == SIMDESC_FORMAT)
    }
}

pub fn describe_screen(world: &World, state: &WorldState) -> SimScreen {
    let screen = state.screen(world);
    let mut elements: Vec<SimElement> = screen
        .visible(state.scroll_page)
        .map(|e| SimElement {
            id: e.id.clone(),
            role: e.role,
            bbox: e.bbox.as_array(),
            text: e.text.clone(),
            value: (e.role == Role::TextField).then(|| state.buffer(&screen.id, &e.id).to_string()),
        })
        .collect();
    elements.sort_by(|a, b| a.id.cmp(&b.id));
    SimScreen {
        format: SIMDESC_FORMAT.to_string(),
        world: world.id.clone(),
        screen: screen.id.clone(),
        page: state.scroll_page,
        page_count: screen.page_count,
        focus: state.focused_field.clone(),
        elements,
    }
}

/// Byte-deterministic serialization of the visible page, elements sorted by id.
pub fn render_screen(world: &World, state: &WorldState) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(&describe_screen(world, state)).expect("simdesc serializes");
    bytes.push(b'\n');
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fixtures;

    fn general() -> World {
        fixtures::general_apps()
    }

    fn center_of(world: &World, state: &WorldState, element: &str) -> Point {
        let e = state.screen(world).element(element).unwrap();
        crate::geometry::bbox_center(&e.bbox, world.screen_w, world.screen_h).unwrap()
    }

    #[test]
    fn tap_icon_opens_screen() {
        let w = general();
        let s = WorldState::initial(&w, 0);
        let next = s.apply_tap(&w, center_of(&w, &s, "settings_icon"));
        assert_eq!(next.current_screen, "settings_root");
    }

    #[test]
    fn tap_dead_space_is_noop() {
        let w = general();
        let s = WorldState::initial(&w, 0);
        let p = Point::new(540, 1900, w.screen_w, w.screen_h).unwrap();
        assert_eq!(s.apply_tap(&w, p), s);
    }

    #[test]
    fn swipe_clamps_pages() {
        let w = general();
        let s = WorldState::initial(&w, 0).apply_launch(&w, "com.android.settings").unwrap();
        assert_eq!(s.screen(&w).page_count, 3);
        let down = s.apply_swipe(&w, Direction::Down);
        assert_eq!(down.scroll_page, 0);
        let one = s.apply_swipe(&w, Direction::Up);
        assert_eq!(one.scroll_page, 1);
        let two = one.apply_swipe(&w, Direction::Up);
        assert_eq!(two.scroll_page, 2);
        assert_eq!(two.apply_swipe(&w, Direction::Up).scroll_page, 2);
    }

    #[test]
    fn typing_requires_focus_and_fires_rules() {
        let w = general();
        let s = WorldState::initial(&w, 0).apply_launch(&w, "com.android.chrome").unwrap();
        assert_eq!(s.apply_type(&w, "x"), Err(SimError::NoFocusedField));
        let focused = s.apply_tap(&w, center_of(&w, &s, "url_bar"));
        assert_eq!(focused.focused_field.as_deref(), Some("url_bar"));
        let partial = focused.apply_type(&w, "news").unwrap();
        assert_eq!(partial.current_screen, "chrome_start");
        assert_eq!(partial.buffer("chrome_start", "url_bar"), "news");
        let done = focused.apply_type(&w, "news.google.com").unwrap();
        assert_eq!(done.current_screen, "chrome_news");
    }

    #[test]
    fn launch_unknown_app() {
        let w = general();
        let s = WorldState::initial(&w, 0);
        assert_eq!(s.apply_launch(&w, "com.nope"), Err(SimError::UnknownApp("com.nope".into())));
    }

    #[test]
    fn popup_gating_follows_cache_flag() {
        let w = fixtures::webshop();
        let s = WorldState::initial(&w, 0);
        assert_eq!(s.apply_launch(&w, "com.android.chrome").unwrap().current_screen, "browser_start");
        let cleared = s.with_cache_cleared();
        let popup = cleared.apply_launch(&w, "com.android.chrome").unwrap();
        assert_eq!(popup.current_screen, "chrome_welcome");
        let accepted = popup.apply_tap(&w, center_of(&w, &popup, "accept"));
        assert_eq!(accepted.current_screen, "browser_start");
        assert!(!accepted.cache_cleared);
    }

    #[test]
    fn goal_checks() {
        let w = general();
        let s = WorldState::initial(&w, 0);
        let settings = s.apply_launch(&w, "com.android.settings").unwrap();
        let reach = SimGoal { id: "g".into(), predicate: GoalPredicate::Reach("settings_root".into()) };
        assert!(goal_check(&w, &settings, &reach));
        assert!(!goal_check(&w, &s, &reach));
        let app = SimGoal { id: "a".into(), predicate: GoalPredicate::AppForeground("com.android.settings".into()) };
        assert!(goal_check(&w, &settings, &app));
        let mut typed = s.clone();
        typed.buffers.insert(buffer_key("gmail_compose", "to_field"), "hell".into());
        let buf = SimGoal {
            id: "b".into(),
            predicate: GoalPredicate::Buffer { screen: "gmail_compose".into(), element: "to_field".into(), equals: "hello".into() },
        };
        assert!(!goal_check(&w, &typed, &buf));
    }

    #[test]
    fn rendering_is_canonical() {
        let w = general();
        let s = WorldState::initial(&w, 0);
        assert_eq!(render_screen(&w, &s), render_screen(&w, &s.clone()));
        let settings = s.apply_launch(&w, "com.android.settings").unwrap();
        let scrolled = settings.apply_swipe(&w, Direction::Up);
        assert_ne!(render_screen(&w, &settings), render_screen(&w, &scrolled));
        let desc = SimScreen::parse(&render_screen(&w, &s)).unwrap();
        let ids: Vec<_> = desc.elements.iter().map(|e| e.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(desc.screen, "home");
    }
}
