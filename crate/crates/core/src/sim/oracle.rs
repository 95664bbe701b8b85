//! Breadth-first oracle over a world's transition graph, and the perfect
//! locator that reads element boxes straight out of a screen description.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use super::state::{goal_check, SimScreen, WorldState};
use super::world::{Role, SimGoal, World};
use crate::action::{render_action, Action, Direction, UiCommand};
use crate::geometry::{bbox_center, BoundingBox};

/// Depth bound for the search; the shipped worlds need at most 6.
pub const MAX_PLAN_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("goal '{0}' is unreachable from the current state")]
    Unreachable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocateError {
    #[error("no visible element matches {0:?}")]
    ElementNotFound(String),
    #[error("observation is not a simulator screen description")]
    NotSimdesc,
}

/// Command the oracle uses to click an element: its label when that is
/// unambiguous on the page, otherwise its id.
pub fn click_command(world: &World, state: &WorldState, element_id: &str) -> String {
    let screen = state.screen(world);
    let element = screen.element(element_id).expect("element on current screen");
    let label = element.text.trim();
    let unique = !label.is_empty()
        && !label.contains('\'')
        && screen.visible(state.scroll_page).filter(|e| e.text.trim() == label).count() == 1;
    let name = if unique { label } else { element_id };
    format!("tap on element '{name}'")
}

/// Every action worth trying from `state`, paired with its successor, sorted
/// by canonical rendering. Actions that leave the state unchanged are dropped.
pub fn successors(world: &World, state: &WorldState) -> Vec<(Action, WorldState)> {
    let mut out = Vec::new();
    let screen = state.screen(world);
    for e in screen.visible(state.scroll_page) {
        let Ok(p) = bbox_center(&e.bbox, world.screen_w, world.screen_h) else { continue };
        let next = state.apply_tap(world, p);
        if next != *state {
            if let Ok(a) = Action::click(click_command(world, state, &e.id)) {
                out.push((a, next));
            }
        }
    }
    if let Some(field) = &state.focused_field {
        let current = state.buffer(&state.current_screen, field);
        for text in world.typing_candidates() {
            let grown = format!("{current}{text}");
            // buffers only grow, so anything that is not a prefix of a checked text is a dead end
            if !world.typing_candidates().iter().any(|c| c.starts_with(&grown)) {
                continue;
            }
            if let (Ok(next), Ok(a)) = (state.apply_type(world, &text), Action::type_text(&text)) {
                out.push((a, next));
            }
        }
    }
    for app in state.installed_apps.keys() {
        if let (Ok(next), Ok(a)) = (state.apply_launch(world, app), Action::open_app(app)) {
            if next != *state {
                out.push((a, next));
            }
        }
    }
    for d in Direction::ALL {
        let next = state.apply_swipe(world, d);
        if next != *state {
            out.push((Action::swipe(d), next));
        }
    }
    out.sort_by_cached_key(|(a, _)| render_action(a));
    out
}

/// Shortest action sequence reaching `goal`, restricted to actions accepted by
/// `allow`. Among shortest plans the one with the lexicographically smallest
/// rendered first action is returned (FIFO order preserves expansion order).
pub fn shortest_plan_filtered(
    world: &World,
    start: &WorldState,
    goal: &SimGoal,
    allow: impl Fn(&Action) -> bool,
) -> Result<Vec<Action>, OracleError> {
    if goal_check(world, start, goal) {
        return Ok(Vec::new());
    }
    let mut parent: HashMap<WorldState, (WorldState, Action)> = HashMap::new();
    let mut depth: HashMap<WorldState, usize> = HashMap::new();
    let mut queue = VecDeque::from([start.clone()]);
    depth.insert(start.clone(), 0);
    while let Some(state) = queue.pop_front() {
        let d = depth[&state];
        if d >= MAX_PLAN_DEPTH {
            continue;
        }
        for (action, next) in successors(world, &state) {
            if !allow(&action) || depth.contains_key(&next) {
                continue;
            }
            depth.insert(next.clone(), d + 1);
            parent.insert(next.clone(), (state.clone(), action));
            if goal_check(world, &next, goal) {
                let mut plan = Vec::new();
                let mut cursor = next;
                while let Some((prev, a)) = parent.get(&cursor) {
                    plan.push(a.clone());
                    cursor = prev.clone();
                }
                plan.reverse();
                return Ok(plan);
            }
            queue.push_back(next);
        }
    }
    Err(OracleError::Unreachable(goal.id.clone()))
}

pub fn shortest_plan(world: &World, start: &WorldState, goal: &SimGoal) -> Result<Vec<Action>, OracleError> {
    shortest_plan_filtered(world, start, goal, |_| true)
}

/// First action of a shortest plan; `None` when the goal already holds.
pub fn oracle_policy(world: &World, state: &WorldState, goal: &SimGoal) -> Result<Option<Action>, OracleError> {
    Ok(shortest_plan(world, state, goal)?.into_iter().next())
}

pub fn bfs_depth(world: &World, state: &WorldState, goal: &SimGoal) -> Result<usize, OracleError> {
    shortest_plan(world, state, goal).map(|p| p.len())
}

/// True when the goal cannot be reached without at least one click.
pub fn requires_click(world: &World, state: &WorldState, goal: &SimGoal) -> bool {
    shortest_plan_filtered(world, state, goal, |a| !a.is_click()).is_err()
}

/// Name referenced by a click command: the quoted part if any, else the
/// command with a leading "tap on element"/"click on" stripped.
fn referenced_name(command: &str) -> &str {
    if let (Some(start), Some(end)) = (command.find('\''), command.rfind('\'')) {
        if end > start + 1 {
            return &command[start + 1..end];
        }
    }
    let lower = command.to_ascii_lowercase();
    for prefix in ["tap on element", "click on the", "click on", "tap on the", "tap on", "tap", "click"] {
        if lower.starts_with(prefix) {
            return command[prefix.len()..].trim().trim_end_matches('.');
        }
    }
    command.trim()
}

/// Box of the visible element named by the command (id first, then exact label).
pub fn perfect_locate(screen: &SimScreen, command: &UiCommand) -> Result<BoundingBox, LocateError> {
    let name = referenced_name(command.as_str());
    let hit = screen
        .elements
        .iter()
        .find(|e| e.id == name)
        .or_else(|| screen.elements.iter().find(|e| !e.text.is_empty() && e.text == name))
        .or_else(|| screen.elements.iter().find(|e| !e.text.is_empty() && e.text.eq_ignore_ascii_case(name)))
        .ok_or_else(|| LocateError::ElementNotFound(command.as_str().to_string()))?;
    let [x1, y1, x2, y2] = hit.bbox;
    BoundingBox::new(x1, y1, x2, y2).map_err(|_| LocateError::ElementNotFound(command.as_str().to_string()))
}

pub fn perfect_locate_bytes(bytes: &[u8], command: &UiCommand) -> Result<BoundingBox, LocateError> {
    let screen = SimScreen::parse(bytes).ok_or(LocateError::NotSimdesc)?;
    perfect_locate(&screen, command)
}

/// Text fields visible on a screen description, for sanity checks in tests.
pub fn visible_fields(screen: &SimScreen) -> impl Iterator<Item = &str> {
    screen.elements.iter().filter(|e| e.role == Role::TextField).map(|e| e.id.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fixtures;
    use crate::sim::state::render_screen;
    use crate::sim::world::GoalPredicate;

    const TWO_NODE: &str = r#"
schema_version = "1"
id = "two-node"
start_screen = "home"
screen_w = 1080
screen_h = 1920

[[screens]]
id = "home"
[[screens.elements]]
id = "settings_icon"
box = [0.1, 0.1, 0.3, 0.2]
text = "Settings"
role = "icon"

[[screens]]
id = "settings_root"

[[screens]]
id = "island"

[[rules]]
on = "tap"
screen = "home"
element = "settings_icon"
goto = "settings_root"

[[goals]]
id = "settings"
reach = "settings_root"

[[goals]]
id = "island"
reach = "island"
"#;

    const SCROLL: &str = r#"
schema_version = "1"
id = "scroll"
start_screen = "list"
screen_w = 1080
screen_h = 1920

[[screens]]
id = "list"
pages = 2
[[screens.elements]]
id = "far_item"
page = 1
box = [0.1, 0.5, 0.9, 0.6]
text = "Far item"
role = "list_item"

[[screens]]
id = "detail"

[[rules]]
on = "tap"
screen = "list"
element = "far_item"
goto = "detail"

[[goals]]
id = "page_one"
reach = "detail"
"#;

    #[test]
    fn one_hop_world_clicks_settings() {
        let w = World::from_toml_str(TWO_NODE).unwrap();
        let s = WorldState::initial(&w, 0);
        let a = oracle_policy(&w, &s, w.goal("settings").unwrap()).unwrap();
        assert_eq!(a, Some(Action::click("tap on element 'Settings'").unwrap()));
    }

    #[test]
    fn goal_on_second_page_swipes_first() {
        let w = World::from_toml_str(SCROLL).unwrap();
        let s = WorldState::initial(&w, 0);
        let plan = shortest_plan(&w, &s, w.goal("page_one").unwrap()).unwrap();
        assert_eq!(plan, vec![Action::swipe(Direction::Up), Action::click("tap on element 'Far item'").unwrap()]);
    }

    #[test]
    fn unreachable_goal() {
        let w = World::from_toml_str(TWO_NODE).unwrap();
        let s = WorldState::initial(&w, 0);
        assert_eq!(oracle_policy(&w, &s, w.goal("island").unwrap()), Err(OracleError::Unreachable("island".into())));
    }

    #[test]
    fn satisfied_goal_has_no_action() {
        let w = World::from_toml_str(TWO_NODE).unwrap();
        let mut s = WorldState::initial(&w, 0);
        s.current_screen = "settings_root".into();
        assert_eq!(oracle_policy(&w, &s, w.goal("settings").unwrap()), Ok(None));
    }

    #[test]
    fn perfect_locator_reads_element_table() {
        let w = fixtures::general_apps();
        let s = WorldState::initial(&w, 0);
        let screen = SimScreen::parse(&render_screen(&w, &s)).unwrap();
        let cmd = UiCommand::new("tap on element 'Settings'").unwrap();
        let b = perfect_locate(&screen, &cmd).unwrap();
        let e = s.screen(&w).element("settings_icon").unwrap();
        assert_eq!(b, e.bbox);
        let by_id = perfect_locate(&screen, &UiCommand::new("tap on element 'gmail_icon'").unwrap()).unwrap();
        assert_eq!(by_id, s.screen(&w).element("gmail_icon").unwrap().bbox);
        let err = perfect_locate(&screen, &UiCommand::new("tap on element 'Nowhere'").unwrap());
        assert!(matches!(err, Err(LocateError::ElementNotFound(_))));
    }

    #[test]
    fn fixture_goal_depths() {
        // Expected depths were worked out by hand from the world files; the
        // search must agree with every one of them.
        let general = fixtures::general_apps();
        let expected = [
            ("open_settings", 1),
            ("gmail_foreground", 1),
            ("network_settings", 2),
            ("read_meeting_email", 2),
            ("timer_tab", 2),
            ("dark_theme", 3),
            ("open_news", 3),
            ("start_timer", 3),
            ("reply_meeting", 3),
            ("wifi_settings", 3),
            ("about_phone", 4),
            ("compose_to_alice", 4),
            ("forget_homenet", 6),
            ("add_language", 6),
        ];
        let s = WorldState::initial(&general, 0);
        for (goal, depth) in expected {
            assert_eq!(bfs_depth(&general, &s, general.goal(goal).unwrap()), Ok(depth), "general-apps goal {goal}");
        }
        assert_eq!(general.goals.len(), expected.len());

        let shop = fixtures::webshop();
        let expected = [
            ("chrome_foreground", 1, 1),
            ("shop_app_foreground", 1, 1),
            ("shopapp_orders", 2, 3),
            ("shop_site_home", 3, 4),
            ("shopapp_search_headphones", 3, 4),
            ("browse_headphones", 4, 5),
            ("headphones_product", 5, 6),
            ("usb_results", 5, 6),
            ("daily_deals", 5, 6),
            ("laptop_product", 5, 6),
            ("open_cart", 5, 6),
            ("shopapp_account", 2, 3),
        ];
        let s = WorldState::initial(&shop, 0);
        let cleared = s.with_cache_cleared();
        for (goal, plain, with_popup) in expected {
            let g = shop.goal(goal).unwrap();
            assert_eq!(bfs_depth(&shop, &s, g), Ok(plain), "webshop goal {goal}");
            assert_eq!(bfs_depth(&shop, &cleared, g), Ok(with_popup), "webshop goal {goal} after cache reset");
        }
        assert_eq!(shop.goals.len(), expected.len());
    }

    #[test]
    fn click_requirement() {
        let w = fixtures::general_apps();
        let s = WorldState::initial(&w, 0);
        assert!(!requires_click(&w, &s, w.goal("gmail_foreground").unwrap()));
        assert!(requires_click(&w, &s, w.goal("open_news").unwrap()));
        let g = w.goal("compose_to_alice").unwrap();
        assert!(matches!(g.predicate, GoalPredicate::Buffer { .. }));
        assert!(requires_click(&w, &s, g));
    }
}
