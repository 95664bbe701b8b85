//! Oracle stand-ins for the three model roles, driven by the live world state.

use std::sync::{Arc, Mutex};

use super::oracle::{oracle_policy, perfect_locate_bytes, successors, LocateError};
use super::state::{goal_check, WorldState};
use super::world::{SimGoal, World};
use crate::action::{render_action, Action, Direction, UiCommand};
use crate::gateway::{ChatModel, ChatRequest, GatewayError, Locator, Purpose};
use crate::geometry::BoundingBox;
use crate::trace::Observation;

/// A world plus the state shared by a simulated device and the oracle models
/// of one episode.
#[derive(Debug, Clone)]
pub struct SimSession {
    world: Arc<World>,
    state: Arc<Mutex<WorldState>>,
}

impl SimSession {
    pub fn new(world: Arc<World>, seed: u64) -> Self {
        let state = WorldState::initial(&world, seed);
        SimSession { world, state: Arc::new(Mutex::new(state)) }
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn state(&self) -> WorldState {
        self.state.lock().unwrap().clone()
    }

    pub fn set_state(&self, state: WorldState) {
        *self.state.lock().unwrap() = state;
    }

    pub fn update<T>(&self, f: impl FnOnce(&World, &WorldState) -> Result<WorldState, T>) -> Result<(), T> {
        let mut guard = self.state.lock().unwrap();
        let next = f(&self.world, &guard)?;
        *guard = next;
        Ok(())
    }

    pub fn goal_holds(&self, goal: &SimGoal) -> bool {
        goal_check(&self.world, &self.state.lock().unwrap(), goal)
    }
}

/// The action the oracle takes in `state`: the first step of a shortest plan,
/// or, once the goal holds, a move that keeps it satisfied. Falls back to the
/// first available move (or a swipe) when the goal cannot be reached.
pub fn oracle_action(world: &World, state: &WorldState, goal: &SimGoal) -> Action {
    let moves = successors(world, state);
    if goal_check(world, state, goal) {
        if let Some((a, _)) = moves.iter().find(|(_, next)| goal_check(world, next, goal)) {
            return a.clone();
        }
    } else if let Ok(Some(a)) = oracle_policy(world, state, goal) {
        return a;
    }
    moves.into_iter().next().map(|(a, _)| a).unwrap_or(Action::swipe(Direction::Down))
}

/// Decides with BFS, reflects with `goal_check`, and answers app selection
/// with the requested app.
#[derive(Debug, Clone)]
pub struct OracleChatModel {
    session: SimSession,
    goal: SimGoal,
}

impl OracleChatModel {
    pub fn new(session: SimSession, goal: SimGoal) -> Self {
        OracleChatModel { session, goal }
    }
}

impl ChatModel for OracleChatModel {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, GatewayError> {
        let world = self.session.world();
        let state = self.session.state();
        Ok(match req.purpose {
            Purpose::Decision => render_action(&oracle_action(world, &state, &self.goal)),
            Purpose::Reflection => {
                if goal_check(world, &state, &self.goal) {
                    format!("STATUS: SUCCESS\nGoal '{}' holds.", self.goal.id)
                } else {
                    format!("STATUS: FAILURE\nGoal '{}' does not hold yet.", self.goal.id)
                }
            }
            Purpose::AppSelect => match req.app_hint {
                Some(hint) => hint.to_string(),
                None => req.app_list.first().cloned().ok_or(GatewayError::EmptyAppList)?,
            },
        })
    }
}

/// Reads the named element's box out of a `simdesc` observation.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectLocator;

impl Locator for PerfectLocator {
    fn locate(&self, obs: &Observation, command: &UiCommand) -> Result<BoundingBox, GatewayError> {
        perfect_locate_bytes(&obs.bytes, command).map_err(|e| match e {
            LocateError::ElementNotFound(c) => GatewayError::ElementNotFound(c),
            LocateError::NotSimdesc => GatewayError::MalformedBox("observation is not a simulator screen".into()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{decide, reflect, PromptBundle};
    use crate::sim::fixtures;
    use crate::sim::state::{render_screen, SIMDESC_TAG};
    use crate::trace::{Subset, TaskSpec, Verdict};

    #[test]
    fn oracle_decides_and_reflects_truthfully() {
        let world = Arc::new(fixtures::general_apps());
        let goal = world.goal("open_settings").unwrap().clone();
        let session = SimSession::new(world.clone(), 0);
        let model = OracleChatModel::new(session.clone(), goal);
        let task = TaskSpec::new("t", Subset::General, "Open settings");
        let obs = Observation::new(render_screen(&world, &session.state()), SIMDESC_TAG, 1080, 1920, 0);
        let p = PromptBundle::default();
        let d = decide(&model, &p, &task, "h", &obs).unwrap();
        assert!(matches!(d.action, Action::Click { .. } | Action::OpenApp { .. }));
        let r = reflect(&model, &p, &task, "h", &obs).unwrap();
        assert_eq!(r.verdict.status, Verdict::failure("").status);
        let launched = session.state().apply_launch(&world, "com.android.settings").unwrap();
        session.set_state(launched);
        assert!(reflect(&model, &p, &task, "h", &obs).unwrap().verdict.is_success());
    }

    #[test]
    fn perfect_locator_requires_simdesc() {
        let obs = Observation::new(b"\x89PNG".to_vec(), "png", 10, 10, 0);
        let cmd = UiCommand::new("tap on element 'Settings'").unwrap();
        assert!(matches!(PerfectLocator.locate(&obs, &cmd), Err(GatewayError::MalformedBox(_))));
    }
}
