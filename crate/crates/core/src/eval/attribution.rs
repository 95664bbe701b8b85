//! First-cause failure attribution.
//!
//! With an injection log the earliest injected error names the component
//! (ties within a step: decision, then locator, then reflection). With an
//! oracle the trace is re-executed on the world and the first step whose
//! action, box or verdict departs from ground truth names it. A failure with
//! no departure within the budget is `budget_only`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::agent::{apply_recorded, initial_state};
use crate::device::Driver;
use crate::sim::inject::{InjectionComponent, InjectionLog};
use crate::sim::models::oracle_action;
use crate::sim::oracle::perfect_locate;
use crate::sim::state::{describe_screen, goal_check};
use crate::sim::world::{SimGoal, World};
use crate::trace::EpisodeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    Reflection,
    Locator,
    Decision,
    BudgetOnly,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 4] = [FailureCategory::Reflection, FailureCategory::Locator, FailureCategory::Decision, FailureCategory::BudgetOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::Reflection => "reflection",
            FailureCategory::Locator => "locator",
            FailureCategory::Decision => "decision",
            FailureCategory::BudgetOnly => "budget_only",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown failure category {s:?}"))
    }
}

impl From<InjectionComponent> for FailureCategory {
    fn from(c: InjectionComponent) -> Self {
        match c {
            InjectionComponent::Decision => FailureCategory::Decision,
            InjectionComponent::Locator => FailureCategory::Locator,
            InjectionComponent::Reflection => FailureCategory::Reflection,
        }
    }
}

pub enum GroundTruth<'a> {
    Injections(&'a InjectionLog),
    Oracle { world: &'a World, goal: &'a SimGoal },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttributionError {
    #[error("no ground truth for this trace; attribution needs human labels")]
    AttributionUnavailable,
}

pub fn attribute_failure(trace: &EpisodeTrace, truth: GroundTruth<'_>) -> Result<FailureCategory, AttributionError> {
    if trace.device.driver != Driver::Sim {
        return Err(AttributionError::AttributionUnavailable);
    }
    match truth {
        GroundTruth::Injections(log) => log.first().map(|e| e.component.into()).ok_or(AttributionError::AttributionUnavailable),
        GroundTruth::Oracle { world, goal } => Ok(oracle_divergence(trace, world, goal)),
    }
}

fn oracle_divergence(trace: &EpisodeTrace, world: &World, goal: &SimGoal) -> FailureCategory {
    let mut state = initial_state(world, trace);
    for step in &trace.steps {
        if step.action != oracle_action(world, &state, goal) {
            return FailureCategory::Decision;
        }
        if let Action::Click { ui_command } = &step.action {
            let expected = perfect_locate(&describe_screen(world, &state), ui_command).ok();
            if step.locator_box != expected {
                return FailureCategory::Locator;
            }
        }
        state = apply_recorded(world, state, step);
        if step.verdict.is_success() != goal_check(world, &state, goal) {
            return FailureCategory::Reflection;
        }
    }
    FailureCategory::BudgetOnly
}
