//! Runtime for screenshot-driven GUI agents.
//!
//! A multimodal chat model decides the next action (click, type, open app,
//! swipe) from the current screenshot and the action history; a separate
//! locator model turns click commands into bounding boxes; after every action
//! the chat model reflects on the new screen and the episode stops on a
//! success verdict or when the step budget runs out.
//!
//! Devices are Android phones driven through `adb` or a deterministic
//! simulated world, which also supplies oracle models and seeded error
//! injectors for desk-scale evaluation.

pub mod action;
pub mod agent;
pub mod cli;
pub mod config;
pub mod device;
pub mod eval;
pub mod gateway;
pub mod geometry;
pub mod sim;
pub mod trace;

pub use action::{parse_decision, render_action, Action, Direction};
pub use geometry::{bbox_center, BoundingBox, Point};
pub use trace::{EpisodeTrace, Observation, Outcome, Step, TaskSpec, Verdict};
