//! Scripted model doubles for tests and examples.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use super::{ChatModel, ChatRequest, GatewayError, Locator, Purpose};
use crate::action::UiCommand;
use crate::geometry::BoundingBox;
use crate::trace::Observation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedCall {
    pub purpose: Purpose,
    pub attempt: u32,
    pub prompt: String,
    pub had_image: bool,
}

/// Replies from per-purpose FIFO queues and records every request.
/// An exhausted queue answers with a transport error.
#[derive(Debug, Default)]
pub struct ScriptedChatModel {
    queues: Mutex<BTreeMap<PurposeKey, VecDeque<String>>>,
    calls: Mutex<Vec<RecordedCall>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PurposeKey(u8);

impl From<Purpose> for PurposeKey {
    fn from(p: Purpose) -> Self {
        PurposeKey(p as u8)
    }
}

impl ScriptedChatModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(self, purpose: Purpose, reply: impl Into<String>) -> Self {
        self.queues.lock().unwrap().entry(purpose.into()).or_default().push_back(reply.into());
        self
    }

    pub fn decision(self, reply: impl Into<String>) -> Self {
        self.push(Purpose::Decision, reply)
    }

    pub fn reflection(self, reply: impl Into<String>) -> Self {
        self.push(Purpose::Reflection, reply)
    }

    pub fn app_select(self, reply: impl Into<String>) -> Self {
        self.push(Purpose::AppSelect, reply)
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn remaining(&self, purpose: Purpose) -> usize {
        self.queues.lock().unwrap().get(&purpose.into()).map_or(0, VecDeque::len)
    }
}

impl ChatModel for ScriptedChatModel {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, GatewayError> {
        self.calls.lock().unwrap().push(RecordedCall {
            purpose: req.purpose,
            attempt: req.attempt,
            prompt: req.prompt.to_string(),
            had_image: req.image.is_some(),
        });
        self.queues
            .lock()
            .unwrap()
            .get_mut(&req.purpose.into())
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| GatewayError::Transport { attempts: 1, message: format!("script exhausted for {:?}", req.purpose) })
    }
}

/// Fixed command → box table.
#[derive(Debug, Default, Clone)]
pub struct ScriptedLocator {
    table: BTreeMap<String, BoundingBox>,
}

impl ScriptedLocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, command: impl Into<String>, bbox: BoundingBox) -> Self {
        self.table.insert(command.into(), bbox);
        self
    }
}

impl Locator for ScriptedLocator {
    fn locate(&self, _obs: &Observation, command: &UiCommand) -> Result<BoundingBox, GatewayError> {
        self.table.get(command.as_str()).copied().ok_or_else(|| GatewayError::ElementNotFound(command.to_string()))
    }
}
