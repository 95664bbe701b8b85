//! The device contract and its two drivers: a phone behind `adb`, and the
//! simulated world.

pub mod adb;
pub mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Direction;
use crate::geometry::{GeometryError, Point};
use crate::trace::Observation;

pub use adb::{AdbDevice, CommandRunner, ProcessRunner, RecordingRunner};
pub use sim::SimDevice;

/// Swipes last this long.
pub const SWIPE_DURATION_MS: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Adb,
    Sim,
}

impl Driver {
    pub fn as_str(self) -> &'static str {
        match self {
            Driver::Adb => "adb",
            Driver::Sim => "sim",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub driver: Driver,
    pub screen_w: u32,
    pub screen_h: u32,
    pub serial_or_world_id: String,
    /// World file a sim session was loaded from; `None` for bundled worlds and phones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("device unreachable: {0}")]
    Unreachable(String),
    #[error("screen capture returned no data")]
    EmptyCapture,
    #[error("no focused text field")]
    NoFocusedField,
    #[error("app '{0}' is not installed")]
    UnknownApp(String),
    #[error("text {0:?} contains characters that cannot be sent safely through the shell")]
    UnsafeText(String),
    #[error("invalid gesture: {0}")]
    InvalidGesture(#[from] GeometryError),
    #[error("device command failed: {0}")]
    Command(String),
}

impl DeviceError {
    /// Errors recorded on the step while the episode continues.
    pub fn is_step_local(&self) -> bool {
        matches!(self, DeviceError::NoFocusedField | DeviceError::UnknownApp(_) | DeviceError::UnsafeText(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureSpec {
    pub from: Point,
    pub to: Point,
    pub duration_ms: u64,
}

/// Vertical swipes travel between 2/3 and 1/3 of the height at mid-width;
/// horizontal swipes between 5/6 and 1/6 of the width at mid-height. "Up"
/// moves the finger upward so the content scrolls up.
pub fn swipe_geometry(direction: Direction, screen_w: u32, screen_h: u32) -> Result<GestureSpec, GeometryError> {
    if screen_w == 0 || screen_h == 0 {
        return Err(GeometryError::EmptyScreen);
    }
    let (w, h) = (screen_w, screen_h);
    let (cx, cy) = (w / 2, h / 2);
    let (lower, upper) = (2 * h / 3, h / 3);
    let (right, left) = (5 * w / 6, w / 6);
    let ((x1, y1), (x2, y2)) = match direction {
        Direction::Up => ((cx, lower), (cx, upper)),
        Direction::Down => ((cx, upper), (cx, lower)),
        Direction::Left => ((right, cy), (left, cy)),
        Direction::Right => ((left, cy), (right, cy)),
    };
    Ok(GestureSpec { from: Point::new(x1, y1, w, h)?, to: Point::new(x2, y2, w, h)?, duration_ms: SWIPE_DURATION_MS })
}

/// One device session. Sessions are used by a single episode at a time.
pub trait Device: Send {
    fn info(&self) -> &DeviceInfo;
    fn capture_screenshot(&mut self) -> Result<Observation, DeviceError>;
    fn tap(&mut self, p: Point) -> Result<(), DeviceError>;
    fn swipe(&mut self, direction: Direction) -> Result<(), DeviceError>;
    fn type_text(&mut self, text: &str) -> Result<(), DeviceError>;
    /// Sorted, de-duplicated app ids.
    fn list_apps(&mut self) -> Result<Vec<String>, DeviceError>;
    fn launch_app(&mut self, app_id: &str) -> Result<(), DeviceError>;
    fn reset_cache(&mut self, scope: &[String]) -> Result<(), DeviceError>;
}

impl<D: Device + ?Sized> Device for Box<D> {
    fn info(&self) -> &DeviceInfo {
        (**self).info()
    }
    fn capture_screenshot(&mut self) -> Result<Observation, DeviceError> {
        (**self).capture_screenshot()
    }
    fn tap(&mut self, p: Point) -> Result<(), DeviceError> {
        (**self).tap(p)
    }
    fn swipe(&mut self, direction: Direction) -> Result<(), DeviceError> {
        (**self).swipe(direction)
    }
    fn type_text(&mut self, text: &str) -> Result<(), DeviceError> {
        (**self).type_text(text)
    }
    fn list_apps(&mut self) -> Result<Vec<String>, DeviceError> {
        (**self).list_apps()
    }
    fn launch_app(&mut self, app_id: &str) -> Result<(), DeviceError> {
        (**self).launch_app(app_id)
    }
    fn reset_cache(&mut self, scope: &[String]) -> Result<(), DeviceError> {
        (**self).reset_cache(scope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(g: GestureSpec) -> ((u32, u32), (u32, u32), u64) {
        ((g.from.x(), g.from.y()), (g.to.x(), g.to.y()), g.duration_ms)
    }

    #[test]
    fn swipe_geometry_on_1080x1920() {
        assert_eq!(pts(swipe_geometry(Direction::Up, 1080, 1920).unwrap()), ((540, 1280), (540, 640), 300));
        assert_eq!(pts(swipe_geometry(Direction::Down, 1080, 1920).unwrap()), ((540, 640), (540, 1280), 300));
        assert_eq!(pts(swipe_geometry(Direction::Left, 1080, 1920).unwrap()), ((900, 960), (180, 960), 300));
        assert_eq!(pts(swipe_geometry(Direction::Right, 1080, 1920).unwrap()), ((180, 960), (900, 960), 300));
    }

    #[test]
    fn swipe_geometry_tiny_screens_stay_in_bounds() {
        for d in Direction::ALL {
            swipe_geometry(d, 1, 1).unwrap();
            swipe_geometry(d, 7, 3).unwrap();
        }
        assert_eq!(swipe_geometry(Direction::Up, 0, 10), Err(GeometryError::EmptyScreen));
    }
}
