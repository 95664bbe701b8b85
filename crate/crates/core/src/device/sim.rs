//! Device driver over a simulated world.

use std::sync::Arc;

use super::{Device, DeviceError, DeviceInfo, Driver};
use crate::action::Direction;
use crate::geometry::Point;
use crate::sim::models::SimSession;
use crate::sim::state::{render_screen, SimError, SIMDESC_TAG};
use crate::sim::world::World;
use crate::trace::Observation;

impl From<SimError> for DeviceError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NoFocusedField => DeviceError::NoFocusedField,
            SimError::UnknownApp(a) => DeviceError::UnknownApp(a),
        }
    }
}

pub struct SimDevice {
    session: SimSession,
    info: DeviceInfo,
}

impl SimDevice {
    pub fn new(session: SimSession) -> Self {
        let w = session.world();
        let info = DeviceInfo {
            driver: Driver::Sim,
            screen_w: w.screen_w,
            screen_h: w.screen_h,
            serial_or_world_id: w.id.clone(),
            source: None,
        };
        SimDevice { session, info }
    }

    /// A fresh session on `world` seeded with `seed`.
    pub fn open(world: Arc<World>, seed: u64) -> Self {
        SimDevice::new(SimSession::new(world, seed))
    }

    /// Records the world file path in the device info so traces can be replayed.
    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.info.source = Some(source.into());
        self
    }

    pub fn session(&self) -> &SimSession {
        &self.session
    }
}

impl Device for SimDevice {
    fn info(&self) -> &DeviceInfo {
        &self.info
    }

    fn capture_screenshot(&mut self) -> Result<Observation, DeviceError> {
        let bytes = render_screen(self.session.world(), &self.session.state());
        Ok(Observation::new(bytes, SIMDESC_TAG, self.info.screen_w, self.info.screen_h, 0))
    }

    fn tap(&mut self, p: Point) -> Result<(), DeviceError> {
        self.session.update::<DeviceError>(|w, s| Ok(s.apply_tap(w, p)))
    }

    fn swipe(&mut self, direction: Direction) -> Result<(), DeviceError> {
        self.session.update::<DeviceError>(|w, s| Ok(s.apply_swipe(w, direction)))
    }

    fn type_text(&mut self, text: &str) -> Result<(), DeviceError> {
        self.session.update(|w, s| s.apply_type(w, text).map_err(DeviceError::from))
    }

    fn list_apps(&mut self) -> Result<Vec<String>, DeviceError> {
        Ok(self.session.state().installed_apps.keys().cloned().collect())
    }

    fn launch_app(&mut self, app_id: &str) -> Result<(), DeviceError> {
        self.session.update(|w, s| s.apply_launch(w, app_id).map_err(DeviceError::from))
    }

    fn reset_cache(&mut self, _scope: &[String]) -> Result<(), DeviceError> {
        self.session.update::<DeviceError>(|_, s| Ok(s.with_cache_cleared()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fixtures;

    fn dev() -> SimDevice {
        SimDevice::open(Arc::new(fixtures::general_apps()), 0)
    }

    #[test]
    fn capture_is_deterministic() {
        let (mut a, mut b) = (dev(), dev());
        let (oa, ob) = (a.capture_screenshot().unwrap(), b.capture_screenshot().unwrap());
        assert_eq!(oa.bytes, ob.bytes);
        assert_eq!(oa.format_tag, "simdesc");
        assert_eq!((oa.screen_w, oa.screen_h), (a.info().screen_w, a.info().screen_h));
    }

    #[test]
    fn dead_space_tap_is_noop_and_launch_goes_to_root() {
        let mut d = dev();
        let before = d.session().state();
        d.tap(Point::new(1079, 1919, 1080, 1920).unwrap()).unwrap();
        assert_eq!(d.session().state(), before);
        d.launch_app("com.android.settings").unwrap();
        assert_eq!(d.session().state().current_screen, "settings_root");
        assert_eq!(d.launch_app("com.nope"), Err(DeviceError::UnknownApp("com.nope".into())));
    }

    #[test]
    fn typing_without_focus_and_sorted_apps() {
        let mut d = dev();
        assert_eq!(d.type_text("hi"), Err(DeviceError::NoFocusedField));
        let apps = d.list_apps().unwrap();
        let mut sorted = apps.clone();
        sorted.sort();
        assert_eq!(apps, sorted);
        assert_eq!(apps.len(), 4);
    }
}
