//! The worlds shipped with the crate, embedded at compile time.

use super::world::World;

pub const GENERAL_APPS_TOML: &str = include_str!("../../assets/worlds/general_apps.toml");
pub const WEBSHOP_TOML: &str = include_str!("../../assets/worlds/webshop.toml");

/// Settings, Gmail, Clock and Chrome on a launcher home screen.
pub fn general_apps() -> World {
    World::from_toml_str(GENERAL_APPS_TOML).expect("bundled general-apps world is valid")
}

/// A browser and a shop app whose first launch after a cache reset shows a popup.
pub fn webshop() -> World {
    World::from_toml_str(WEBSHOP_TOML).expect("bundled webshop world is valid")
}

/// (file name, source) for every bundled world.
pub fn bundled_sources() -> [(&'static str, &'static str); 2] {
    [("general_apps.toml", GENERAL_APPS_TOML), ("webshop.toml", WEBSHOP_TOML)]
}
