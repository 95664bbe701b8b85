//! Deterministic simulated GUI device: worlds, state transitions, goals, the
//! BFS oracle, perfect locator and error injectors.

pub mod fixtures;
pub mod inject;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod state;
pub mod world;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use inject::{ErrorInjectionConfig, InjectionComponent, InjectionEvent, InjectionLog, NoisyChatModel, NoisyLocator};
pub use models::{OracleChatModel, PerfectLocator, SimSession};
pub use oracle::{bfs_depth, oracle_policy, perfect_locate, requires_click, shortest_plan, OracleError};
pub use rng::{derive_seed, SplitMix64};
pub use state::{goal_check, render_screen, SimError, SimScreen, WorldState, SIMDESC_TAG};
pub use world::{SimGoal, World, WorldError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("unknown world '{0}'")]
    UnknownWorld(String),
    #[error("unknown goal '{0}'")]
    UnknownGoal(String),
    #[error("goal '{goal}' exists in several worlds ({worlds}); qualify it as world:goal")]
    AmbiguousGoal { goal: String, worlds: String },
    #[error("duplicate world id '{0}'")]
    DuplicateWorld(String),
}

/// The worlds available to a run, keyed by id. Goals are referenced as
/// `world:goal`, or by bare goal id when only one world defines it.
#[derive(Debug, Clone, Default)]
pub struct SimCatalog {
    worlds: BTreeMap<String, Arc<World>>,
    sources: BTreeMap<String, PathBuf>,
}

impl SimCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// The two worlds shipped with the crate.
    pub fn bundled() -> Self {
        let mut c = SimCatalog::new();
        for w in [fixtures::general_apps(), fixtures::webshop()] {
            c.insert(w).expect("bundled world ids are distinct");
        }
        c
    }

    pub fn insert(&mut self, world: World) -> Result<(), CatalogError> {
        if self.worlds.contains_key(&world.id) {
            return Err(CatalogError::DuplicateWorld(world.id));
        }
        self.worlds.insert(world.id.clone(), Arc::new(world));
        Ok(())
    }

    /// Adds a world file; its path is remembered for replay.
    pub fn load_file(&mut self, path: &Path) -> Result<Arc<World>, String> {
        let w = World::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let id = w.id.clone();
        self.insert(w).map_err(|e| e.to_string())?;
        self.sources.insert(id.clone(), path.to_path_buf());
        Ok(self.worlds[&id].clone())
    }

    /// File a world was loaded from; `None` for bundled worlds.
    pub fn source(&self, id: &str) -> Option<&Path> {
        self.sources.get(id).map(PathBuf::as_path)
    }

    pub fn world(&self, id: &str) -> Result<&Arc<World>, CatalogError> {
        self.worlds.get(id).ok_or_else(|| CatalogError::UnknownWorld(id.to_string()))
    }

    pub fn worlds(&self) -> impl Iterator<Item = &Arc<World>> {
        self.worlds.values()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }

    /// Resolves a goal reference to its world and goal.
    pub fn resolve(&self, reference: &str) -> Result<(Arc<World>, SimGoal), CatalogError> {
        if let Some((world, goal)) = reference.split_once(':') {
            let w = self.world(world)?;
            let g = w.goal(goal).ok_or_else(|| CatalogError::UnknownGoal(reference.to_string()))?;
            return Ok((w.clone(), g.clone()));
        }
        let hits: Vec<&Arc<World>> = self.worlds.values().filter(|w| w.goal(reference).is_some()).collect();
        match hits.as_slice() {
            [] => Err(CatalogError::UnknownGoal(reference.to_string())),
            [w] => Ok(((*w).clone(), w.goal(reference).expect("filtered").clone())),
            many => Err(CatalogError::AmbiguousGoal {
                goal: reference.to_string(),
                worlds: many.iter().map(|w| w.id.as_str()).collect::<Vec<_>>().join(", "),
            }),
        }
    }
}
