//! Run configuration file (TOML).
//!
//! ```toml
//! [run]
//! scenario = "cache_removal"      # or "no_cache_removal"
//! repeats = 3
//! seed = 0
//! parallel = 4
//!
//! [device]
//! driver = "sim"                  # or "adb"
//! serial = "emulator-5554"        # adb only
//! worlds = ["worlds/extra.toml"]  # sim worlds in addition to the bundled ones
//! cache_scope = ["com.android.chrome"]
//!
//! [mllm]
//! backend = "oracle"              # or "http" with the endpoint fields below
//! # base_url = "http://localhost:8000/v1"
//! # model_name = "InternVL2-76B"
//! # timeout_ms = 60000
//! # max_retries = 2
//! # temperature = 0.0
//!
//! [locator]
//! backend = "perfect"             # or "http"; box_format = "normalized_box" | "pixel_box" | "normalized_point"
//!
//! [injection]                     # optional, sim only
//! locator_miss_prob = 0.5
//! seed = 1
//!
//! [loop]
//! max_steps = 20
//! per_step_timeout_ms = 120000
//! clock = { mode = "virtual", decide_ms = 4000 }   # default: virtual for sim, wall for adb
//!
//! [prompts]
//! dir = "prompts"                 # overrides for the bundled templates
//! ocr_anchoring = true
//! ```
//!
//! Relative paths resolve against the config file's directory. `MLLM_BASE_URL`,
//! `MLLM_API_KEY` and `LOCATOR_BASE_URL` override the corresponding endpoint
//! fields of `http` backends.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{ClockConfig, LoopConfig, PhaseCosts, DEFAULT_MAX_STEPS};
use crate::device::adb::DEFAULT_CACHE_SCOPE;
use crate::device::Driver;
use crate::gateway::http::{ENV_LOCATOR_BASE_URL, ENV_MLLM_API_KEY, ENV_MLLM_BASE_URL};
use crate::gateway::{EndpointConfig, PromptBundle, PromptError, Secret};
use crate::sim::ErrorInjectionConfig;
use crate::trace::sha256_hex;

pub const DEFAULT_REPEATS: usize = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Clear the cache before every episode so first-run popups appear.
    #[default]
    CacheRemoval,
    NoCacheRemoval,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::CacheRemoval => "cache_removal",
            Scenario::NoCacheRemoval => "no_cache_removal",
        }
    }
}

fn default_repeats() -> usize {
    DEFAULT_REPEATS
}

fn default_parallel() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    /// Episodes run concurrently; not part of the fingerprint.
    #[serde(default = "default_parallel", skip_serializing)]
    pub parallel: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { scenario: Scenario::default(), repeats: DEFAULT_REPEATS, seed: 0, parallel: 1 }
    }
}

fn default_driver() -> Driver {
    Driver::Sim
}

fn default_cache_scope() -> Vec<String> {
    DEFAULT_CACHE_SCOPE.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    #[serde(default = "default_driver")]
    pub driver: Driver,
    #[serde(default)]
    pub serial: Option<String>,
    #[serde(default)]
    pub worlds: Vec<PathBuf>,
    #[serde(default = "default_cache_scope")]
    pub cache_scope: Vec<String>,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection { driver: Driver::Sim, serial: None, worlds: Vec::new(), cache_scope: default_cache_scope() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum ModelSpec {
    /// BFS decisions and truthful reflection over the simulated world.
    #[default]
    Oracle,
    Http(EndpointConfig),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum LocatorSpec {
    /// Exact boxes read from the simulator's screen description.
    #[default]
    Perfect,
    Http(EndpointConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSection {
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub per_step_timeout_ms: Option<u64>,
    #[serde(default)]
    pub clock: Option<ClockConfig>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub ocr_anchoring: bool,
}

impl Default for PromptSection {
    fn default() -> Self {
        PromptSection { dir: None, ocr_anchoring: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub device: DeviceSection,
    #[serde(default)]
    pub mllm: ModelSpec,
    #[serde(default)]
    pub locator: LocatorSpec,
    #[serde(default)]
    pub injection: Option<ErrorInjectionConfig>,
    #[serde(default, rename = "loop")]
    pub loop_: LoopSection,
    #[serde(default)]
    pub prompts: PromptSection,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Oracle models on the simulator with default settings.
    pub fn sim_oracle() -> Self {
        RunConfig::default()
    }

    pub fn from_toml_str(source: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for w in &mut cfg.device.worlds {
            *w = resolve(base_dir, w);
        }
        if let Some(d) = &cfg.prompts.dir {
            cfg.prompts.dir = Some(resolve(base_dir, d));
        }
        Ok(cfg)
    }

    /// Reads the file, applies the environment overlay and validates.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = RunConfig::from_toml_str(&source, base)?;
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let ModelSpec::Http(ep) = &mut self.mllm {
            if let Some(url) = get(ENV_MLLM_BASE_URL).filter(|v| !v.is_empty()) {
                ep.base_url = url;
            }
            if let Some(key) = get(ENV_MLLM_API_KEY).filter(|v| !v.is_empty()) {
                ep.api_key = Some(Secret::new(key));
            }
        }
        if let LocatorSpec::Http(ep) = &mut self.locator {
            if let Some(url) = get(ENV_LOCATOR_BASE_URL).filter(|v| !v.is_empty()) {
                ep.base_url = url;
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.run.repeats == 0 {
            return bad("run.repeats must be at least 1".into());
        }
        if self.run.parallel == 0 {
            return bad("run.parallel must be at least 1".into());
        }
        self.loop_config().validate().map_err(ConfigError::Invalid)?;
        if let Some(inj) = &self.injection {
            inj.validate().map_err(|m| ConfigError::Invalid(format!("injection: {m}")))?;
        }
        if let ModelSpec::Http(ep) = &self.mllm {
            ep.validate().map_err(|m| ConfigError::Invalid(format!("mllm: {m}")))?;
        }
        if let LocatorSpec::Http(ep) = &self.locator {
            ep.validate().map_err(|m| ConfigError::Invalid(format!("locator: {m}")))?;
        }
        if self.device.driver == Driver::Adb {
            if matches!(self.mllm, ModelSpec::Oracle) || matches!(self.locator, LocatorSpec::Perfect) {
                return bad("oracle and perfect backends need the sim driver".into());
            }
            if self.injection.as_ref().is_some_and(ErrorInjectionConfig::is_active) {
                return bad("error injection needs the sim driver".into());
            }
        }
        Ok(())
    }

    /// Loop settings with driver-dependent defaults filled in.
    pub fn loop_config(&self) -> LoopConfig {
        let clock = self.loop_.clock.unwrap_or(match self.device.driver {
            Driver::Sim => ClockConfig::Virtual(PhaseCosts::default()),
            Driver::Adb => ClockConfig::Wall,
        });
        LoopConfig {
            max_steps: self.loop_.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
            per_step_timeout_ms: self.loop_.per_step_timeout_ms,
            record_dir: None,
            clock,
        }
    }

    pub fn prompt_bundle(&self) -> Result<PromptBundle, ConfigError> {
        Ok(match &self.prompts.dir {
            Some(dir) => PromptBundle::load_dir(dir, self.prompts.ocr_anchoring)?,
            None => PromptBundle::default().with_anchoring(self.prompts.ocr_anchoring),
        })
    }

    pub fn cache_reset_scope(&self) -> Option<Vec<String>> {
        match self.run.scenario {
            Scenario::CacheRemoval => Some(self.device.cache_scope.clone()),
            Scenario::NoCacheRemoval => None,
        }
    }

    /// sha256 of the canonical JSON form. API keys and `run.parallel` are
    /// never serialized and so never affect it.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        sha256_hex(&json)
    }
}
