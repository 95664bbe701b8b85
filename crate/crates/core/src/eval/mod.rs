//! Suites of episodes: task files, repeated runs, success rates, failure
//! attribution, human label import and reports.

pub mod attribution;
pub mod report;
pub mod tasks;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attribution::{attribute_failure, AttributionError, FailureCategory, GroundTruth};
pub use report::{generate_report, Report};
pub use tasks::{ingest_tasks, parse_labels, read_labels, HumanLabel, LabelError, TaskFileError};

pub use crate::config::RunConfig;
use crate::agent::{run_episode, EpisodeMeta};
use crate::config::{LocatorSpec, ModelSpec};
use crate::device::{AdbDevice, Driver, SimDevice};
use crate::gateway::http::{HttpLocator, OpenAiChatClient};
use crate::gateway::{ChatModel, Locator};
use crate::sim::inject::{InjectionComponent, InjectionLog, NoisyChatModel, NoisyLocator, INJECTIONS_FILE};
use crate::sim::{derive_seed, OracleChatModel, PerfectLocator, SimCatalog, SimGoal, SimSession, World};
use crate::trace::{EpisodeTrace, Subset, TaskSpec};

pub const RESULTS_FILE: &str = "results.json";
pub const TRACES_DIR: &str = "traces";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no outcomes to rate")]
    EmptyOutcomes,
    #[error("no results to report")]
    EmptyResults,
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("task '{task}': {message}")]
    Task { task: String, message: String },
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl ToString) -> EvalError {
    EvalError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// 100 · successes / total.
pub fn success_rate(outcomes: &[bool]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyOutcomes);
    }
    Ok(100.0 * outcomes.iter().filter(|s| **s).count() as f64 / outcomes.len() as f64)
}

/// Episode-weighted mean of `(rate, episodes)` pairs.
pub fn pool_rates(parts: &[(f64, usize)]) -> Result<f64, EvalError> {
    let n: usize = parts.iter().map(|(_, k)| k).sum();
    if n == 0 {
        return Err(EvalError::EmptyOutcomes);
    }
    Ok(parts.iter().map(|(r, k)| r * *k as f64).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task_id: String,
    pub subset: Subset,
    pub run_index: usize,
    pub seed: u64,
    /// `success`, `budget_exhausted` or `error`.
    pub outcome: String,
    /// Whether the goal predicate held at the end; `None` without a simulator.
    pub goal_met: Option<bool>,
    /// Scored result: a success verdict confirmed by the goal, or a human label.
    pub success: bool,
    pub steps: usize,
    pub total_ms: u64,
    pub category: Option<FailureCategory>,
    /// Earliest injected error, if any.
    pub injected: Option<InjectionComponent>,
    pub human_label: bool,
    pub trace_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub episodes: usize,
    pub successes: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub label: String,
    pub config_fingerprint: String,
    pub repeats: usize,
    /// Sorted by task id, then run index.
    pub episodes: Vec<EpisodeRecord>,
    pub subsets: BTreeMap<String, SubsetStats>,
    pub overall: f64,
    pub mean_task_seconds: f64,
    pub failure_counts: BTreeMap<FailureCategory, usize>,
    /// Failed episodes without a category.
    pub unattributed: usize,
}

impl SuiteResult {
    pub fn from_episodes(label: impl Into<String>, config_fingerprint: impl Into<String>, repeats: usize, mut episodes: Vec<EpisodeRecord>) -> Result<SuiteResult, EvalError> {
        if episodes.is_empty() {
            return Err(EvalError::EmptyOutcomes);
        }
        episodes.sort_by(|a, b| (&a.task_id, a.run_index).cmp(&(&b.task_id, b.run_index)));
        let mut by_subset: BTreeMap<String, Vec<bool>> = BTreeMap::new();
        for e in &episodes {
            by_subset.entry(e.subset.label().to_string()).or_default().push(e.success);
        }
        let subsets = by_subset
            .into_iter()
            .map(|(k, v)| {
                let rate = success_rate(&v).expect("non-empty group");
                (k, SubsetStats { episodes: v.len(), successes: v.iter().filter(|s| **s).count(), rate })
            })
            .collect();
        let all: Vec<bool> = episodes.iter().map(|e| e.success).collect();
        let overall = success_rate(&all)?;
        let mean_task_seconds = episodes.iter().map(|e| e.total_ms as f64 / 1000.0).sum::<f64>() / episodes.len() as f64;
        let mut failure_counts = BTreeMap::new();
        let mut unattributed = 0;
        for e in episodes.iter().filter(|e| !e.success) {
            match e.category {
                Some(c) => *failure_counts.entry(c).or_insert(0) += 1,
                None => unattributed += 1,
            }
        }
        Ok(SuiteResult {
            label: label.into(),
            config_fingerprint: config_fingerprint.into(),
            repeats,
            episodes,
            subsets,
            overall,
            mean_task_seconds,
            failure_counts,
            unattributed,
        })
    }

    pub fn subset_rate(&self, subset: &Subset) -> Option<f64> {
        self.subsets.get(subset.label()).map(|s| s.rate)
    }

    /// Applies human labels, which override the automatic scoring.
    pub fn import_human_labels(&self, labels: &[HumanLabel]) -> Result<SuiteResult, EvalError> {
        let mut episodes = self.episodes.clone();
        for l in labels {
            let e = episodes
                .iter_mut()
                .find(|e| e.task_id == l.task_id && e.run_index == l.run)
                .ok_or_else(|| LabelError::UnknownTaskId { task_id: l.task_id.clone(), run: l.run })?;
            e.success = l.success;
            e.human_label = true;
            e.category = if l.success { None } else { l.category.or(e.category) };
        }
        SuiteResult::from_episodes(self.label.clone(), self.config_fingerprint.clone(), self.repeats, episodes)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("results serialize");
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| io_err(path, e))
    }

    /// Reads `results.json` from a file or an output directory.
    pub fn read_json(path: &Path) -> Result<SuiteResult, EvalError> {
        let file = if path.is_dir() { path.join(RESULTS_FILE) } else { path.to_path_buf() };
        let bytes = std::fs::read(&file).map_err(|e| io_err(&file, e))?;
        serde_json::from_slice(&bytes).map_err(|e| io_err(&file, e))
    }
}

/// Where and how a suite runs, beyond the config file.
#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub label: String,
    /// Traces go to `<out_dir>/traces/<task>/<run>/`; `None` records nothing.
    pub out_dir: Option<PathBuf>,
    pub catalog: SimCatalog,
}

impl SuiteOptions {
    pub fn new(label: impl Into<String>) -> Self {
        SuiteOptions { label: label.into(), out_dir: None, catalog: SimCatalog::bundled() }
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    pub fn with_catalog(mut self, catalog: SimCatalog) -> Self {
        self.catalog = catalog;
        self
    }
}

/// Catalog with the config's extra worlds added to the bundled ones.
pub fn catalog_for(cfg: &RunConfig) -> Result<SimCatalog, EvalError> {
    let mut c = SimCatalog::bundled();
    for w in &cfg.device.worlds {
        c.load_file(w).map_err(EvalError::Config)?;
    }
    Ok(c)
}

/// Shared HTTP clients, built once per suite.
#[derive(Clone, Default)]
pub struct Backends {
    pub mllm: Option<Arc<dyn ChatModel>>,
    pub locator: Option<Arc<dyn Locator>>,
}

impl Backends {
    pub fn from_config(cfg: &RunConfig) -> Result<Backends, EvalError> {
        let mllm: Option<Arc<dyn ChatModel>> = match &cfg.mllm {
            ModelSpec::Oracle => None,
            ModelSpec::Http(ep) => Some(Arc::new(OpenAiChatClient::new(ep.clone()).map_err(|e| EvalError::Config(e.to_string()))?)),
        };
        let locator: Option<Arc<dyn Locator>> = match &cfg.locator {
            LocatorSpec::Perfect => None,
            LocatorSpec::Http(ep) => Some(Arc::new(HttpLocator::new(ep.clone()).map_err(|e| EvalError::Config(e.to_string()))?)),
        };
        Ok(Backends { mllm, locator })
    }
}

struct SimTarget {
    world: Arc<World>,
    goal: SimGoal,
    source: Option<String>,
}

fn sim_target(catalog: &SimCatalog, task: &TaskSpec) -> Result<SimTarget, EvalError> {
    let reference = task.sim_goal.as_deref().ok_or_else(|| EvalError::Task { task: task.id.clone(), message: "no sim goal for the sim driver".into() })?;
    let (world, goal) = catalog.resolve(reference).map_err(|e| EvalError::Task { task: task.id.clone(), message: e.to_string() })?;
    let source = catalog.source(&world.id).map(|p| p.display().to_string());
    Ok(SimTarget { world, goal, source })
}

/// Runs one episode of `task` as run `run_index` of the suite.
pub fn run_task_episode(
    task: &TaskSpec,
    run_index: usize,
    cfg: &RunConfig,
    backends: &Backends,
    opts: &SuiteOptions,
) -> Result<(EpisodeRecord, EpisodeTrace), EvalError> {
    let seed = derive_seed(cfg.run.seed, &task.id, run_index);
    let prompts = cfg.prompt_bundle().map_err(|e| EvalError::Config(e.to_string()))?;
    let mut loop_cfg = cfg.loop_config();
    loop_cfg.record_dir = opts.out_dir.as_ref().map(|d| d.join(TRACES_DIR));
    let meta = EpisodeMeta { config_fingerprint: cfg.fingerprint(), seed, run_index, reset_cache: cfg.cache_reset_scope() };
    let task_err = |m: String| EvalError::Task { task: task.id.clone(), message: m };

    match cfg.device.driver {
        Driver::Adb => {
            let serial = cfg.device.serial.clone().ok_or_else(|| task_err("device.serial is required for adb".into()))?;
            let mllm = backends.mllm.clone().ok_or_else(|| task_err("adb runs need an http mllm".into()))?;
            let locator = backends.locator.clone().ok_or_else(|| task_err("adb runs need an http locator".into()))?;
            let mut dev = AdbDevice::connect_default(&serial).map_err(|e| task_err(e.to_string()))?;
            let run = run_episode(task, &mut dev, &mllm, &locator, &loop_cfg, &prompts, &meta).map_err(|e| task_err(e.to_string()))?;
            let t = run.trace;
            let record = EpisodeRecord {
                task_id: task.id.clone(),
                subset: task.subset.clone(),
                run_index,
                seed,
                outcome: t.outcome.label().to_string(),
                goal_met: None,
                success: t.outcome.is_success(),
                steps: t.steps.len(),
                total_ms: t.total_ms,
                category: None,
                injected: None,
                human_label: false,
                trace_dir: run.dir.as_ref().map(|d| relative_dir(opts.out_dir.as_deref(), d)),
            };
            Ok((record, t))
        }
        Driver::Sim => {
            let target = sim_target(&opts.catalog, task)?;
            let session = SimSession::new(target.world.clone(), seed);
            let mut dev = SimDevice::new(session.clone());
            if let Some(src) = &target.source {
                dev = dev.with_source(src.clone());
            }
            let mllm: Arc<dyn ChatModel> = match &backends.mllm {
                Some(m) => m.clone(),
                None => Arc::new(OracleChatModel::new(session.clone(), target.goal.clone())),
            };
            let locator: Arc<dyn Locator> = match &backends.locator {
                Some(l) => l.clone(),
                None => Arc::new(PerfectLocator),
            };
            let injection = cfg.injection.clone().filter(|i| i.is_active());
            let log = InjectionLog::new();
            let (mllm, locator): (Arc<dyn ChatModel>, Arc<dyn Locator>) = match &injection {
                Some(inj) => (
                    Arc::new(NoisyChatModel::new(mllm, inj.clone(), seed, log.clone()).with_app_candidates(target.world.apps.keys().cloned().collect())),
                    Arc::new(NoisyLocator::new(locator, inj, seed, log.clone())),
                ),
                None => (mllm, locator),
            };
            let run = run_episode(task, &mut dev, &mllm, &locator, &loop_cfg, &prompts, &meta).map_err(|e| task_err(e.to_string()))?;
            if let (Some(dir), Some(_)) = (&run.dir, &injection) {
                let path = dir.join(INJECTIONS_FILE);
                log.write_jsonl(&path).map_err(|e| io_err(&path, e))?;
            }
            let t = run.trace;
            let goal_met = session.goal_holds(&target.goal);
            let success = t.outcome.is_success() && goal_met;
            let category = if success {
                None
            } else {
                let truth = if log.is_empty() {
                    GroundTruth::Oracle { world: &target.world, goal: &target.goal }
                } else {
                    GroundTruth::Injections(&log)
                };
                attribute_failure(&t, truth).ok()
            };
            let record = EpisodeRecord {
                task_id: task.id.clone(),
                subset: task.subset.clone(),
                run_index,
                seed,
                outcome: t.outcome.label().to_string(),
                goal_met: Some(goal_met),
                success,
                steps: t.steps.len(),
                total_ms: t.total_ms,
                category,
                injected: log.first().map(|e| e.component),
                human_label: false,
                trace_dir: run.dir.as_ref().map(|d| relative_dir(opts.out_dir.as_deref(), d)),
            };
            Ok((record, t))
        }
    }
}

fn relative_dir(root: Option<&Path>, dir: &Path) -> String {
    root.and_then(|r| dir.strip_prefix(r).ok()).unwrap_or(dir).display().to_string()
}

/// Runs every task `cfg.run.repeats` times, up to `cfg.run.parallel`
/// episodes at once. Results are independent of the degree of parallelism.
pub fn run_suite(tasks: &[TaskSpec], cfg: &RunConfig, opts: &SuiteOptions) -> Result<SuiteResult, EvalError> {
    cfg.validate().map_err(|e| EvalError::Config(e.to_string()))?;
    if tasks.is_empty() {
        return Err(EvalError::EmptyOutcomes);
    }
    if cfg.device.driver == Driver::Sim {
        for t in tasks {
            sim_target(&opts.catalog, t)?;
        }
    }
    let backends = Backends::from_config(cfg)?;
    let jobs: Vec<(&TaskSpec, usize)> = tasks.iter().flat_map(|t| (0..cfg.run.repeats).map(move |r| (t, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.run.parallel).build().map_err(|e| EvalError::Config(e.to_string()))?;
    let records: Result<Vec<EpisodeRecord>, EvalError> =
        pool.install(|| jobs.par_iter().map(|(t, r)| run_task_episode(t, *r, cfg, &backends, opts).map(|(rec, _)| rec)).collect());
    let result = SuiteResult::from_episodes(opts.label.clone(), cfg.fingerprint(), cfg.run.repeats, records?)?;
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        result.write_json(&dir.join(RESULTS_FILE))?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, subset: Subset, success: bool, category: Option<FailureCategory>) -> EpisodeRecord {
        EpisodeRecord {
            task_id: id.into(),
            subset,
            run_index: 0,
            seed: 0,
            outcome: if success { "success".into() } else { "budget_exhausted".into() },
            goal_met: Some(success),
            success,
            steps: 1,
            total_ms: 2000,
            category,
            injected: None,
            human_label: false,
            trace_dir: None,
        }
    }

    #[test]
    fn rates() {
        assert_eq!(success_rate(&[true, true, false, true]).unwrap(), 75.0);
        assert_eq!(success_rate(&[false, false]).unwrap(), 0.0);
        assert_eq!(success_rate(&[true]).unwrap(), 100.0);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn pooled_overall() {
        let p = pool_rates(&[(72.5, 432), (75.8, 154)]).unwrap();
        assert!((p - 73.367).abs() < 0.001);
        assert_eq!(format!("{p:.1}"), "73.4");
    }

    #[test]
    fn suite_result_aggregates_and_labels_override() {
        let eps = vec![
            rec("a", Subset::General, true, None),
            rec("b", Subset::General, false, Some(FailureCategory::Locator)),
            rec("c", Subset::WebShopping, true, None),
            rec("d", Subset::WebShopping, true, None),
        ];
        let r = SuiteResult::from_episodes("x", "fp", 1, eps).unwrap();
        assert_eq!(r.subset_rate(&Subset::General), Some(50.0));
        assert_eq!(r.overall, 75.0);
        assert_eq!(r.mean_task_seconds, 2.0);
        assert_eq!(r.failure_counts[&FailureCategory::Locator], 1);
        let labels = [HumanLabel { task_id: "d".into(), run: 0, success: false, category: Some(FailureCategory::Reflection) }];
        let l = r.import_human_labels(&labels).unwrap();
        assert_eq!(l.overall, 50.0);
        assert_eq!(l.failure_counts[&FailureCategory::Reflection], 1);
        let unknown = [HumanLabel { task_id: "zz".into(), run: 0, success: true, category: None }];
        assert!(matches!(r.import_human_labels(&unknown), Err(EvalError::Labels(LabelError::UnknownTaskId { .. }))));
        assert_eq!(r.import_human_labels(&[]).unwrap(), r);
    }

    #[test]
    fn oracle_suite_is_perfect() {
        let tasks = vec![
            TaskSpec::new("g1", Subset::General, "Open Settings").with_goal("open_settings"),
            TaskSpec::new("g2", Subset::General, "Open network settings").with_goal("network_settings"),
            TaskSpec::new("w1", Subset::WebShopping, "Open the shop app orders").with_goal("shopapp_orders"),
            TaskSpec::new("w2", Subset::WebShopping, "Open the shopping cart").with_goal("open_cart"),
        ];
        let r = run_suite(&tasks, &RunConfig::sim_oracle(), &SuiteOptions::new("oracle")).unwrap();
        assert_eq!(r.episodes.len(), 12);
        assert_eq!(r.subset_rate(&Subset::General), Some(100.0));
        assert_eq!(r.subset_rate(&Subset::WebShopping), Some(100.0));
        assert_eq!(r.overall, 100.0);
    }
}
