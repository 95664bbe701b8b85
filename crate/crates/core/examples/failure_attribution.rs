//! Injects decision, locator and reflection errors into oracle episodes and
//! attributes each failure, once from the injection log and once by
//! re-executing the trace against the oracle.
//!
//! ```bash
//! cargo run --release --example failure_attribution
//! ```

use std::path::PathBuf;

use tapwise::config::RunConfig;
use tapwise::eval::report::breakdown;
use tapwise::eval::{attribute_failure, ingest_tasks, run_task_episode, Backends, FailureCategory, GroundTruth, SuiteOptions, SuiteResult};
use tapwise::sim::{ErrorInjectionConfig, SimCatalog};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets");
    let tasks = ingest_tasks(&assets.join("tasks/all.tsv"))?;
    let catalog = SimCatalog::bundled();

    let mut cfg = RunConfig::sim_oracle();
    cfg.injection = Some(ErrorInjectionConfig {
        locator_miss_prob: 0.3,
        reflection_false_success_prob: 0.1,
        reflection_false_failure_prob: 0.2,
        decision_wrong_action_prob: 0.15,
        seed: 99,
    });
    let opts = SuiteOptions::new("injected");
    let backends = Backends::default();

    let mut records = Vec::new();
    let (mut agree, mut failed) = (0, 0);
    println!("{:<14} {:>3}  {:<16} {:<12} {:<12}", "task", "run", "loop outcome", "injected", "oracle route");
    for task in &tasks {
        for run in 0..2 {
            let (rec, trace) = run_task_episode(task, run, &cfg, &backends, &opts)?;
            if !rec.success {
                failed += 1;
                let (world, goal) = catalog.resolve(task.sim_goal.as_deref().unwrap_or_default())?;
                let by_oracle = attribute_failure(&trace, GroundTruth::Oracle { world: &world, goal: &goal })?;
                if Some(by_oracle) == rec.category {
                    agree += 1;
                }
                let injected = rec.injected.map(|c| c.as_str()).unwrap_or("-");
                println!("{:<14} {run:>3}  {:<16} {injected:<12} {by_oracle:<12}", task.id, rec.outcome);
            }
            records.push(rec);
        }
    }

    let result = SuiteResult::from_episodes("injected", cfg.fingerprint(), 2, records)?;
    println!("\n{failed} failed episodes, routes agree on {agree}");
    for c in FailureCategory::ALL {
        println!("  {c:<12} {}", result.failure_counts.get(&c).copied().unwrap_or(0));
    }
    if let Some([r, l, d]) = breakdown(&result) {
        println!("breakdown: reflection {r:.1}%  locator {l:.1}%  decision {d:.1}%");
    }
    Ok(())
}
