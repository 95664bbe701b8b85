//! Sweeps the locator miss probability over the click-requiring fixture
//! tasks with the oracle decision model. A miss taps dead space, so the agent
//! loses a step; with a budget of six steps that is often fatal.
//!
//! ```bash
//! cargo run --release --example locator_miss_sweep
//! ```

use std::path::PathBuf;

use tapwise::config::RunConfig;
use tapwise::eval::{ingest_tasks, run_suite, SuiteOptions};
use tapwise::sim::{requires_click, SimCatalog, WorldState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets");
    let base = RunConfig::load(&assets.join("configs/locator_miss.toml"))?;
    let catalog = SimCatalog::bundled();
    let tasks: Vec<_> = ingest_tasks(&assets.join("tasks/all.tsv"))?
        .into_iter()
        .filter(|t| {
            let (w, g) = catalog.resolve(t.sim_goal.as_deref().unwrap_or_default()).expect("fixture goal");
            requires_click(&w, &WorldState::initial(&w, 0).with_cache_cleared(), &g)
        })
        .collect();
    println!("{} click-requiring tasks x {} repeats, budget {} steps\n", tasks.len(), base.run.repeats, base.loop_config().max_steps);

    println!("{:>9}  {:>8}  {:>8}  {:>8}", "miss prob", "General", "WebShop", "Overall");
    for step in 0..=10 {
        let p = step as f64 / 10.0;
        let mut cfg = base.clone();
        if let Some(inj) = cfg.injection.as_mut() {
            inj.locator_miss_prob = p;
        }
        let r = run_suite(&tasks, &cfg, &SuiteOptions::new(format!("miss {p:.1}")))?;
        let rate = |name: &str| r.subsets.get(name).map(|s| format!("{:.1}", s.rate)).unwrap_or_else(|| "n/a".into());
        println!("{p:>9.1}  {:>8}  {:>8}  {:>8.1}", rate("General"), rate("WebShopping"), r.overall);
    }
    Ok(())
}
