//! One episode on the simulator with the oracle policy, the perfect locator
//! and truthful reflection, recorded to a trace directory.
//!
//! ```bash
//! cargo run --example oracle_episode
//! cargo run --example oracle_episode -- webshop:headphones_product
//! ```

use std::sync::Arc;

use tapwise::agent::{run_episode, ClockConfig, EpisodeMeta, LoopConfig, PhaseCosts};
use tapwise::device::SimDevice;
use tapwise::gateway::PromptBundle;
use tapwise::sim::{OracleChatModel, PerfectLocator, SimCatalog};
use tapwise::trace::{Subset, TaskSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = std::env::args().nth(1).unwrap_or_else(|| "general-apps:forget_homenet".into());
    let (world, goal) = SimCatalog::bundled().resolve(&reference)?;

    let mut device = SimDevice::open(Arc::clone(&world), 42);
    let model = OracleChatModel::new(device.session().clone(), goal.clone());
    let task = TaskSpec::new("demo", Subset::General, format!("Reach goal {}", goal.id)).with_goal(reference.as_str());

    let out = tempfile_dir();
    let costs = PhaseCosts { observe_ms: 300, decide_ms: 4000, locate_ms: 900, execute_ms: 500, reflect_ms: 3000 };
    let cfg = LoopConfig::default().with_record_dir(&out).with_clock(ClockConfig::Virtual(costs));
    let meta = EpisodeMeta { seed: 42, reset_cache: Some(vec!["com.android.chrome".into()]), ..Default::default() };

    let run = run_episode(&task, &mut device, &model, &PerfectLocator, &cfg, &PromptBundle::default(), &meta)?;
    let t = &run.trace;
    println!("{} on {}: {} after {} steps, {:.1} s", goal.id, world.id, t.outcome.label(), t.steps.len(), t.total_ms as f64 / 1000.0);
    for s in &t.steps {
        let tap = s.tap_point.map(|p| format!(" at ({}, {})", p.x(), p.y())).unwrap_or_default();
        println!(
            "  {}. {}{tap}  [{}]  decide {} / locate {} / execute {} / reflect {} ms",
            s.index + 1,
            tapwise::render_action(&s.action).replace('\n', " | "),
            s.verdict.status.as_str(),
            s.decide_ms,
            s.locate_ms,
            s.execute_ms,
            s.reflect_ms
        );
    }
    if let Some(dir) = &run.dir {
        println!("trace written to {}", dir.display());
    }
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("tapwise-oracle-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}
