//! Records a simulator episode, replays it, then corrupts one observation
//! digest to show how a divergence is reported.
//!
//! ```bash
//! cargo run --example trace_replay
//! ```

use std::sync::Arc;

use tapwise::agent::{replay, run_episode, EpisodeMeta, LoopConfig};
use tapwise::device::SimDevice;
use tapwise::gateway::PromptBundle;
use tapwise::sim::{OracleChatModel, PerfectLocator, SimCatalog};
use tapwise::trace::{read_trace, Subset, TaskSpec, TRACE_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (world, goal) = SimCatalog::bundled().resolve("webshop:usb_results")?;
    let mut device = SimDevice::open(Arc::clone(&world), 3);
    let model = OracleChatModel::new(device.session().clone(), goal);
    let task = TaskSpec::new("usb", Subset::WebShopping, "Search the shop for a USB cable").with_goal("webshop:usb_results");
    let root = std::env::temp_dir().join(format!("tapwise-replay-{}", std::process::id()));
    let cfg = LoopConfig::default().with_record_dir(&root);
    let meta = EpisodeMeta { seed: 3, reset_cache: Some(vec![]), ..Default::default() };
    let run = run_episode(&task, &mut device, &model, &PerfectLocator, &cfg, &PromptBundle::default(), &meta)?;
    let dir = run.dir.expect("recording was on");
    println!("recorded {} steps to {}", run.trace.steps.len(), dir.display());

    let replayed = replay(&dir)?;
    println!("replay: {} steps, no divergence", replayed.steps.len());

    let trace = read_trace(&dir)?;
    let victim = &trace.steps[2].post_obs.digest;
    let path = dir.join(TRACE_FILE);
    let text = std::fs::read_to_string(&path)?;
    std::fs::write(&path, text.replace(victim.as_str(), &"f".repeat(64)))?;
    match replay(&dir) {
        Ok(_) => println!("tampered trace replayed cleanly (unexpected)"),
        Err(e) => println!("tampered trace: {e}\n  divergent step: {:?}", e.divergent_step()),
    }
    Ok(())
}
