//! Drives the agent loop with scripted model replies, the way unit tests do:
//! a malformed decision is re-prompted, a click goes through a fixed locator
//! table, and the reflection verdict ends the episode.
//!
//! ```bash
//! cargo run --example scripted_models
//! ```

use tapwise::agent::{run_episode, EpisodeMeta, LoopConfig};
use tapwise::device::SimDevice;
use tapwise::gateway::mock::{ScriptedChatModel, ScriptedLocator};
use tapwise::gateway::PromptBundle;
use tapwise::sim::SimCatalog;
use tapwise::trace::{Subset, TaskSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (world, goal) = SimCatalog::bundled().resolve("general-apps:network_settings")?;
    // The locator table points at the element's real box in the fixture world.
    let network = world.screen("settings_root").and_then(|s| s.element("network")).expect("fixture element").bbox;
    let mut device = SimDevice::open(world, 1);

    let model = ScriptedChatModel::new()
        // step 1: the first reply has no ACTION line, so the decision is re-prompted
        .decision("I would open the settings.")
        .decision("ACTION: OPEN_APP\nAPP: Settings")
        .app_select("com.android.settings")
        .reflection("STATUS: FAILURE\nSettings is open but the network page is not.")
        // step 2
        .decision("ACTION: CLICK\nTARGET: click on 'Network & internet'.")
        .reflection("STATUS: SUCCESS\nThe network settings are shown.");
    let locator = ScriptedLocator::new().with("click on 'Network & internet'.", network);

    let task = TaskSpec::new("scripted", Subset::General, "Open the network settings").with_goal("network_settings");
    let run = run_episode(&task, &mut device, &model, &locator, &LoopConfig::default(), &PromptBundle::default(), &EpisodeMeta::default())?;

    println!("outcome: {}, goal holds: {}", run.trace.outcome.label(), device.session().goal_holds(&goal));
    for s in &run.trace.steps {
        println!("step {}: {:<8} (decide attempts {}, box {:?})", s.index + 1, format!("{:?}", s.action.kind()), s.decide_attempts, s.locator_box.map(|b| b.as_array()));
    }
    println!("\nmodel calls:");
    for c in model.calls() {
        let first = c.prompt.lines().next().unwrap_or_default();
        println!("  {:?} attempt {} image={} :: {first}", c.purpose, c.attempt, c.had_image);
    }
    Ok(())
}
