//! Lists the bundled simulator worlds with each goal's shortest plan,
//! with and without a cleared cache.
//!
//! ```bash
//! cargo run --example sim_world_tour
//! cargo run --example sim_world_tour -- path/to/world.toml
//! ```

use tapwise::sim::{bfs_depth, render_screen, requires_click, shortest_plan, SimCatalog, World, WorldState};
use tapwise::render_action;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut catalog = SimCatalog::bundled();
    for path in std::env::args().skip(1) {
        catalog.load_file(path.as_ref())?;
    }

    for world in catalog.worlds() {
        tour(world)?;
    }
    Ok(())
}

fn tour(world: &World) -> Result<(), Box<dyn std::error::Error>> {
    println!("== {} ({} screens, {} apps) ==", world.id, world.screens.len(), world.apps.len());
    let fresh = WorldState::initial(world, 0);
    let cleared = fresh.with_cache_cleared();

    println!("{:<28} {:>6} {:>8} {:>6}", "goal", "depth", "cleared", "click");
    for goal in world.goals.values() {
        let d = bfs_depth(world, &fresh, goal)?;
        let dc = bfs_depth(world, &cleared, goal)?;
        let click = if requires_click(world, &cleared, goal) { "yes" } else { "no" };
        println!("{:<28} {:>6} {:>8} {:>6}", goal.id, d, dc, click);
    }

    // The deepest plan, spelled out in the action grammar.
    if let Some(goal) = world.goals.values().max_by_key(|g| bfs_depth(world, &cleared, g).unwrap_or(0)) {
        println!("\nplan for {} after a cache reset:", goal.id);
        for (i, a) in shortest_plan(world, &cleared, goal)?.iter().enumerate() {
            println!("  {}. {}", i + 1, render_action(a).replace('\n', " | "));
        }
    }

    let start = render_screen(world, &cleared);
    println!("\nstart screen: {} bytes of simdesc/1 JSON\n", start.len());
    Ok(())
}
