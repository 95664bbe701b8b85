//! Runs the fixture suite under several configurations and renders the
//! comparison table, the way `tapwise eval` and `tapwise report` do.
//!
//! ```bash
//! cargo run --release --example eval_suite_report
//! cargo run --release --example eval_suite_report -- /tmp/tapwise-report
//! ```

use std::path::PathBuf;

use tapwise::config::RunConfig;
use tapwise::eval::report::write_report;
use tapwise::eval::{ingest_tasks, run_suite, SuiteOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets");
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tapwise-report"));
    let tasks = ingest_tasks(&assets.join("tasks/all.tsv"))?;

    let mut results = Vec::new();
    for (label, file) in [
        ("Cache removal", "oracle.toml"),
        ("No cache removal", "no_cache_removal.toml"),
        ("Noisy locator", "locator_miss.toml"),
        ("All components noisy", "injection.toml"),
    ] {
        let cfg = RunConfig::load(&assets.join("configs").join(file))?;
        let dir = out.join(file.trim_end_matches(".toml"));
        let r = run_suite(&tasks, &cfg, &SuiteOptions::new(label).with_out_dir(&dir))?;
        println!("{label}: {} episodes, traces under {}", r.episodes.len(), dir.display());
        results.push((label.to_string(), r));
    }

    let report = write_report(&out, &results)?;
    println!("\n{}", report.text);
    println!("report.txt, report.csv and results.json written to {}", out.display());
    Ok(())
}
