//! Runs every stage on the toy data from its JSON config.
//!
//! Artifacts go to `target/toy-run` unless a directory is given:
//!
//! ```text
//! cargo run --example full_pipeline -- /tmp/toy
//! ```

use std::path::PathBuf;

use detctx::pipeline::{parse_config, run_pipeline, ComparisonReport, EVAL_ARTIFACT};

fn main() -> detctx::Result<()> {
    let mut config = parse_config(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy/config.json"))?;
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../target/toy-run")));
    if let Some(io) = config.io.as_mut() {
        io.out_dir = out.clone();
    }
    let report = run_pipeline(&config)?;
    for stage in &report.stages {
        println!("{}: {:?}", stage.stage, stage.artifacts);
    }
    let cmp: ComparisonReport = detctx::json::read(out.join(EVAL_ARTIFACT))?;
    println!(
        "mAP {:?} -> {:?} with {} promotions",
        cmp.baseline.map,
        cmp.refined.as_ref().and_then(|r| r.map),
        cmp.promoted
    );
    Ok(())
}
