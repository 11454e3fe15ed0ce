//! Scores the toy detections with AP at IoU 0.5, per category.

use detctx::dataset::{load_annotations, load_detections};
use detctx::eval::{evaluate, EvalParams};

fn main() -> detctx::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy");
    let (ds, _) = load_annotations(format!("{dir}/annotations.json"))?;
    let dets = load_detections(format!("{dir}/detections.json"), &ds)?;
    let params = EvalParams {
        score_threshold: 0.05,
        ..EvalParams::default()
    };
    let report = evaluate(&ds, &dets, &params, &[])?;
    for c in &report.categories {
        println!(
            "{:<6} gt {:>2}  det {:>2}  AP {:?}",
            c.name, c.num_gt, c.num_detections, c.ap
        );
    }
    println!("mAP@0.5 {:?}", report.map);
    Ok(())
}
