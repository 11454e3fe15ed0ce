//! Generates a rider/bicycle scene with suppressed bicycles and checks the
//! promotion pass against the brute-force reference.

use detctx::scr::{apply, ApplyParams, Predicate, RelationRule, SceneContext, Topology};
use detctx::synth::{generate, oracle_scr, SceneSpec};

fn main() -> detctx::Result<()> {
    let spec = SceneSpec::rider_bicycle(3, 0.5);
    let (ds, dets) = generate(&spec)?;
    println!("{} annotations, {} detections", ds.annotations().len(), dets.len());

    let rules = [RelationRule::new("rider", "bicycle", Some(Predicate::Under), Topology::Overlap).with_threshold(0.48)];
    let scene = SceneContext::new(&ds)?;
    let params = ApplyParams::default();
    let fast = apply(&dets, &rules, &scene, &params)?;
    let slow = oracle_scr(&dets, &rules, &scene, &params)?;
    assert_eq!(fast, slow);
    println!("promoted {:?}", fast.promoted);
    Ok(())
}
