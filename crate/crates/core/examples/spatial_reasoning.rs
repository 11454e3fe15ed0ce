//! Derives a door/stair threshold from ground truth, then promotes
//! suppressed detections with the SAI rules and the derived one.

use detctx::dataset::{load_annotations, load_detections};
use detctx::scr::{
    apply, derive_thresholds, ApplyParams, Predicate, Preset, RelationRule, SceneContext, Topology, DEFAULT_PERCENTILE,
};

fn main() -> detctx::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy");
    let (ds, _) = load_annotations(format!("{dir}/annotations.json"))?;
    let dets = load_detections(format!("{dir}/detections.json"), &ds)?;

    let open = [RelationRule::new(
        "door",
        "stair",
        Some(Predicate::Under),
        Topology::Overlap,
    )];
    for rule in derive_thresholds(&ds, &open, DEFAULT_PERCENTILE)? {
        println!("derived {rule}: {:?}", rule.overlap_threshold);
    }

    let rules = Preset::Sai.rules();
    let scene = SceneContext::new(&ds)?;
    let params = ApplyParams::default();
    let out = apply(&dets, &rules, &scene, &params)?;
    let kept = dets.iter().filter(|d| params.retains(d.score)).count();
    println!(
        "{} detections, {kept} kept, {} promoted",
        dets.len(),
        out.promoted.len()
    );
    for &i in &out.promoted {
        let d = &dets.as_slice()[i];
        println!(
            "  image {} {} score {:.2}",
            d.image_id,
            ds.category(d.category_id).unwrap().name,
            d.score
        );
    }
    Ok(())
}
