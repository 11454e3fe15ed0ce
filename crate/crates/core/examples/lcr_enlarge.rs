//! Adds enlarged twin labels for the small objects of the toy dataset.
//!
//! ```text
//! cargo run --example lcr_enlarge
//! ```

use detctx::dataset::load_annotations;
use detctx::lcr::{transform_dataset, LabelingStandard, LcrParams};

fn main() -> detctx::Result<()> {
    let (ds, _) = load_annotations(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy/annotations.json"))?;
    for standard in [LabelingStandard::Coco, LabelingStandard::Sod] {
        let out = transform_dataset(&ds, &LcrParams::new(standard, 0.15)?)?;
        println!(
            "{standard:?}: {} twins",
            out.annotations().len() - ds.annotations().len()
        );
        for twin in out.annotations().iter().filter(|a| a.lcr_source_id.is_some()).take(3) {
            let src = out.annotation(twin.lcr_source_id.unwrap()).unwrap();
            println!(
                "  {} {:?} -> {} {:?}",
                src.id,
                <[f64; 4]>::from(src.bbox),
                twin.id,
                <[f64; 4]>::from(twin.bbox)
            );
        }
    }
    Ok(())
}
