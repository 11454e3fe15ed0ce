//! Decodes the stuff masks of the toy dataset and prints their extent.

use detctx::dataset::{decode_segmentation, load_annotations, CategoryKind, Rle};

fn main() -> detctx::Result<()> {
    let (ds, warnings) = load_annotations(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy/annotations.json"))?;
    for w in &warnings {
        println!("warning: {w}");
    }
    for ann in ds.annotations().iter().filter(|a| a.segmentation.is_some()) {
        let cat = ds.category(ann.category_id).unwrap();
        let mask = decode_segmentation(ann, ds.image(ann.image_id).unwrap())?;
        println!(
            "image {} {} ({:?}): {} px, centroid {:?}, bounds {:?}",
            ann.image_id,
            cat.name,
            cat.kind == CategoryKind::Stuff,
            mask.count(),
            mask.centroid(),
            mask.bounding_box().map(<[f64; 4]>::from),
        );
        // encoding the decoded mask gives back the same runs
        assert_eq!(Rle::encode(&mask).decode(mask.width(), mask.height())?, mask);
    }
    Ok(())
}
