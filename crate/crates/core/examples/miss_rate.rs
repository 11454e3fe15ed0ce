//! Log-average miss rate on the reasonable and heavy pedestrian subsets of a
//! synthetic scene.

use detctx::eval::{log_avg_miss_rate, match_category, miss_rate_curve, Subset};
use detctx::synth::{generate, CategorySpec, NoiseModel, ObjectSpec, SceneSpec};

fn main() -> detctx::Result<()> {
    let spec = SceneSpec {
        image_width: 1024,
        image_height: 512,
        num_images: 20,
        categories: vec![CategorySpec {
            name: "pedestrian".into(),
            kind: Default::default(),
        }],
        objects: vec![ObjectSpec {
            category: "pedestrian".into(),
            count: 6,
            width: [15.0, 50.0],
            height: [30.0, 150.0],
            visible_ratio: Some([0.2, 1.0]),
        }],
        relations: Vec::new(),
        stuff: Vec::new(),
        noise: NoiseModel {
            drop_prob: 0.2,
            base_score: [0.3, 0.99],
            jitter_px: 2.0,
            false_positives_per_image: 2,
            ..NoiseModel::default()
        },
        seed: 11,
    };
    let (ds, dets) = generate(&spec)?;
    for subset in [Subset::All, Subset::Reasonable, Subset::Heavy] {
        let s = subset.spec();
        // ground truth outside the subset becomes an ignore region
        let log = match_category(&ds, &dets, 1, 0.5, |a| !s.admits(a));
        let curve = miss_rate_curve(&log);
        println!(
            "{subset:?}: {} objects, MR-2 {:.3}, final point {:?}",
            log.npos,
            log_avg_miss_rate(&log)?,
            curve.last()
        );
    }
    Ok(())
}
