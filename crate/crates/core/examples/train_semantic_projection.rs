//! Trains the graph-convolution projection on the toy region features and
//! projects them into label space.

use detctx::dataset::load_annotations;
use detctx::scf::{
    build_graph, fit, gcn_forward, load_embeddings, normalize, project, Hyper, RegionFeatures, RelationDescriptor,
};

fn main() -> detctx::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy");
    let (ds, _) = load_annotations(format!("{dir}/annotations.json"))?;
    let cats: Vec<String> = ["door", "knob", "stair"].map(String::from).to_vec();
    let graph = build_graph(&ds, &cats, RelationDescriptor::Conditional)?;
    let embeddings = load_embeddings(format!("{dir}/vocab.txt"), &cats)?;
    let regions = RegionFeatures::load(format!("{dir}/features.json"))?;

    let hyper = Hyper {
        epochs: 300,
        ..Hyper::default()
    };
    let out = fit(&graph, &embeddings, &regions, &hyper)?;
    println!(
        "loss {:.4} -> {:.4}, training accuracy {:.3}",
        out.loss_trace[0],
        out.loss_trace.last().unwrap(),
        out.train_accuracy
    );

    let space = gcn_forward(&normalize(&graph), &embeddings.matrix, &out.weights)?;
    let p = project(&space, &regions.features)?;
    for (j, col) in p.columns().into_iter().enumerate().take(5) {
        println!("region {j} (label {:?}): {:.3}", regions.labels[j], col);
    }
    Ok(())
}
