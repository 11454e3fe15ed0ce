//! Builds the label co-occurrence graph of the toy dataset in both
//! descriptor flavours.

use detctx::dataset::load_annotations;
use detctx::scf::{build_graph, normalize, RelationDescriptor};

fn main() -> detctx::Result<()> {
    let (ds, _) = load_annotations(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy/annotations.json"))?;
    let cats: Vec<String> = ["door", "knob", "stair"].map(String::from).to_vec();
    for descriptor in [RelationDescriptor::Conditional, RelationDescriptor::Binary(0.8)] {
        let g = build_graph(&ds, &cats, descriptor)?;
        println!("{descriptor:?}\n{:.3}", g.adjacency);
    }
    let g = build_graph(&ds, &cats, RelationDescriptor::Conditional)?;
    println!("normalized\n{:.3}", normalize(&g));
    Ok(())
}
