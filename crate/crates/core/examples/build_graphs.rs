// Turns a synthetic corpus into heterographs, writes them as a bundle and
// reads the bundle back.

use std::path::Path;

use lcv::corpus::SynthSpec;
use lcv::graph::{load_bundle, save_bundle, HeteroGraph, RelationSlot};
use lcv::pipeline::{prepare_synthetic, PipelineConfig};

pub fn build_graphs(num_events: usize, bundle: &Path) -> Result<Vec<HeteroGraph>, Box<dyn std::error::Error>> {
    let config = PipelineConfig::compact();
    let spec = SynthSpec { num_events, ..SynthSpec::default() };
    let (store, graphs) = prepare_synthetic(&spec, &config)?;
    println!("{} articles -> {} graphs (d0 = {})", store.len(), graphs.len(), config.model.input_dim);

    let g = &graphs[0];
    let nulls = g.cross_edges.iter().filter(|e| e.relation == RelationSlot::Null).count();
    println!(
        "{}: {} sentences, {} contexts, {} coherence edges, {} cross edges ({} null relations), label {:?}",
        g.target_id,
        g.num_sentences(),
        g.num_contexts(),
        g.coh_edges.len(),
        g.cross_edges.len(),
        nulls,
        g.label
    );

    save_bundle(bundle, &graphs)?;
    let back = load_bundle(bundle)?;
    println!("bundle {} bytes, round trip equal: {}", std::fs::metadata(bundle)?.len(), back == graphs);
    Ok(back)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let events = std::env::args().nth(1).map(|n| n.parse()).transpose()?.unwrap_or(40);
    let path = std::env::temp_dir().join(format!("lcv-graphs-{}.bin", std::process::id()));
    let result = build_graphs(events, &path);
    let _ = std::fs::remove_file(&path);
    result.map(|_| ())
}
