// Runs an untrained model on one synthetic graph and prints the attention
// each node spreads over its neighbours.

use lcv::corpus::SynthSpec;
use lcv::model::{ForwardTrace, Model};
use lcv::pipeline::{prepare_synthetic, PipelineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn row(weights: &[f64]) -> String {
    weights.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>().join(" ")
}

pub fn attention_trace(seed: u64) -> Result<ForwardTrace, Box<dyn std::error::Error>> {
    let config = PipelineConfig::compact();
    let spec = SynthSpec { num_events: 20, ..SynthSpec::default() };
    let (_, graphs) = prepare_synthetic(&spec, &config)?;
    let graph = &graphs[0];
    let model = Model::new(config.model.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?;
    let trace = model.trace(graph)?;

    println!("{} ({} sentences, {} contexts)", graph.target_id, graph.num_sentences(), graph.num_contexts());
    for (l, layer) in trace.attention.iter().enumerate() {
        println!("layer {}", l + 1);
        for (i, w) in layer.sentences.iter().enumerate() {
            println!("  s{i}: {}", row(w));
        }
        for (j, w) in layer.contexts.iter().enumerate() {
            println!("  c{j}: {}", row(w));
        }
    }
    if let Some(w) = &trace.summary_weights {
        println!("summary weights: {}", row(w));
    }
    println!("pooling weights: {}", row(&trace.pooling_weights));
    println!("logits [{:.4}, {:.4}]", trace.logits[0], trace.logits[1]);
    Ok(trace)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    attention_trace(std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(13))?;
    Ok(())
}
