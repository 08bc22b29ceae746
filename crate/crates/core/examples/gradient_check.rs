// Compares tape gradients of the classification loss with central finite
// differences on a small random graph.

use lcv::corpus::Label;
use lcv::graph::{coherence_edges, CrossEdge, HeteroGraph, RelationSlot};
use lcv::model::{Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_graph(rng: &mut impl Rng, n: usize, contexts: usize, d0: usize, window: usize) -> HeteroGraph {
    let vec = |rng: &mut dyn rand::RngCore| (0..d0).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let sentence_nodes: Vec<_> = (0..n).map(|_| vec(rng)).collect();
    let context_nodes: Vec<_> = (0..contexts).map(|_| vec(rng)).collect();
    let mut cross_edges = Vec::new();
    for sentence in 0..n {
        for context in 0..contexts {
            let relation = if rng.random_bool(0.3) { RelationSlot::Null } else { RelationSlot::Embedded(vec(rng)) };
            cross_edges.push(CrossEdge { sentence, context, relation });
        }
    }
    HeteroGraph {
        target_id: "random".into(),
        split: None,
        label: None,
        window,
        context_ids: (0..contexts).map(|j| format!("c{j}")).collect(),
        sentence_nodes,
        context_nodes,
        doc_embedding: vec(rng),
        coh_edges: coherence_edges(n, window),
        cross_edges,
    }
}

/// Largest relative error `|analytic - numeric| / max(1, |analytic|, |numeric|)`
/// over every parameter entry.
pub fn gradient_check(seed: u64) -> Result<f64, Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig { input_dim: 8, hidden_dim: 8, layers: 2, dropout: 0.0, ..ModelConfig::default() };
    let graph = random_graph(&mut rng, 3, 2, config.input_dim, config.window);
    let mut model = Model::new(config, &mut rng)?;
    let label = Label::Misinfo;
    let (loss, grads) = model.loss_and_grad(&graph, label, None)?;

    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for p in 0..grads.len() {
        for i in 0..grads.tensors()[p].len() {
            let orig = model.params().tensors()[p].data()[i];
            model.params_mut().tensors_mut()[p].data_mut()[i] = orig + eps;
            let up = model.loss(&graph, label)?;
            model.params_mut().tensors_mut()[p].data_mut()[i] = orig - eps;
            let down = model.loss(&graph, label)?;
            model.params_mut().tensors_mut()[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.tensors()[p].data()[i];
            worst = worst.max((analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs()));
        }
    }
    println!("loss {loss:.6}, {} parameters checked, max relative error {worst:.3e}", grads.num_elements());
    Ok(worst)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    gradient_check(std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1))?;
    Ok(())
}
