mod common;

use common::{dense_logits, permute_contexts, random_graph};
use lcv::corpus::Label;
use lcv::graph::{CrossEdge, HeteroGraph, RelationSlot};
use lcv::model::{load_checkpoint, save_checkpoint, Ablation, Model, ModelConfig, ModelError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(ablation: Ablation) -> ModelConfig {
    ModelConfig { input_dim: 5, hidden_dim: 4, ablation, ..ModelConfig::default() }
}

fn max_abs(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

#[test]
fn hand_set_toy_graph_matches_dense_recomputation() {
    let config = ModelConfig { input_dim: 3, hidden_dim: 2, layers: 1, window: 1, ..ModelConfig::default() };
    let mut model = Model::new(config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut k = 0.0;
    for t in model.params_mut().tensors_mut() {
        for v in t.data_mut() {
            k += 1.0;
            *v = 0.3 * (k * 0.7f64).sin();
        }
    }
    let graph = HeteroGraph {
        target_id: "toy".into(),
        split: None,
        label: Some(Label::Misinfo),
        window: 1,
        context_ids: vec!["c".into()],
        sentence_nodes: vec![vec![1.0, 0.0, -1.0], vec![0.5, 0.5, 0.0]],
        context_nodes: vec![vec![0.0, 1.0, 1.0]],
        doc_embedding: vec![0.2, -0.4, 0.6],
        coh_edges: vec![(0, 1)],
        cross_edges: vec![
            CrossEdge { sentence: 0, context: 0, relation: RelationSlot::Embedded(vec![1.0, 1.0, 0.0]) },
            CrossEdge { sentence: 1, context: 0, relation: RelationSlot::Null },
        ],
    };
    let got = model.logits(&graph).unwrap();
    assert!(max_abs(got, dense_logits(&model, &graph)) <= 1e-10, "{got:?}");
}

#[test]
fn zero_context_graphs_ignore_the_context_ablation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let full = Model::new(small(Ablation::Full), &mut rng).unwrap();
    let no_context = Model::from_parts(small(Ablation::NoContext), full.params().clone()).unwrap();
    for n in 1..5 {
        let g = random_graph(&mut rng, n, 0, 5, 2);
        assert_eq!(full.logits(&g).unwrap(), no_context.logits(&g).unwrap());
    }
}

#[test]
fn structural_edges_ignore_relation_text() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = Model::new(small(Ablation::StructuralEdges), &mut rng).unwrap();
    let g = random_graph(&mut rng, 3, 2, 5, 2);
    let mut other = g.clone();
    for e in &mut other.cross_edges {
        e.relation = RelationSlot::Null;
    }
    assert_eq!(model.logits(&g).unwrap(), model.logits(&other).unwrap());
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for ablation in Ablation::ALL {
        let model = Model::new(small(ablation), &mut rng).unwrap();
        let g = random_graph(&mut rng, 3, 2, 5, 2);
        save_checkpoint(&path, &model).unwrap();
        let back = load_checkpoint(&path, Some(model.config())).unwrap();
        assert_eq!(model.logits(&g).unwrap(), back.logits(&g).unwrap());
        assert_eq!(model.params(), back.params());
    }
    let wrong = ModelConfig { hidden_dim: 6, ..small(Ablation::NoGlobalSummary) };
    assert!(matches!(load_checkpoint(&path, Some(&wrong)), Err(ModelError::VersionMismatch(_))));
}

#[test]
fn graphs_from_another_config_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = Model::new(small(Ablation::Full), &mut rng).unwrap();
    let wide = random_graph(&mut rng, 2, 1, 6, 2);
    assert!(matches!(model.logits(&wide), Err(ModelError::ConfigMismatch(_))));
    let other_window = random_graph(&mut rng, 2, 1, 5, 3);
    assert!(matches!(model.logits(&other_window), Err(ModelError::ConfigMismatch(_))));
}

#[test]
fn every_ablation_has_exact_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 1e-5;
    for ablation in Ablation::ALL {
        for (n, k) in [(1, 0), (3, 2), (4, 1)] {
            let g = random_graph(&mut rng, n, k, 5, 2);
            let mut model = Model::new(small(ablation), &mut rng).unwrap();
            let (_, grads) = model.loss_and_grad(&g, Label::Real, None).unwrap();
            for p in 0..grads.len() {
                for i in 0..grads.tensors()[p].len() {
                    let orig = model.params().tensors()[p].data()[i];
                    model.params_mut().tensors_mut()[p].data_mut()[i] = orig + eps;
                    let up = model.loss(&g, Label::Real).unwrap();
                    model.params_mut().tensors_mut()[p].data_mut()[i] = orig - eps;
                    let down = model.loss(&g, Label::Real).unwrap();
                    model.params_mut().tensors_mut()[p].data_mut()[i] = orig;
                    let numeric = (up - down) / (2.0 * eps);
                    let analytic = grads.tensors()[p].data()[i];
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                    assert!(rel <= 1e-4, "{ablation:?} {} [{i}]: {analytic} vs {numeric}", grads.names()[p]);
                }
            }
        }
    }
}

#[test]
fn dropout_only_applies_with_an_rng() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = ModelConfig { dropout: 0.5, ..small(Ablation::Full) };
    let model = Model::new(config, &mut rng).unwrap();
    let g = random_graph(&mut rng, 3, 2, 5, 2);
    let (eval_loss, _) = model.loss_and_grad(&g, Label::Misinfo, None).unwrap();
    assert_eq!(eval_loss, model.loss(&g, Label::Misinfo).unwrap());
    let mut a = ChaCha8Rng::seed_from_u64(1);
    let mut b = ChaCha8Rng::seed_from_u64(1);
    let (la, ga) = model.loss_and_grad(&g, Label::Misinfo, Some(&mut a)).unwrap();
    let (lb, gb) = model.loss_and_grad(&g, Label::Misinfo, Some(&mut b)).unwrap();
    assert_eq!((la, &ga), (lb, &gb));
    assert_ne!(la, eval_loss);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_forward_equals_dense_oracle(
        seed in any::<u64>(),
        n in 1usize..6,
        k in 0usize..5,
        layers in 0usize..4,
        window in 1usize..4,
        lambda in 0.0f64..3.0,
        ablation in 0usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = ModelConfig {
            input_dim: 4,
            hidden_dim: 3,
            layers,
            window,
            lambda,
            ablation: Ablation::ALL[ablation],
            ..ModelConfig::default()
        };
        let g = random_graph(&mut rng, n, k, 4, window);
        let model = Model::new(config, &mut rng).unwrap();
        prop_assert!(max_abs(model.logits(&g).unwrap(), dense_logits(&model, &g)) <= 1e-10);
    }

    #[test]
    fn logits_ignore_context_order(seed in any::<u64>(), n in 1usize..5, k in 1usize..5, rot in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n, k, 5, 2);
        let model = Model::new(small(Ablation::Full), &mut rng).unwrap();
        let perm: Vec<usize> = (0..k).map(|j| (j + rot) % k).rev().collect();
        let permuted = permute_contexts(&g, &perm);
        prop_assert!(max_abs(model.logits(&g).unwrap(), model.logits(&permuted).unwrap()) <= 1e-10);
    }

    #[test]
    fn trace_weights_are_distributions(seed in any::<u64>(), n in 1usize..6, k in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n, k, 5, 2);
        let model = Model::new(small(Ablation::Full), &mut rng).unwrap();
        let trace = model.trace(&g).unwrap();
        prop_assert_eq!(trace.logits, model.logits(&g).unwrap());
        for layer in &trace.attention {
            prop_assert_eq!(layer.sentences.len(), n);
            prop_assert_eq!(layer.contexts.len(), k);
            for (i, row) in layer.sentences.iter().enumerate() {
                let neighbours = (0..n).filter(|&b| b != i && b.abs_diff(i) <= 2).count() + k;
                prop_assert_eq!(row.len(), neighbours);
            }
            for row in layer.sentences.iter().chain(&layer.contexts).filter(|r| !r.is_empty()) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(row.iter().all(|&w| w >= 0.0));
            }
        }
        let p = model.probability(&g).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(model.predict(&g).unwrap(), if p > 0.5 { Label::Misinfo } else { Label::Real });
    }
}
