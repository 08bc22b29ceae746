//! Acceptance checks A1 to A8. Runs without the libtest harness so every
//! criterion prints exactly one PASS or FAIL line.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use common::{dense_logits, mock_chat_endpoint, permute_contexts, random_graph, vecmat};
use lcv::corpus::{Label, SynthSpec};
use lcv::eval::{aggregate_runs, compute_metrics, mean_std, paired_t_test};
use lcv::graph::RelationSlot;
use lcv::model::{Ablation, Model, ModelConfig};
use lcv::pipeline::{
    generate_relations, prepare_synthetic, retrieve_targets, run_experiment, segment_targets, split_graphs, Experiment,
    PipelineConfig, SplitGraphs,
};
use lcv::providers::{normalize_output, CachedRelationProvider, EndpointConfig, RelationCache, RelationText, RemoteRelationProvider};
use lcv::trainer::{evaluate, train, DEFAULT_SEEDS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what}: got {got:.17}, want {want:.17}"))
}

fn synthetic() -> &'static (PipelineConfig, SplitGraphs) {
    static DATA: OnceLock<(PipelineConfig, SplitGraphs)> = OnceLock::new();
    DATA.get_or_init(|| {
        let config = PipelineConfig::compact();
        let (_, graphs) = prepare_synthetic(&SynthSpec::default(), &config).expect("synthetic graphs");
        (config, split_graphs(graphs))
    })
}

fn experiment(ablation: Ablation) -> Experiment {
    static FULL: OnceLock<Experiment> = OnceLock::new();
    let (config, splits) = synthetic();
    let run = || {
        let model = ModelConfig { ablation, ..config.model.clone() };
        run_experiment(splits, &model, &config.train).expect("experiment")
    };
    if ablation == Ablation::Full {
        FULL.get_or_init(run).clone()
    } else {
        run()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn a1_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for case in 0..20 {
        let config = ModelConfig { input_dim: 8, hidden_dim: 8, layers: 2, ..ModelConfig::default() };
        let n = rng.random_range(1..=4);
        let k = rng.random_range(0..=3);
        let graph = random_graph(&mut rng, n, k, 8, config.window);
        let label = if case % 2 == 0 { Label::Real } else { Label::Misinfo };
        let mut model = Model::new(config, &mut rng).map_err(|e| e.to_string())?;
        let (_, grads) = model.loss_and_grad(&graph, label, None).map_err(|e| e.to_string())?;
        let names: Vec<String> = model.params().names().to_vec();
        for name in &names {
            let analytic = grads.get(name).ok_or(format!("no gradient for {name}"))?.data().to_vec();
            for (idx, a) in analytic.iter().enumerate() {
                let orig = model.params().get(name).unwrap().data()[idx];
                model.params_mut().get_mut(name).unwrap().data_mut()[idx] = orig + eps;
                let up = model.loss(&graph, label).map_err(|e| e.to_string())?;
                model.params_mut().get_mut(name).unwrap().data_mut()[idx] = orig - eps;
                let down = model.loss(&graph, label).map_err(|e| e.to_string())?;
                model.params_mut().get_mut(name).unwrap().data_mut()[idx] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                if rel > 1e-4 {
                    return Err(format!("graph {case} (n={n}, k={k}) {name}[{idx}]: analytic {a:e}, numeric {numeric:e}"));
                }
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} entries over 20 graphs, max relative error {worst:.2e}"))
}

fn a2_dense_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let config = ModelConfig {
            input_dim: 6,
            hidden_dim: 5,
            layers: rng.random_range(1..=3),
            window: rng.random_range(1..=3),
            lambda: rng.random_range(0.0..2.0),
            ablation: Ablation::ALL[case % 4],
            ..ModelConfig::default()
        };
        let (n, k) = (rng.random_range(1..=5), rng.random_range(0..=4));
        let graph = random_graph(&mut rng, n, k, 6, config.window);
        let model = Model::new(config, &mut rng).map_err(|e| e.to_string())?;
        let got = model.logits(&graph).map_err(|e| e.to_string())?;
        let want = dense_logits(&model, &graph);
        for c in 0..2 {
            let err = (got[c] - want[c]).abs();
            ensure(err <= 1e-10, || format!("graph {case}: logit {c} differs by {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("50 graphs across all ablations, max abs error {worst:.2e}"))
}

fn a3_learnability() -> Outcome {
    let exp = experiment(Ablation::Full);
    let scores = exp.test_macro_f1();
    let epochs: Vec<usize> = exp.runs.iter().map(|r| r.outcome.history.len()).collect();
    ensure(scores.len() == DEFAULT_SEEDS.len() && scores.iter().all(|&s| s >= 0.90), || {
        format!("test macro-F1 per seed {scores:?}")
    })?;
    ensure(epochs.iter().all(|&e| e <= 30), || format!("epochs {epochs:?}"))?;
    Ok(format!("test macro-F1 per seed {scores:.4?}, epochs run {epochs:?}"))
}

fn a4_ablation_order() -> Outcome {
    let full = mean(&experiment(Ablation::Full).test_macro_f1());
    let structural = mean(&experiment(Ablation::StructuralEdges).test_macro_f1());
    let no_context = mean(&experiment(Ablation::NoContext).test_macro_f1());
    let detail = format!("full {full:.4}, structural_edges {structural:.4}, no_context {no_context:.4}");
    ensure(full >= structural && structural >= no_context && full - no_context >= 0.10, || detail.clone())?;
    Ok(detail)
}

fn a5_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let config = ModelConfig { input_dim: 7, hidden_dim: 6, ..ModelConfig::default() };
    let mut rows = 0;
    let mut perm_err: f64 = 0.0;
    for case in 0..20 {
        let k = rng.random_range(1..=4);
        let n = rng.random_range(1..=5);
        let graph = random_graph(&mut rng, n, k, 7, config.window);
        let model = Model::new(config.clone(), &mut rng).map_err(|e| e.to_string())?;

        let trace = model.trace(&graph).map_err(|e| e.to_string())?;
        for layer in &trace.attention {
            for w in layer.sentences.iter().chain(&layer.contexts).filter(|w| !w.is_empty()) {
                let sum: f64 = w.iter().sum();
                ensure((sum - 1.0).abs() <= 1e-9, || format!("graph {case}: attention row sums to {sum}"))?;
                rows += 1;
            }
        }

        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let a = model.logits(&graph).map_err(|e| e.to_string())?;
        let b = model.logits(&permute_contexts(&graph, &perm)).map_err(|e| e.to_string())?;
        let err = (a[0] - b[0]).abs().max((a[1] - b[1]).abs());
        ensure(err <= 1e-10, || format!("graph {case}: permutation changed logits by {err:e}"))?;
        perm_err = perm_err.max(err);

        let null = model.params().get("relation.null").unwrap().data().to_vec();
        let overrides: HashMap<(usize, usize), Vec<f64>> = graph
            .cross_edges
            .iter()
            .filter(|e| e.relation == RelationSlot::Null)
            .map(|e| ((e.sentence, e.context), null.clone()))
            .collect();
        let c = model.logits_with_relation_overrides(&graph, &overrides).map_err(|e| e.to_string())?;
        ensure(a == c, || format!("graph {case}: sentinel {a:?} vs explicit null {c:?}"))?;
    }

    // One isolated sentence whose document embedding equals it: m = h, so
    // the refined state is 2h and the logits are W_o (2h) + b_o.
    let mut model = Model::new(config.clone(), &mut rng).map_err(|e| e.to_string())?;
    let proj = model.params().get("proj.sentence").unwrap().clone();
    *model.params_mut().get_mut("proj.document").unwrap() = proj.clone();
    let mut graph = random_graph(&mut rng, 1, 0, 7, config.window);
    graph.doc_embedding = graph.sentence_nodes[0].clone();
    let h = vecmat(&graph.sentence_nodes[0], &proj);
    let w_o = model.params().get("out.w").unwrap().data().to_vec();
    let b_o = model.params().get("out.b").unwrap().data().to_vec();
    let d = h.len();
    let logits = model.logits(&graph).map_err(|e| e.to_string())?;
    for c in 0..2 {
        let want: f64 = (0..d).map(|i| w_o[c * d + i] * 2.0 * h[i]).sum::<f64>() + b_o[c];
        close(logits[c], want, 1e-12, "closed-form summary")?;
    }
    Ok(format!("{rows} attention rows, permutation error {perm_err:.2e}, sentinel exact, m = h"))
}

fn a6_determinism() -> Outcome {
    let (config, splits) = synthetic();
    let run = || train(&splits.train, &splits.val, &config.model, &config.train, DEFAULT_SEEDS[0]);
    let a = run().map_err(|e| e.to_string())?;
    let b = run().map_err(|e| e.to_string())?;
    ensure(a.best_checkpoint == b.best_checkpoint, || "best checkpoints differ".into())?;
    let ra = evaluate(&a.best, &splits.test).map_err(|e| e.to_string())?;
    let rb = evaluate(&b.best, &splits.test).map_err(|e| e.to_string())?;
    ensure(ra == rb, || format!("reports differ: {ra:?} vs {rb:?}"))?;
    ensure(a.history == b.history, || "training histories differ".into())?;
    Ok(format!("{} checkpoint bytes identical, test macro-F1 {:.4} both runs", a.best_checkpoint.len(), ra.macro_f1))
}

fn a7_metrics() -> Outcome {
    let bits = |v: &[u8]| v.iter().map(|&b| Label::from_index(b as usize).unwrap()).collect::<Vec<_>>();
    let truth = bits(&[1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 0]);
    let preds = bits(&[1, 1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1]);
    let r = compute_metrics(&preds, &truth).map_err(|e| e.to_string())?;
    close(r.f1_real, 0.6153846153846154, 1e-12, "f1_real")?;
    close(r.f1_misinfo, 0.5454545454545454, 1e-12, "f1_misinfo")?;
    close(r.macro_f1, 0.5804195804195804, 1e-12, "macro_f1")?;
    close(r.accuracy, 0.5833333333333334, 1e-12, "accuracy")?;

    let zeros = compute_metrics(&bits(&[0; 10]), &bits(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1])).map_err(|e| e.to_string())?;
    close(zeros.f1_real, 2.0 / 3.0, 1e-12, "degenerate f1_real")?;
    close(zeros.f1_misinfo, 0.0, 0.0, "degenerate f1_misinfo")?;
    close(zeros.macro_f1, 1.0 / 3.0, 1e-12, "degenerate macro_f1")?;

    let ms = mean_std(&[0.7864, 0.8869, 0.8123]).map_err(|e| e.to_string())?;
    close(ms.mean, 0.8285333333333332, 1e-12, "mean")?;
    close(ms.std, 0.05217952983051241, 1e-12, "std")?;
    let agg = aggregate_runs(&[r.clone(), zeros.clone()]).map_err(|e| e.to_string())?;
    close(agg.macro_f1.mean, (r.macro_f1 + zeros.macro_f1) / 2.0, 1e-12, "aggregate mean")?;

    let t = paired_t_test(&[0.81, 0.79, 0.84], &[0.78, 0.77, 0.80]).map_err(|e| e.to_string())?;
    close(t.t, 5.196152422706654, 1e-9, "t (3 seeds)")?;
    close(t.p, 0.03509871864598436, 1e-6, "p (3 seeds)")?;
    let t5 = paired_t_test(&[0.9, 0.85, 0.88, 0.91, 0.87], &[0.8, 0.83, 0.86, 0.84, 0.79]).map_err(|e| e.to_string())?;
    close(t5.t, 3.5696532384006523, 1e-9, "t (5 seeds)")?;
    close(t5.p, 0.023382998412307152, 1e-6, "p (5 seeds)")?;
    Ok(format!("F1/accuracy, mean/std and t-tests match references (p = {:.6}, {:.6})", t.p, t5.p))
}

fn a8_provider_cache() -> Outcome {
    let endpoint = mock_chat_endpoint(200, "\"budget cut for schools\"\nsecond line");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache_path = dir.path().join("relations.jsonl");
    let config = PipelineConfig::compact();
    let store = lcv::corpus::synth_generate(&SynthSpec { num_events: 10, ..SynthSpec::default() }).map_err(|e| e.to_string())?;
    let sentences = segment_targets(&store, config.sentence_budget).map_err(|e| e.to_string())?;
    let retrievals = retrieve_targets(&store, &config.retrieval).map_err(|e| e.to_string())?;

    let pass = || -> Result<Vec<_>, String> {
        let cache = Arc::new(RelationCache::open(&cache_path).map_err(|e| e.to_string())?);
        let provider = CachedRelationProvider::new(RemoteRelationProvider::new(EndpointConfig::new(&endpoint.url, "mock")), cache);
        generate_relations(&store, &sentences, &retrievals, &provider, 2).map_err(|e| e.to_string())
    };
    let cold = pass()?;
    let cold_calls = endpoint.calls();
    ensure(cold_calls > 0, || "cold pass made no endpoint calls".into())?;
    let warm = pass()?;
    let warm_calls = endpoint.calls() - cold_calls;
    ensure(warm_calls == 0, || format!("warm pass made {warm_calls} endpoint calls"))?;
    ensure(cold == warm, || "warm relations differ from cold ones".into())?;
    ensure(cold.iter().all(|r| r.relation == RelationText::phrase("budget cut for schools")), || {
        "endpoint reply was not normalized".into()
    })?;

    let cases = [
        ("only two officers on duty\nExtra line", RelationText::phrase("only two officers on duty")),
        ("   ", RelationText::sentinel()),
        ("", RelationText::sentinel()),
        ("no_missing_context", RelationText::sentinel()),
        ("[No Missing Context]", RelationText::sentinel()),
    ];
    for (raw, want) in cases {
        let got = normalize_output(raw);
        ensure(got == want, || format!("normalize_output({raw:?}) = {got:?}, want {want:?}"))?;
    }
    Ok(format!("{} pairs: cold pass {cold_calls} calls, warm pass 0; normalization cases exact", cold.len()))
}

fn main() {
    let checks: [Check; 8] = [
        ("A1", "gradient integrity", a1_gradients),
        ("A2", "dense-oracle equivalence", a2_dense_oracle),
        ("A3", "synthetic learnability", a3_learnability),
        ("A4", "ablation ordering", a4_ablation_order),
        ("A5", "normalization and invariance", a5_invariants),
        ("A6", "determinism", a6_determinism),
        ("A7", "metrics correctness", a7_metrics),
        ("A8", "provider caching contract", a8_provider_cache),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        match outcome {
            Ok(detail) => println!("{id} PASS {name}: {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {name}: {detail} [{elapsed:.1?}]");
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
