#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use lcv::autodiff::Tensor;
use lcv::graph::{CrossEdge, HeteroGraph, RelationSlot};
use lcv::model::{Ablation, Model};
use rand::Rng;

pub fn random_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Graph with `n` sentences and `k` contexts, coherence edges for `window`
/// and roughly a third of the relations set to the null slot.
pub fn random_graph(rng: &mut impl Rng, n: usize, k: usize, d0: usize, window: usize) -> HeteroGraph {
    let sentence_nodes = (0..n).map(|_| random_vec(rng, d0)).collect();
    let context_nodes = (0..k).map(|_| random_vec(rng, d0)).collect();
    let mut cross_edges = Vec::new();
    for i in 0..n {
        for j in 0..k {
            let relation = if rng.random_bool(0.35) { RelationSlot::Null } else { RelationSlot::Embedded(random_vec(rng, d0)) };
            cross_edges.push(CrossEdge { sentence: i, context: j, relation });
        }
    }
    let mut coh_edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if b - a <= window {
                coh_edges.push((a, b));
            }
        }
    }
    HeteroGraph {
        target_id: "g".into(),
        split: None,
        label: None,
        window,
        context_ids: (0..k).map(|j| format!("ctx{j}")).collect(),
        sentence_nodes,
        context_nodes,
        doc_embedding: random_vec(rng, d0),
        coh_edges,
        cross_edges,
    }
}

/// Same graph with contexts reordered so new context `j` is old `perm[j]`.
pub fn permute_contexts(g: &HeteroGraph, perm: &[usize]) -> HeteroGraph {
    let mut out = g.clone();
    out.context_ids = perm.iter().map(|&p| g.context_ids[p].clone()).collect();
    out.context_nodes = perm.iter().map(|&p| g.context_nodes[p].clone()).collect();
    out.cross_edges.clear();
    for i in 0..g.num_sentences() {
        for (j, &p) in perm.iter().enumerate() {
            let old = g.cross_edges.iter().find(|e| e.sentence == i && e.context == p).unwrap();
            out.cross_edges.push(CrossEdge { sentence: i, context: j, relation: old.relation.clone() });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Dense forward oracle: explicit loops, no tape, row vectors times matrices.

pub fn vecmat(x: &[f64], m: &Tensor) -> Vec<f64> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    assert_eq!(x.len(), rows);
    let data = m.data();
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c] += x[r] * data[r * cols + c];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn mix(weights: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for (w, r) in weights.iter().zip(rows) {
        for (o, x) in out.iter_mut().zip(r) {
            *o += w * x;
        }
    }
    out
}

pub fn dense_logits(model: &Model, g: &HeteroGraph) -> [f64; 2] {
    let cfg = model.config();
    let p = |name: &str| model.params().get(name).unwrap_or_else(|| panic!("missing {name}"));
    let n = g.sentence_nodes.len();
    let k = if cfg.ablation == Ablation::NoContext { 0 } else { g.context_nodes.len() };

    let mut xs: Vec<Vec<f64>> = g.sentence_nodes.iter().map(|s| vecmat(s, p("proj.sentence"))).collect();
    let mut xc: Vec<Vec<f64>> = g.context_nodes[..k].iter().map(|c| vecmat(c, p("proj.context"))).collect();
    let g0 = vecmat(&g.doc_embedding, p("proj.document"));

    let relation = |i: usize, j: usize| -> Vec<f64> {
        if cfg.ablation == Ablation::StructuralEdges {
            return p("relation.structural").data().to_vec();
        }
        let edge = g.cross_edges.iter().find(|e| e.sentence == i && e.context == j).expect("complete cross edges");
        match &edge.relation {
            RelationSlot::Null => p("relation.null").data().to_vec(),
            RelationSlot::Embedded(v) => vecmat(v, p("proj.relation")),
        }
    };
    let r: Vec<Vec<Vec<f64>>> = (0..n).map(|i| (0..k).map(|j| relation(i, j)).collect()).collect();
    let w_coh = p("coherence.w");

    for l in 0..cfg.layers {
        let q_s2c = p(&format!("layer{l}.q.s2c"));
        let q_c2s = p(&format!("layer{l}.q.c2s"));
        let t_s2c = p(&format!("layer{l}.t.s2c"));
        let t_c2s = p(&format!("layer{l}.t.c2s"));
        let m_coh = p(&format!("layer{l}.w.coh"));
        let m_s2c = p(&format!("layer{l}.w.s2c"));
        let m_c2s = p(&format!("layer{l}.w.c2s"));

        let mut next_s = Vec::new();
        for i in 0..n {
            let mut scores = Vec::new();
            let mut msgs = Vec::new();
            for b in 0..n {
                if b != i && b.abs_diff(i) <= g.window {
                    let diff: Vec<f64> = xs[i].iter().zip(&xs[b]).map(|(x, y)| x - y).collect();
                    let proj = vecmat(&diff, w_coh);
                    scores.push(-dot(&proj, &proj));
                    msgs.push(vecmat(&xs[b], m_coh));
                }
            }
            for j in 0..k {
                scores.push(dot(&xs[i], &vecmat(&xc[j], q_c2s)) + dot(&r[i][j], &vecmat(&r[i][j], t_c2s)));
                msgs.push(vecmat(&xc[j], m_c2s));
            }
            if scores.is_empty() {
                next_s.push(xs[i].clone());
            } else {
                next_s.push(mix(&softmax(&scores), &msgs).into_iter().map(|v| v.max(0.0)).collect());
            }
        }
        let mut next_c = Vec::new();
        for j in 0..k {
            let scores: Vec<f64> = (0..n)
                .map(|i| dot(&xc[j], &vecmat(&xs[i], q_s2c)) + dot(&r[i][j], &vecmat(&r[i][j], t_s2c)))
                .collect();
            let msgs: Vec<Vec<f64>> = xs.iter().map(|x| vecmat(x, m_s2c)).collect();
            next_c.push(mix(&softmax(&scores), &msgs).into_iter().map(|v| v.max(0.0)).collect());
        }
        xs = next_s;
        xc = next_c;
    }

    let refined: Vec<Vec<f64>> = if cfg.ablation == Ablation::NoGlobalSummary {
        xs
    } else {
        let lambda = cfg.lambda;
        let m: Vec<f64> = (0..g0.len())
            .map(|c| (xs.iter().map(|h| h[c]).sum::<f64>() + lambda * g0[c]) / (n as f64 + lambda))
            .collect();
        let a = p("summary.attn").data();
        let eta = softmax(&xs.iter().map(|h| dot(a, h)).collect::<Vec<_>>());
        xs.iter().zip(&eta).map(|(h, e)| h.iter().zip(&m).map(|(x, mm)| x + e * mm).collect()).collect()
    };
    let b = p("pool.b").data();
    let beta = softmax(&refined.iter().map(|h| dot(b, h)).collect::<Vec<_>>());
    let pooled = mix(&beta, &refined);
    let w_o = p("out.w");
    let d = pooled.len();
    let b_o = p("out.b").data();
    [
        dot(&w_o.data()[..d], &pooled) + b_o[0],
        dot(&w_o.data()[d..], &pooled) + b_o[1],
    ]
}

// ---------------------------------------------------------------------------
// Local stand-in for a chat-completions endpoint.

pub struct MockEndpoint {
    pub url: String,
    pub calls: Arc<AtomicUsize>,
}

impl MockEndpoint {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Answers every POST with `status` and a chat reply whose content is `content`.
pub fn mock_chat_endpoint(status: u16, content: &'static str) -> MockEndpoint {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(stream);
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            counter.fetch_add(1, Ordering::SeqCst);
            let payload = if status == 200 {
                serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})
                    .to_string()
            } else {
                r#"{"error":"unavailable"}"#.to_string()
            };
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    MockEndpoint { url, calls }
}
