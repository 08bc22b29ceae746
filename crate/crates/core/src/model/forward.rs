use std::collections::HashMap;

use rand::{Rng, RngCore};

use super::params::{layout, Layout};
use super::{Ablation, ModelConfig, ModelError, ModelParams};
use crate::autodiff::{Tape, Tensor, Var};
use crate::corpus::Label;
use crate::graph::{HeteroGraph, RelationSlot};

/// Attention weights of one propagation layer.
///
/// A sentence's weights run over its coherence neighbours in ascending order
/// followed by every context node; a context's weights run over all
/// sentences. Nodes without neighbours get an empty vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerAttention {
    pub sentences: Vec<Vec<f64>>,
    pub contexts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub logits: [f64; 2],
    pub attention: Vec<LayerAttention>,
    /// Per-sentence share of the global summary; `None` when the summary is ablated.
    pub summary_weights: Option<Vec<f64>>,
    pub pooling_weights: Vec<f64>,
}

struct Recorded {
    tape: Tape,
    vars: Vec<Var>,
    logits: Var,
    attention: Vec<(Vec<Option<Var>>, Vec<Var>)>,
    summary: Option<Var>,
    pooling: Var,
}

/// Parameters plus the configuration that fixes their layout.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    layout: Layout,
}

fn drop(tape: &mut Tape, x: Var, p: f64, rng: &mut Option<&mut dyn RngCore>) -> Result<Var, ModelError> {
    Ok(match rng {
        Some(r) => tape.dropout(x, p, true, &mut **r)?,
        None => x,
    })
}

fn stack(rows: &[Vec<f64>], width: usize) -> Result<Tensor, ModelError> {
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Tensor::matrix(rows.len(), width, data)?)
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ModelParams::init(&config, rng);
        Self::from_parts(config, params)
    }

    /// Pairs parameters with a configuration, checking that the layouts agree.
    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = ModelParams::zeros(&config);
        let same = expected.names() == params.names()
            && expected.tensors().iter().zip(params.tensors()).all(|(a, b)| a.shape() == b.shape());
        if !same {
            return Err(ModelError::ConfigMismatch("parameter layout does not match the configuration".into()));
        }
        let layout = layout(&config);
        Ok(Self { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ModelParams) {
        (self.config, self.params)
    }

    fn check_graph(&self, graph: &HeteroGraph) -> Result<(), ModelError> {
        let d0 = self.config.input_dim;
        if graph.sentence_nodes.is_empty() {
            return Err(ModelError::ConfigMismatch(format!("graph {} has no sentence nodes", graph.target_id)));
        }
        if graph.window != self.config.window {
            return Err(ModelError::ConfigMismatch(format!(
                "graph {} uses window {}, model expects {}",
                graph.target_id, graph.window, self.config.window
            )));
        }
        let widths_ok = graph.doc_embedding.len() == d0
            && graph.sentence_nodes.iter().chain(&graph.context_nodes).all(|v| v.len() == d0)
            && graph.cross_edges.iter().all(|e| match &e.relation {
                RelationSlot::Null => true,
                RelationSlot::Embedded(v) => v.len() == d0,
            });
        if !widths_ok {
            return Err(ModelError::ConfigMismatch(format!(
                "graph {} embeddings are not {d0}-dimensional",
                graph.target_id
            )));
        }
        if graph.cross_edges.len() != graph.num_sentences() * graph.num_contexts() {
            return Err(ModelError::ConfigMismatch(format!("graph {} cross edges are incomplete", graph.target_id)));
        }
        Ok(())
    }

    fn record(
        &self,
        graph: &HeteroGraph,
        overrides: &HashMap<(usize, usize), Vec<f64>>,
        mut rng: Option<&mut dyn RngCore>,
        track_grads: bool,
    ) -> Result<Recorded, ModelError> {
        self.check_graph(graph)?;
        let cfg = &self.config;
        let lay = &self.layout;
        let d0 = cfg.input_dim;
        let n = graph.num_sentences();
        let k = if cfg.ablation == Ablation::NoContext { 0 } else { graph.num_contexts() };

        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .params
            .tensors()
            .iter()
            .map(|t| if track_grads { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        let t = &mut tape;

        let s_raw = t.constant(stack(&graph.sentence_nodes, d0)?);
        let hs = t.matmul(s_raw, vars[lay.proj_sentence])?;
        let hs = drop(t, hs, cfg.dropout, &mut rng)?;
        let mut xs: Vec<Var> = (0..n).map(|i| t.select(hs, i)).collect::<Result<_, _>>()?;

        let mut xc: Vec<Var> = Vec::new();
        if k > 0 {
            let c_raw = t.constant(stack(&graph.context_nodes, d0)?);
            let hc = t.matmul(c_raw, vars[lay.proj_context])?;
            let hc = drop(t, hc, cfg.dropout, &mut rng)?;
            xc = (0..k).map(|j| t.select(hc, j)).collect::<Result<_, _>>()?;
        }

        let doc = t.constant(Tensor::vector(graph.doc_embedding.clone()));
        let g0 = t.matmul(doc, vars[lay.proj_document])?;

        // Hidden relation vector per cross edge, row-major over (sentence, context).
        let mut rel: Vec<Var> = Vec::with_capacity(n * k);
        if k > 0 {
            let mut raw_rows: Vec<Vec<f64>> = Vec::new();
            let mut slots: Vec<Option<Var>> = Vec::with_capacity(n * k);
            for i in 0..n {
                for j in 0..k {
                    let edge = graph.cross_edge(i, j);
                    let slot = if let Some(structural) = lay.structural {
                        Some(vars[structural])
                    } else if let Some(v) = overrides.get(&(i, j)) {
                        Some(t.constant(Tensor::vector(v.clone())))
                    } else {
                        match &edge.relation {
                            RelationSlot::Null => Some(vars[lay.null_relation]),
                            RelationSlot::Embedded(v) => {
                                raw_rows.push(v.clone());
                                None
                            }
                        }
                    };
                    slots.push(slot);
                }
            }
            let projected = if raw_rows.is_empty() {
                None
            } else {
                let r_raw = t.constant(stack(&raw_rows, d0)?);
                Some(t.matmul(r_raw, vars[lay.proj_relation])?)
            };
            let mut next = 0;
            for slot in slots {
                rel.push(match slot {
                    Some(v) => v,
                    None => {
                        let row = t.select(projected.expect("embedded rows were projected"), next)?;
                        next += 1;
                        row
                    }
                });
            }
        }

        let mut coh_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in &graph.coh_edges {
            coh_adj[a].push(b);
            coh_adj[b].push(a);
        }
        for list in &mut coh_adj {
            list.sort_unstable();
            list.dedup();
        }
        let has_coherence = coh_adj.iter().any(|l| !l.is_empty());

        let mut attention = Vec::with_capacity(cfg.layers);
        for ids in &lay.layers {
            let s_mat = t.concat_rows(&xs)?;
            let mut coh_rows = Vec::new();
            let mut coh_msgs = Vec::new();
            if has_coherence {
                let c = t.matmul(s_mat, vars[lay.coherence])?;
                let m = t.matmul(s_mat, vars[ids.w_coh])?;
                for i in 0..n {
                    coh_rows.push(t.select(c, i)?);
                    coh_msgs.push(t.select(m, i)?);
                }
            }

            let (mut s2c_keys, mut s2c_msgs, mut c2s_keys, mut c2s_msgs) = (vec![], vec![], vec![], vec![]);
            let (mut rel_s2c, mut rel_c2s) = (vec![], vec![]);
            if k > 0 {
                let c_mat = t.concat_rows(&xc)?;
                let qs = t.matmul(s_mat, vars[ids.q_s2c])?;
                let ms = t.matmul(s_mat, vars[ids.w_s2c])?;
                for i in 0..n {
                    s2c_keys.push(t.select(qs, i)?);
                    s2c_msgs.push(t.select(ms, i)?);
                }
                let qc = t.matmul(c_mat, vars[ids.q_c2s])?;
                let mc = t.matmul(c_mat, vars[ids.w_c2s])?;
                for j in 0..k {
                    c2s_keys.push(t.select(qc, j)?);
                    c2s_msgs.push(t.select(mc, j)?);
                }
                let r_mat = t.concat_rows(&rel)?;
                let tr_s2c = t.matmul(r_mat, vars[ids.t_s2c])?;
                let tr_c2s = t.matmul(r_mat, vars[ids.t_c2s])?;
                for (e, &r) in rel.iter().enumerate() {
                    let a = t.select(tr_s2c, e)?;
                    rel_s2c.push(t.dot(r, a)?);
                    let b = t.select(tr_c2s, e)?;
                    rel_c2s.push(t.dot(r, b)?);
                }
            }

            let mut next_s = Vec::with_capacity(n);
            let mut att_s = Vec::with_capacity(n);
            for i in 0..n {
                let mut scores = Vec::new();
                let mut msgs = Vec::new();
                for &b in &coh_adj[i] {
                    let diff = t.sub(coh_rows[i], coh_rows[b])?;
                    let sq = t.sq_norm(diff)?;
                    scores.push(t.scale(sq, -1.0)?);
                    msgs.push(coh_msgs[b]);
                }
                for j in 0..k {
                    let bil = t.dot(xs[i], c2s_keys[j])?;
                    scores.push(t.add(bil, rel_c2s[i * k + j])?);
                    msgs.push(c2s_msgs[j]);
                }
                if scores.is_empty() {
                    next_s.push(xs[i]);
                    att_s.push(None);
                    continue;
                }
                let (x, pi) = aggregate(t, &scores, &msgs)?;
                next_s.push(x);
                att_s.push(Some(pi));
            }

            let mut next_c = Vec::with_capacity(k);
            let mut att_c = Vec::with_capacity(k);
            for j in 0..k {
                let mut scores = Vec::with_capacity(n);
                for i in 0..n {
                    let bil = t.dot(xc[j], s2c_keys[i])?;
                    scores.push(t.add(bil, rel_s2c[i * k + j])?);
                }
                let (x, pi) = aggregate(t, &scores, &s2c_msgs)?;
                next_c.push(x);
                att_c.push(pi);
            }
            xs = next_s;
            xc = next_c;
            attention.push((att_s, att_c));
        }

        let (refined, summary) = if cfg.ablation == Ablation::NoGlobalSummary {
            (xs, None)
        } else {
            let mut total = t.scale(g0, cfg.lambda)?;
            for &h in &xs {
                total = t.add(total, h)?;
            }
            let m = t.scale(total, 1.0 / (n as f64 + cfg.lambda))?;
            let scores: Vec<Var> = xs.iter().map(|&h| t.dot(vars[lay.summary_attn], h)).collect::<Result<_, _>>()?;
            let stacked = t.concat_rows(&scores)?;
            let eta = t.softmax(stacked)?;
            let mut out = Vec::with_capacity(n);
            for (i, &h) in xs.iter().enumerate() {
                let e = t.select(eta, i)?;
                let shift = t.mul_scalar(e, m)?;
                out.push(t.add(h, shift)?);
            }
            (out, Some(eta))
        };

        let scores: Vec<Var> = refined.iter().map(|&h| t.dot(vars[lay.pool], h)).collect::<Result<_, _>>()?;
        let stacked = t.concat_rows(&scores)?;
        let beta = t.softmax(stacked)?;
        let h_mat = t.concat_rows(&refined)?;
        let pooled = t.matmul(beta, h_mat)?;
        let pooled = drop(t, pooled, cfg.dropout, &mut rng)?;
        let z = t.matmul(vars[lay.out_w], pooled)?;
        let logits = t.add(z, vars[lay.out_b])?;

        Ok(Recorded { tape, vars, logits, attention, summary, pooling: beta })
    }

    /// Inference-mode logits `[real, misinfo]`.
    pub fn logits(&self, graph: &HeteroGraph) -> Result<[f64; 2], ModelError> {
        self.logits_with_relation_overrides(graph, &HashMap::new())
    }

    /// Logits with the hidden relation vector of selected edges replaced by
    /// the given values.
    pub fn logits_with_relation_overrides(
        &self,
        graph: &HeteroGraph,
        overrides: &HashMap<(usize, usize), Vec<f64>>,
    ) -> Result<[f64; 2], ModelError> {
        let rec = self.record(graph, overrides, None, false)?;
        Ok(pair(rec.tape.value(rec.logits).data()))
    }

    /// Probability of the misinfo class.
    pub fn probability(&self, graph: &HeteroGraph) -> Result<f64, ModelError> {
        let [a, b] = self.logits(graph)?;
        Ok(1.0 / (1.0 + (a - b).exp()))
    }

    /// Arg-max class; ties go to `Real`.
    pub fn predict(&self, graph: &HeteroGraph) -> Result<Label, ModelError> {
        let [a, b] = self.logits(graph)?;
        Ok(if b > a { Label::Misinfo } else { Label::Real })
    }

    pub fn trace(&self, graph: &HeteroGraph) -> Result<ForwardTrace, ModelError> {
        let rec = self.record(graph, &HashMap::new(), None, false)?;
        let values = |v: Var| rec.tape.value(v).data().to_vec();
        let attention = rec
            .attention
            .iter()
            .map(|(s, c)| LayerAttention {
                sentences: s.iter().map(|v| v.map(values).unwrap_or_default()).collect(),
                contexts: c.iter().map(|&v| values(v)).collect(),
            })
            .collect();
        Ok(ForwardTrace {
            logits: pair(rec.tape.value(rec.logits).data()),
            attention,
            summary_weights: rec.summary.map(values),
            pooling_weights: values(rec.pooling),
        })
    }

    /// Cross-entropy against `label` without dropout.
    pub fn loss(&self, graph: &HeteroGraph, label: Label) -> Result<f64, ModelError> {
        let mut rec = self.record(graph, &HashMap::new(), None, false)?;
        let loss = rec.tape.cross_entropy(rec.logits, label as usize)?;
        Ok(rec.tape.value(loss).item())
    }

    /// Loss and its gradient for one graph. Dropout is active exactly when
    /// `rng` is given.
    pub fn loss_and_grad(
        &self,
        graph: &HeteroGraph,
        label: Label,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(f64, ModelParams), ModelError> {
        let mut rec = self.record(graph, &HashMap::new(), rng, true)?;
        let loss = rec.tape.cross_entropy(rec.logits, label as usize)?;
        let value = rec.tape.value(loss).item();
        let mut grads = rec.tape.backward(loss)?;
        let mut out = ModelParams::zeros(&self.config);
        for (slot, &var) in out.tensors_mut().iter_mut().zip(&rec.vars) {
            if let Some(g) = grads.take(var) {
                slot.data_mut().copy_from_slice(&g);
            }
        }
        Ok((value, out))
    }
}

fn aggregate(t: &mut Tape, scores: &[Var], msgs: &[Var]) -> Result<(Var, Var), ModelError> {
    let stacked = t.concat_rows(scores)?;
    let pi = t.softmax(stacked)?;
    let m = t.concat_rows(msgs)?;
    let mixed = t.matmul(pi, m)?;
    Ok((t.relu(mixed)?, pi))
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}
