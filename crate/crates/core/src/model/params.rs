use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{Ablation, ModelConfig, ModelError};
use crate::autodiff::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Glorot,
    Gaussian,
    Zero,
}

/// Positions of every role in the canonical parameter order.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub proj_sentence: usize,
    pub proj_context: usize,
    pub proj_document: usize,
    pub proj_relation: usize,
    pub null_relation: usize,
    pub coherence: usize,
    pub layers: Vec<LayerIds>,
    pub summary_attn: usize,
    pub pool: usize,
    pub out_w: usize,
    pub out_b: usize,
    pub structural: Option<usize>,
}

/// Per-layer bilinear forms and message transforms. `s2c` is the type used
/// when a context node receives from a sentence, `c2s` the reverse.
#[derive(Debug, Clone)]
pub(crate) struct LayerIds {
    pub q_s2c: usize,
    pub q_c2s: usize,
    pub t_s2c: usize,
    pub t_c2s: usize,
    pub w_coh: usize,
    pub w_s2c: usize,
    pub w_c2s: usize,
}

struct Spec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn specs(config: &ModelConfig) -> (Vec<Spec>, Layout) {
    let (d0, d) = (config.input_dim, config.hidden_dim);
    let mut out: Vec<Spec> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| {
        out.push(Spec { name, shape, init });
        out.len() - 1
    };
    let proj_sentence = push("proj.sentence".into(), vec![d0, d], Init::Glorot);
    let proj_context = push("proj.context".into(), vec![d0, d], Init::Glorot);
    let proj_document = push("proj.document".into(), vec![d0, d], Init::Glorot);
    let proj_relation = push("proj.relation".into(), vec![d0, d], Init::Glorot);
    let null_relation = push("relation.null".into(), vec![d], Init::Gaussian);
    let coherence = push("coherence.w".into(), vec![d, d], Init::Glorot);
    let layers = (0..config.layers)
        .map(|l| LayerIds {
            q_s2c: push(format!("layer{l}.q.s2c"), vec![d, d], Init::Glorot),
            q_c2s: push(format!("layer{l}.q.c2s"), vec![d, d], Init::Glorot),
            t_s2c: push(format!("layer{l}.t.s2c"), vec![d, d], Init::Glorot),
            t_c2s: push(format!("layer{l}.t.c2s"), vec![d, d], Init::Glorot),
            w_coh: push(format!("layer{l}.w.coh"), vec![d, d], Init::Glorot),
            w_s2c: push(format!("layer{l}.w.s2c"), vec![d, d], Init::Glorot),
            w_c2s: push(format!("layer{l}.w.c2s"), vec![d, d], Init::Glorot),
        })
        .collect();
    let summary_attn = push("summary.attn".into(), vec![d], Init::Gaussian);
    let pool = push("pool.b".into(), vec![d], Init::Gaussian);
    let out_w = push("out.w".into(), vec![2, d], Init::Glorot);
    let out_b = push("out.b".into(), vec![2], Init::Zero);
    let structural = (config.ablation == Ablation::StructuralEdges)
        .then(|| push("relation.structural".into(), vec![d], Init::Gaussian));
    let layout = Layout {
        proj_sentence,
        proj_context,
        proj_document,
        proj_relation,
        null_relation,
        coherence,
        layers,
        summary_attn,
        pool,
        out_w,
        out_b,
        structural,
    };
    (out, layout)
}

pub(crate) fn layout(config: &ModelConfig) -> Layout {
    specs(config).1
}

/// Every learnable tensor of the network, in a fixed order and addressable
/// by name.
///
/// Projections are stored input-major (`[d0, d]`) so a stack of raw
/// embeddings projects with a single product.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    /// Glorot-uniform matrices, `N(0, 1/d)` vectors, zero output bias.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let (specs, _) = specs(config);
        let gaussian = Normal::new(0.0, (1.0 / config.hidden_dim as f64).sqrt()).expect("valid std");
        let tensors = specs
            .iter()
            .map(|s| {
                let n: usize = s.shape.iter().product();
                let data: Vec<f64> = match s.init {
                    Init::Zero => vec![0.0; n],
                    Init::Gaussian => (0..n).map(|_| gaussian.sample(rng)).collect(),
                    Init::Glorot => {
                        let limit = (6.0 / (s.shape[0] + s.shape[1]) as f64).sqrt();
                        let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
                        (0..n).map(|_| dist.sample(rng)).collect()
                    }
                };
                Tensor::new(s.shape.clone(), data).expect("spec shape matches data")
            })
            .collect();
        Self::assemble(specs.into_iter().map(|s| s.name).collect(), tensors)
    }

    /// All-zero tensors with the layout of `config` (used for gradient sums).
    pub fn zeros(config: &ModelConfig) -> Self {
        let (specs, _) = specs(config);
        let tensors = specs.iter().map(|s| Tensor::zeros(&s.shape)).collect();
        Self::assemble(specs.into_iter().map(|s| s.name).collect(), tensors)
    }

    /// Builds parameters from named tensors, checking names and shapes
    /// against the layout of `config`.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self, ModelError> {
        let (specs, _) = specs(config);
        if specs.len() != named.len() {
            return Err(ModelError::ConfigMismatch(format!("expected {} tensors, found {}", specs.len(), named.len())));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, (name, tensor)) in specs.iter().zip(named) {
            if spec.name != name || spec.shape != tensor.shape() {
                return Err(ModelError::ConfigMismatch(format!(
                    "expected {} {:?}, found {} {:?}",
                    spec.name,
                    spec.shape,
                    name,
                    tensor.shape()
                )));
            }
            if !tensor.is_finite() {
                return Err(ModelError::NonFinite(name));
            }
            names.push(name);
            tensors.push(tensor);
        }
        Ok(Self::assemble(names, tensors))
    }

    fn assemble(names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, tensors, index }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Adds `scale * other` element-wise; both sides must share a layout.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        debug_assert_eq!(self.names, other.names);
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}
