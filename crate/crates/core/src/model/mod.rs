//! The omission-aware graph classifier.
//!
//! Projections lift sentence, context, document and relation embeddings into
//! a shared hidden space. Each propagation layer runs one softmax per node over
//! all of its neighbours (coherence and cross edges together), then a global
//! summary is mixed back into every sentence before attention pooling and a
//! two-way linear head.
//!
//! Every matrix except the output head is applied from the right: a hidden
//! row `x` maps to `x M`. The head computes `W_o p + b_o` with `W_o` of shape
//! `[2, d]`.

mod checkpoint;
mod forward;
mod params;

use serde::{Deserialize, Serialize};

use crate::autodiff::TensorError;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use forward::{ForwardTrace, LayerAttention, Model};
pub use params::ModelParams;

pub const DEFAULT_HIDDEN_DIM: usize = 256;
pub const DEFAULT_LAYERS: usize = 2;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which parts of the network are switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// Context nodes and cross edges are dropped.
    NoContext,
    /// Every cross edge carries one shared learned vector instead of its relation.
    StructuralEdges,
    /// Sentence states skip the global summary update.
    NoGlobalSummary,
}

impl Ablation {
    pub const ALL: [Ablation; 4] =
        [Ablation::Full, Ablation::NoContext, Ablation::StructuralEdges, Ablation::NoGlobalSummary];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoContext => "no_context",
            Ablation::StructuralEdges => "structural_edges",
            Ablation::NoGlobalSummary => "no_global_summary",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown ablation {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the raw embeddings stored in graphs.
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    /// Coherence window the graphs were built with.
    pub window: usize,
    /// Weight of the document embedding inside the summary.
    pub lambda: f64,
    pub dropout: f64,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: crate::providers::DEFAULT_EMBEDDING_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            layers: DEFAULT_LAYERS,
            window: crate::graph::DEFAULT_COHERENCE_WINDOW,
            lambda: DEFAULT_LAMBDA,
            dropout: DEFAULT_DROPOUT,
            ablation: Ablation::Full,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(ModelError::ConfigMismatch("dimensions must be positive".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ModelError::ConfigMismatch(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::ConfigMismatch(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}
