//! Mini-batch Adam training with validation-driven early stopping.
//!
//! Each seed owns three independent ChaCha8 streams: parameter init,
//! per-epoch shuffling, and dropout. Dropout masks for a graph are drawn from
//! a stream keyed by (epoch, graph index), so the parallel per-graph passes
//! inside a batch never share random state and the run is reproducible
//! regardless of thread scheduling.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::eval::{compute_metrics, EvalError, MetricReport};
use crate::graph::HeteroGraph;
use crate::model::{Model, ModelConfig, ModelError, ModelParams};

pub const DEFAULT_SEEDS: [u64; 3] = [13, 42, 2024];

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("graph {0} has no label")]
    MissingLabel(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            batch_size: 16,
            max_epochs: 30,
            patience: 7,
            seeds: DEFAULT_SEEDS.to_vec(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be a finite non-negative number, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be at least 1".into());
        }
        if self.patience > self.max_epochs {
            return bad(format!("patience {} exceeds max_epochs {}", self.patience, self.max_epochs));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }
}

/// First and second moment estimates mirroring the parameter layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: &ModelConfig) -> Self {
        Self { m: ModelParams::zeros(config), v: ModelParams::zeros(config), step: 0 }
    }

    /// One bias-corrected Adam update of `params` against `grads`.
    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.step as i32);
        let tensors = params.tensors_mut().iter_mut().zip(grads.tensors());
        let moments = self.m.tensors_mut().iter_mut().zip(self.v.tensors_mut());
        for ((p, g), (m, v)) in tensors.zip(moments) {
            let slots = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((p, &g), (m, v)) in slots {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            }
        }
    }
}

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone)]
pub struct SeedStreams {
    pub seed: u64,
    pub init: ChaCha8Rng,
    pub shuffle: ChaCha8Rng,
}

impl SeedStreams {
    /// Dropout stream for graph `index` in `epoch`.
    pub fn dropout(&self, epoch: usize, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((1 << 63) | ((epoch as u64) << 32) | index as u64);
        rng
    }
}

pub fn set_seed(seed: u64) -> SeedStreams {
    let mut init = ChaCha8Rng::seed_from_u64(seed);
    init.set_stream(0);
    let mut shuffle = ChaCha8Rng::seed_from_u64(seed);
    shuffle.set_stream(1);
    SeedStreams { seed, init, shuffle }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: MetricReport,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub best: Model,
    /// Serialized checkpoint of `best`.
    pub best_checkpoint: Vec<u8>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn best_val(&self) -> &MetricReport {
        &self.history[self.best_epoch].val
    }
}

fn label_of(graph: &HeteroGraph) -> Result<Label, TrainError> {
    graph.label.ok_or_else(|| TrainError::MissingLabel(graph.target_id.clone()))
}

/// Predicted labels for `graphs`, in order.
pub fn predict_all(model: &Model, graphs: &[HeteroGraph]) -> Result<Vec<Label>, ModelError> {
    graphs.par_iter().map(|g| model.predict(g)).collect()
}

/// Scores `model` on labelled graphs.
pub fn evaluate(model: &Model, graphs: &[HeteroGraph]) -> Result<MetricReport, TrainError> {
    let labels: Vec<Label> = graphs.iter().map(label_of).collect::<Result<_, _>>()?;
    let preds = predict_all(model, graphs)?;
    Ok(compute_metrics(&preds, &labels)?)
}

/// Trains one run from `seed` and returns the checkpoint with the best
/// validation macro-F1.
pub fn train(
    train_set: &[HeteroGraph],
    val_set: &[HeteroGraph],
    model_config: &ModelConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("val"));
    }
    let labels: Vec<Label> = train_set.iter().map(label_of).collect::<Result<_, _>>()?;
    val_set.iter().try_for_each(|g| label_of(g).map(|_| ()))?;

    let mut streams = set_seed(seed);
    let mut model = Model::new(model_config.clone(), &mut streams.init)?;
    let mut adam = AdamState::new(model_config);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<u8>)> = None;
    let mut stale = 0;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut streams.shuffle);
        let mut batch_losses = Vec::new();
        for batch in order.chunks(config.batch_size) {
            let results: Vec<(f64, ModelParams)> = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = streams.dropout(epoch, i);
                    model.loss_and_grad(&train_set[i], labels[i], Some(&mut rng))
                })
                .collect::<Result<_, _>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut grads = ModelParams::zeros(model_config);
            let mut loss = 0.0;
            for (l, g) in &results {
                loss += l;
                grads.add_scaled(g, scale);
            }
            batch_losses.push(loss * scale);
            adam.update(model.params_mut(), &grads, config);
            if !model.params().is_finite() {
                return Err(ModelError::NonFinite("parameters after update".into()).into());
            }
        }
        let train_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        let val = evaluate(&model, val_set)?;
        let improved = best.as_ref().is_none_or(|(f1, _, _)| val.macro_f1 > *f1);
        info!("seed {seed} epoch {epoch}: loss {train_loss:.6} val macro-F1 {:.4}", val.macro_f1);
        if improved {
            best = Some((val.macro_f1, epoch, model.to_bytes()));
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(EpochRecord { epoch, train_loss, val, improved });
        if stale >= config.patience {
            break;
        }
    }

    let (_, best_epoch, best_checkpoint) = best.expect("max_epochs >= 1");
    let best = Model::from_bytes(&best_checkpoint)?;
    Ok(TrainOutcome { seed, best, best_checkpoint, best_epoch, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ablation;

    fn quadratic_config() -> ModelConfig {
        ModelConfig { input_dim: 1, hidden_dim: 1, layers: 0, ablation: Ablation::NoGlobalSummary, ..ModelConfig::default() }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let cfg = quadratic_config();
        let mut params = ModelParams::zeros(&cfg);
        params.get_mut("out.b").unwrap().data_mut()[0] = 1.0;
        let mut grads = ModelParams::zeros(&cfg);
        grads.get_mut("out.b").unwrap().data_mut()[0] = 2.0;
        let mut adam = AdamState::new(&cfg);
        let tc = TrainConfig { lr: 1e-3, ..TrainConfig::default() };
        adam.update(&mut params, &grads, &tc);
        let moved = 1.0 - params.get("out.b").unwrap().data()[0];
        assert!((moved - 1e-3).abs() < 1e-8, "{moved}");
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let cfg = quadratic_config();
        let mut params = ModelParams::init(&cfg, &mut set_seed(1).init);
        let before = params.clone();
        let mut grads = params.clone();
        grads.add_scaled(&before, 3.0);
        let mut adam = AdamState::new(&cfg);
        let tc = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        for _ in 0..5 {
            adam.update(&mut params, &grads, &tc);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn seeds_control_init() {
        let cfg = ModelConfig { input_dim: 4, hidden_dim: 3, ..ModelConfig::default() };
        let a = ModelParams::init(&cfg, &mut set_seed(5).init);
        let b = ModelParams::init(&cfg, &mut set_seed(5).init);
        let c = ModelParams::init(&cfg, &mut set_seed(6).init);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn config_invariants() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { patience: 31, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lr: f64::NAN, ..TrainConfig::default() }.validate().is_err());
    }
}
