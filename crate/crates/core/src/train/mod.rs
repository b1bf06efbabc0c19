//! Per-instance SGD training, evaluation and checkpoints for the
//! encoder + relation head pair.

mod checkpoint;
mod experiment;
mod metrics;
mod synth;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use experiment::{median, LongDepSetup};
pub use metrics::{ClassScores, Metrics};
pub use synth::{default_cue_offset, synth_long_dep, synth_with, xor_label, SynthConfig, CUE_CLASSES};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarsen::{build_hierarchy, ClauseMatchConfig, GraphHierarchy, PoolingMethod};
use crate::ingest::{anonymize, embed_tokens, AnnotatedDocument, EmbeddingTable, IngestError, RelationInstance};
use crate::model::{ModelConfig, ModelError, MrGcn, PoolMode};
use crate::numeric::{sgd_step, LrSchedule, Matrix, Parameter, Tape};
use crate::re_head::{predict, HeadConfig, PairScorer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training diverged in epoch {epoch} at instance {instance} (`{doc_id}`): loss {loss}")]
    Divergence {
        epoch: usize,
        instance: usize,
        doc_id: String,
        loss: f64,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no training instances")]
    EmptyDataset,
}

impl From<crate::numeric::NumericError> for TrainError {
    fn from(e: crate::numeric::NumericError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay: f64,
    /// Epochs completed before the decay starts.
    pub decay_start: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Graph levels (`L_hp`).
    pub levels: usize,
    /// Layers per block (`S`).
    pub sublayers: usize,
    pub hidden: usize,
    pub method: PoolingMethod,
    pub anonymize: bool,
    pub pool_mode: PoolMode,
    pub dropout: f64,
    /// Word-vector width; POS vectors add 30 more columns.
    pub embed_dim: usize,
    pub classes: usize,
    /// Rescale each instance's gradient to at most this global L2 norm;
    /// 0 disables clipping.
    #[serde(default)]
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            lr_decay: 0.95,
            decay_start: 15,
            epochs: 30,
            seed: 0,
            levels: 2,
            sublayers: 1,
            hidden: 16,
            method: PoolingMethod::Hybrid,
            anonymize: true,
            pool_mode: PoolMode::Sum,
            dropout: 0.0,
            embed_dim: 16,
            classes: 2,
            clip_norm: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if self.levels == 0 || self.sublayers == 0 {
            return Err(TrainError::Config("levels and sublayers must be >= 1".into()));
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return Err(TrainError::Config(format!("clip_norm must be finite and >= 0, got {}", self.clip_norm)));
        }
        if self.classes < 2 {
            return Err(TrainError::Config("need at least 2 classes".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base: self.lr,
            decay: self.lr_decay,
            decay_start: self.decay_start,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: self.embed_dim + crate::ingest::POS_DIM,
            hidden: self.hidden,
            levels: self.levels,
            sublayers: self.sublayers,
            pool_mode: self.pool_mode,
            dropout: self.dropout,
        }
    }
}

/// One relation instance with everything the model needs precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub instance: RelationInstance,
    pub features: Matrix,
    pub hierarchy: GraphHierarchy,
}

impl Example {
    pub fn token_count(&self) -> usize {
        self.features.rows()
    }
}

/// Builds the graph hierarchy once per document and features per instance.
/// Documents are processed in parallel; output keeps input order.
pub fn prepare_examples(
    docs: &[AnnotatedDocument],
    cfg: &TrainConfig,
    table: &EmbeddingTable,
) -> Result<Vec<Example>, TrainError> {
    if table.dim() != cfg.embed_dim {
        return Err(TrainError::Config(format!(
            "embedding table has width {}, config expects {}",
            table.dim(),
            cfg.embed_dim
        )));
    }
    let clause = ClauseMatchConfig::default();
    let per_doc: Vec<Result<Vec<Example>, TrainError>> = docs
        .par_iter()
        .map(|doc| {
            let g = doc.graph()?.graph;
            let hierarchy = build_hierarchy(&g, cfg.method, cfg.levels - 1, &clause, cfg.seed);
            let n = doc.document.token_count();
            doc.sidecar
                .relation_instances()
                .into_iter()
                .map(|inst| {
                    inst.validate(n, cfg.classes)?;
                    let features = if cfg.anonymize {
                        embed_tokens(&anonymize(&doc.document, &inst)?, table)
                    } else {
                        embed_tokens(&doc.document, table)
                    };
                    Ok(Example {
                        instance: inst,
                        features,
                        hierarchy: hierarchy.clone(),
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_doc {
        out.extend(r?);
    }
    Ok(out)
}

/// Numerically stable `-log softmax(logits)[label]` and its gradient
/// `softmax - onehot(label)`.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < logits.len(), "label {label} outside {} classes", logits.len());
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    let loss = z.ln() + max - logits[label];
    let mut grad: Vec<f64> = exp.iter().map(|e| e / z).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationModel {
    pub encoder: MrGcn,
    pub head: PairScorer,
}

impl RelationModel {
    pub fn new(model: ModelConfig, arity: usize, classes: usize) -> Result<Self, ModelError> {
        let head = PairScorer::new(HeadConfig {
            arity,
            width: model.hidden,
            hidden: model.hidden,
            classes,
        })?;
        Ok(RelationModel {
            encoder: MrGcn::new(model)?,
            head,
        })
    }

    pub fn from_train_config(cfg: &TrainConfig, arity: usize) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut m = RelationModel::new(cfg.model_config(), arity, cfg.classes)?;
        m.init_parameters(cfg.seed);
        Ok(m)
    }

    pub fn init_parameters(&mut self, seed: u64) {
        self.encoder.init_parameters(seed);
        self.head.init_parameters(seed.wrapping_add(1));
    }

    pub fn classes(&self) -> usize {
        self.head.config().classes
    }

    /// Encoder parameters, then head parameters.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut p = self.encoder.params();
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.encoder.params_mut();
        p.extend(self.head.params_mut());
        p
    }

    pub fn logits(&self, ex: &Example) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let (out, _) = self.record(&mut tape, ex, None)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn predict(&self, ex: &Example) -> Result<usize, ModelError> {
        Ok(predict(&self.logits(ex)?))
    }

    fn record(
        &self,
        tape: &mut Tape,
        ex: &Example,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(crate::numeric::Var, Vec<crate::numeric::Var>), ModelError> {
        let enc = self.encoder.bind(tape)?;
        let head = self.head.bind(tape)?;
        let x = tape.leaf(ex.features.clone())?;
        let (u0, _) = self.encoder.forward_on_tape(tape, &enc, &ex.hierarchy, x, dropout)?;
        let logits = self.head.score_on_tape(tape, &head, u0, &ex.instance.entities)?;
        let mut bound = enc;
        bound.extend(head);
        Ok((logits, bound))
    }

    /// Cross-entropy loss of one example; parameter gradients are added to
    /// each [`Parameter::grad`].
    pub fn accumulate_gradients(
        &mut self,
        ex: &Example,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let (out, bound) = self.record(&mut tape, ex, dropout)?;
        let (loss, grad) = cross_entropy(tape.value(out).data(), ex.instance.label);
        if !loss.is_finite() {
            return Ok(loss);
        }
        let seed = Matrix::from_vec(1, grad.len(), grad)?;
        let mut grads = tape.backward(out, seed)?;
        for (p, v) in self.params_mut().into_iter().zip(bound) {
            if let Some(g) = grads.take(v) {
                p.accumulate(&g)?;
            }
        }
        Ok(loss)
    }
}

/// Predicted class per example, computed in parallel, in input order.
pub fn predict_all(model: &RelationModel, examples: &[Example]) -> Result<Vec<usize>, ModelError> {
    examples.par_iter().map(|ex| model.predict(ex)).collect()
}

pub fn evaluate(model: &RelationModel, examples: &[Example]) -> Result<Metrics, ModelError> {
    let pred = predict_all(model, examples)?;
    let gold: Vec<usize> = examples.iter().map(|e| e.instance.label).collect();
    Ok(Metrics::from_predictions(&gold, &pred, model.classes()))
}

/// Scales every gradient by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the norm before scaling.
pub fn clip_gradients(params: Vec<&mut Parameter>, max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .flat_map(|p| p.grad.data())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in params {
            p.grad = p.grad.scale(s);
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch, measured before each update.
    pub loss: f64,
    /// Dev accuracy after the epoch.
    pub dev_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev: Metrics,
}

impl TrainReport {
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,loss,dev_metric\n");
        for r in &self.curve {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.loss, r.dev_metric));
        }
        s
    }
}

/// Runs `cfg.epochs` epochs of per-instance SGD in dataset order. After
/// each epoch the dev set is scored (the training set when `dev` is empty);
/// the parameters of the best dev epoch, earliest on ties, are restored
/// before returning.
pub fn train(
    model: &mut RelationModel,
    train_set: &[Example],
    dev: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let dev = if dev.is_empty() { train_set } else { dev };
    let schedule = cfg.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD20F_0075);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, Metrics, RelationModel)> = None;

    for epoch in 1..=cfg.epochs {
        let lr = schedule.for_epoch(epoch);
        let mut total = 0.0;
        for (i, ex) in train_set.iter().enumerate() {
            for p in model.params_mut() {
                p.zero_grad();
            }
            let dropout = (cfg.dropout > 0.0).then_some(&mut rng);
            let loss = model.accumulate_gradients(ex, dropout).map_err(|e| match e {
                ModelError::Numeric(crate::numeric::NumericError::NonFinite(_)) => {
                    TrainError::Divergence {
                        epoch,
                        instance: i,
                        doc_id: ex.instance.doc_id.clone(),
                        loss: f64::NAN,
                    }
                }
                other => other.into(),
            })?;
            if !loss.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    instance: i,
                    doc_id: ex.instance.doc_id.clone(),
                    loss,
                });
            }
            total += loss;
            if cfg.clip_norm > 0.0 {
                clip_gradients(model.params_mut(), cfg.clip_norm);
            }
            sgd_step(model.params_mut(), lr);
        }
        let metrics = evaluate(model, dev)?;
        curve.push(EpochRecord {
            epoch,
            loss: total / train_set.len() as f64,
            dev_metric: metrics.accuracy,
        });
        if best.as_ref().is_none_or(|(_, m, _)| metrics.accuracy > m.accuracy) {
            best = Some((epoch, metrics, model.clone()));
        }
    }
    let (best_epoch, best_dev, best_model) = best.expect("at least one epoch");
    *model = best_model;
    for p in model.params_mut() {
        p.zero_grad();
    }
    Ok(TrainReport {
        curve,
        best_epoch,
        best_dev,
    })
}
