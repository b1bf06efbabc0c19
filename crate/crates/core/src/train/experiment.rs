//! The long-dependency comparison: a pooling-unpooling encoder against a
//! plain GCN of the same depth on [`synth_with`] chains.

use serde::{Deserialize, Serialize};

use super::{evaluate, prepare_examples, synth_with, train, RelationModel, SynthConfig, TrainConfig, TrainError};
use crate::coarsen::PoolingMethod;
use crate::ingest::EmbeddingTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongDepSetup {
    pub chain_len: usize,
    /// `None` uses [`super::default_cue_offset`].
    pub cue_offset: Option<usize>,
    pub vocab: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub lr: f64,
    pub epochs: usize,
    pub hidden: usize,
    pub clip_norm: f64,
}

impl Default for LongDepSetup {
    fn default() -> Self {
        LongDepSetup {
            chain_len: 32,
            cue_offset: None,
            vocab: 1,
            n_train: 1000,
            n_dev: 200,
            n_test: 400,
            lr: 0.005,
            epochs: 60,
            hidden: 32,
            clip_norm: 5.0,
        }
    }
}

impl LongDepSetup {
    pub fn train_config(&self, seed: u64, levels: usize, sublayers: usize) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            seed,
            levels,
            sublayers,
            hidden: self.hidden,
            method: PoolingMethod::Hybrid,
            embed_dim: 16,
            clip_norm: self.clip_norm,
            ..Default::default()
        }
    }

    fn split(&self, n: usize, seed: u64) -> Vec<crate::ingest::AnnotatedDocument> {
        synth_with(SynthConfig {
            n_instances: n,
            chain_len: self.chain_len,
            vocab: self.vocab,
            seed,
            cue_offset: self.cue_offset,
        })
    }

    /// Test accuracy of one model shape trained with `seed`. The data
    /// splits depend only on `seed`, so different shapes see the same data.
    pub fn run(&self, seed: u64, levels: usize, sublayers: usize) -> Result<f64, TrainError> {
        let cfg = self.train_config(seed, levels, sublayers);
        let table = EmbeddingTable::hashed(cfg.embed_dim);
        let base = seed.wrapping_mul(3);
        let tr = prepare_examples(&self.split(self.n_train, base + 1), &cfg, &table)?;
        let dev = prepare_examples(&self.split(self.n_dev, base + 2), &cfg, &table)?;
        let test = prepare_examples(&self.split(self.n_test, base + 3), &cfg, &table)?;
        let mut model = RelationModel::from_train_config(&cfg, 2)?;
        train(&mut model, &tr, &dev, &cfg)?;
        Ok(evaluate(&model, &test)?.accuracy)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
