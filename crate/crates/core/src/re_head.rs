//! Relation scoring over token embeddings.
//!
//! Each mention is max-pooled over its span, and the whole document is
//! max-pooled into one context vector. Every combination of one mention per
//! entity is scored by a two-layer MLP over
//! `[mention_1, ..., mention_k, context]`, and the per-class scores of all
//! combinations are merged with log-sum-exp.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{EntityCluster, MentionSpan};
use crate::model::{glorot_uniform, ModelError};
use crate::numeric::{Matrix, NumericError, Parameter, Tape, Var};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Entities per instance.
    pub arity: usize,
    /// Token embedding width.
    pub width: usize,
    pub hidden: usize,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairScorer {
    config: HeadConfig,
    pub w1: Parameter,
    pub b1: Parameter,
    pub w2: Parameter,
    pub b2: Parameter,
}

impl PairScorer {
    /// Zero-initialized scorer.
    pub fn new(config: HeadConfig) -> Result<Self, ModelError> {
        if config.arity < 2 || config.width == 0 || config.hidden == 0 || config.classes == 0 {
            return Err(ModelError::Config(format!("bad head configuration {config:?}")));
        }
        let input = (config.arity + 1) * config.width;
        Ok(PairScorer {
            w1: Parameter::new(Matrix::zeros(input, config.hidden)),
            b1: Parameter::new(Matrix::zeros(1, config.hidden)),
            w2: Parameter::new(Matrix::zeros(config.hidden, config.classes)),
            b2: Parameter::new(Matrix::zeros(1, config.classes)),
            config,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn input_width(&self) -> usize {
        (self.config.arity + 1) * self.config.width
    }

    pub fn init_parameters(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        glorot_uniform(&mut self.w1, &mut rng);
        glorot_uniform(&mut self.w2, &mut rng);
        self.b1 = Parameter::new(Matrix::zeros(1, self.config.hidden));
        self.b2 = Parameter::new(Matrix::zeros(1, self.config.classes));
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>, ModelError> {
        self.params()
            .into_iter()
            .map(|p| tape.leaf(p.value.clone()).map_err(Into::into))
            .collect()
    }

    /// Scores stacked tuple rows `(t x input_width)` into `(t x classes)`.
    fn mlp_on_tape(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, ModelError> {
        let z = tape.matmul(x, bound[0])?;
        let z = tape.add_row(z, bound[1])?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, bound[2])?;
        Ok(tape.add_row(z, bound[3])?)
    }

    /// Class logits for one entity tuple: log-sum-exp over every
    /// combination of one mention per cluster.
    pub fn score_on_tape(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        tokens: Var,
        clusters: &[EntityCluster],
    ) -> Result<Var, ModelError> {
        if clusters.len() != self.config.arity {
            return Err(ModelError::Config(format!(
                "scorer takes {} entities, got {}",
                self.config.arity,
                clusters.len()
            )));
        }
        if let Some(c) = clusters.iter().find(|c| c.mentions.is_empty()) {
            return Err(ModelError::Config(format!(
                "entity `{}` has no mentions",
                c.entity_id
            )));
        }
        let n = tape.value(tokens).rows();
        let all: Vec<usize> = (0..n).collect();
        let context = tape.max_pool_rows(tokens, &all)?;

        let mut cache: HashMap<MentionSpan, Var> = HashMap::new();
        let mut per_cluster = Vec::with_capacity(clusters.len());
        for c in clusters {
            let mut vars = Vec::with_capacity(c.mentions.len());
            for span in &c.mentions {
                let v = match cache.get(span) {
                    Some(&v) => v,
                    None => {
                        let v = mention_on_tape(tape, tokens, *span)?;
                        cache.insert(*span, v);
                        v
                    }
                };
                vars.push(v);
            }
            per_cluster.push(vars);
        }

        let mut rows = Vec::new();
        for combo in cartesian(&per_cluster.iter().map(Vec::len).collect::<Vec<_>>()) {
            let mut parts: Vec<Var> = combo
                .iter()
                .enumerate()
                .map(|(k, &i)| per_cluster[k][i])
                .collect();
            parts.push(context);
            rows.push(tape.concat_cols(&parts)?);
        }
        let stacked = tape.concat_rows(&rows)?;
        let logits = self.mlp_on_tape(tape, bound, stacked)?;
        Ok(tape.logsumexp_rows(logits)?)
    }
}

fn mention_on_tape(tape: &mut Tape, tokens: Var, span: MentionSpan) -> Result<Var, ModelError> {
    if span.is_empty() {
        return Err(NumericError::EmptyInput("mention span").into());
    }
    let rows: Vec<usize> = span.tokens().collect();
    Ok(tape.max_pool_rows(tokens, &rows)?)
}

/// All index tuples `(i_1, .., i_k)` with `i_j < sizes[j]`, last index
/// fastest.
pub fn cartesian(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &s in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..s).map(move |i| {
                    let mut p = prefix.clone();
                    p.push(i);
                    p
                })
            })
            .collect();
    }
    out
}

/// Columnwise max over the span's rows.
pub fn mention_embed(h: &Matrix, span: MentionSpan) -> Result<Matrix, ModelError> {
    if span.is_empty() {
        return Err(NumericError::EmptyInput("mention span").into());
    }
    let rows: Vec<usize> = span.tokens().collect();
    Ok(h.row_max_pool(&rows)?)
}

/// Logits for a single mention tuple given pooled vectors.
pub fn mention_tuple_score(
    scorer: &PairScorer,
    mentions: &[Matrix],
    context: &Matrix,
) -> Result<Matrix, ModelError> {
    if mentions.len() != scorer.config.arity {
        return Err(ModelError::Config(format!(
            "scorer takes {} mentions, got {}",
            scorer.config.arity,
            mentions.len()
        )));
    }
    let mut parts: Vec<&Matrix> = mentions.iter().collect();
    parts.push(context);
    let x = Matrix::concat_cols(&parts)?;
    let hdn = x
        .matmul(&scorer.w1.value)?
        .add_row_broadcast(&scorer.b1.value)?
        .relu();
    Ok(hdn
        .matmul(&scorer.w2.value)?
        .add_row_broadcast(&scorer.b2.value)?)
}

/// Entity-tuple logits on plain matrices; `context` is the pooled document
/// vector.
pub fn entity_pair_score(
    scorer: &PairScorer,
    clusters: &[EntityCluster],
    h: &Matrix,
    context: &Matrix,
) -> Result<Matrix, ModelError> {
    if let Some(c) = clusters.iter().find(|c| c.mentions.is_empty()) {
        return Err(ModelError::Config(format!(
            "entity `{}` has no mentions",
            c.entity_id
        )));
    }
    let pooled: Vec<Vec<Matrix>> = clusters
        .iter()
        .map(|c| c.mentions.iter().map(|&m| mention_embed(h, m)).collect())
        .collect::<Result<_, _>>()?;
    let sizes: Vec<usize> = pooled.iter().map(Vec::len).collect();
    let mut scores = Vec::new();
    for combo in cartesian(&sizes) {
        let tuple: Vec<Matrix> = combo
            .iter()
            .enumerate()
            .map(|(k, &i)| pooled[k][i].clone())
            .collect();
        scores.push(mention_tuple_score(scorer, &tuple, context)?);
    }
    let classes = scorer.config.classes;
    let mut out = Matrix::zeros(1, classes);
    for c in 0..classes {
        let col: Vec<f64> = scores.iter().map(|s| s.get(0, c)).collect();
        out.set(0, c, crate::numeric::logsumexp(&col)?);
    }
    Ok(out)
}

/// Argmax with ties resolved to the lowest index.
pub fn predict(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}
