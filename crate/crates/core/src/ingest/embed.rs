use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Document, IngestError};
use crate::numeric::Matrix;

pub const POS_DIM: usize = 30;

/// Unit-norm vector that depends only on `(namespace, key, dim)`.
pub fn hash_unit_vector(namespace: &str, key: &str, dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(namespace.as_bytes());
    h.update([0u8]);
    h.update(key.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 || dim == 0 {
            return v.into_iter().map(|x| x / norm.max(1e-12)).collect();
        }
    }
}

/// Word vectors keyed by surface form, POS vectors keyed by UPOS tag.
/// Missing keys fall back to [`hash_unit_vector`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: HashMap<String, Vec<f64>>,
    pos: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// An empty table: every word and tag uses the hash fallback.
    pub fn hashed(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Width of one embedded token row.
    pub fn width(&self) -> usize {
        self.dim + POS_DIM
    }

    pub fn insert_word(&mut self, word: &str, v: Vec<f64>) -> Result<(), IngestError> {
        if v.len() != self.dim {
            return Err(IngestError::Embedding {
                line: 0,
                message: format!("`{word}` has {} values, expected {}", v.len(), self.dim),
            });
        }
        self.words.insert(word.to_string(), v);
        Ok(())
    }

    pub fn insert_pos(&mut self, tag: &str, v: Vec<f64>) -> Result<(), IngestError> {
        if v.len() != POS_DIM {
            return Err(IngestError::Embedding {
                line: 0,
                message: format!("POS `{tag}` has {} values, expected {POS_DIM}", v.len()),
            });
        }
        self.pos.insert(tag.to_string(), v);
        Ok(())
    }

    /// Parses `word v1 ... vd` lines; `d` is taken from the first line.
    pub fn from_text(text: &str) -> Result<Self, IngestError> {
        let mut table = EmbeddingTable::default();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v: Vec<f64> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| IngestError::Embedding {
                    line: i + 1,
                    message: format!("{e}"),
                })?;
            let d = *dim.get_or_insert(v.len());
            if v.len() != d {
                return Err(IngestError::Embedding {
                    line: i + 1,
                    message: format!("{} values, expected {d}", v.len()),
                });
            }
            table.words.insert(word.to_string(), v);
        }
        table.dim = dim.unwrap_or(0);
        Ok(table)
    }

    pub fn word_vector(&self, word: &str) -> Vec<f64> {
        self.words
            .get(word)
            .cloned()
            .unwrap_or_else(|| hash_unit_vector("word", word, self.dim))
    }

    pub fn pos_vector(&self, tag: &str) -> Vec<f64> {
        self.pos
            .get(tag)
            .cloned()
            .unwrap_or_else(|| hash_unit_vector("pos", tag, POS_DIM))
    }
}

/// One row per token: word vector followed by the 30-wide POS vector.
pub fn embed_tokens(doc: &Document, table: &EmbeddingTable) -> Matrix {
    let n = doc.token_count();
    let mut out = Matrix::zeros(n, table.width());
    for (i, tok) in doc.sentences.iter().flatten().enumerate() {
        let row = out.row_mut(i);
        row[..table.dim].copy_from_slice(&table.word_vector(&tok.form));
        row[table.dim..].copy_from_slice(&table.pos_vector(&tok.upos));
    }
    out
}
