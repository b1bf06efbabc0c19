//! Synthetic chain documents whose label needs information from both ends.
//!
//! Each document is one sentence of `chain_len` tokens linked only to their
//! neighbours, so the token graph is a path. The two mentions are the first
//! and last token. A cue token `CUE_c` (c in 0..4) sits `cue_offset` tokens
//! in from each end, and the label is `bit0(left cue) XOR bit1(right cue)`.
//! Everything else is drawn from `vocab` filler words.
//!
//! The cues sit inside the chain rather than on the mentions because the
//! mention forms are replaced by `ENTITY_k` during anonymization, and a cue on
//! the mention itself would be visible to the scorer without any message
//! passing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{
    AnnotatedDocument, Document, Sidecar, SidecarEntity, SidecarInstance, Task, Token,
};

pub const CUE_CLASSES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_instances: usize,
    pub chain_len: usize,
    pub vocab: usize,
    pub seed: u64,
    /// Distance of each cue from its end of the chain. `None` picks
    /// [`default_cue_offset`].
    pub cue_offset: Option<usize>,
}

/// A quarter of the chain plus one (9 for a 32-token chain).
pub fn default_cue_offset(chain_len: usize) -> usize {
    chain_len / 4 + 1
}

/// Largest offset that keeps the two cues distinct and off the mentions.
fn clamp_offset(offset: usize, chain_len: usize) -> usize {
    offset.clamp(1, (chain_len - 2) / 2)
}

/// Label rule shared by the generator and its tests.
pub fn xor_label(left_cue: usize, right_cue: usize) -> usize {
    (left_cue & 1) ^ ((right_cue >> 1) & 1)
}

pub fn synth_long_dep(
    n_instances: usize,
    chain_len: usize,
    vocab: usize,
    seed: u64,
) -> Vec<AnnotatedDocument> {
    synth_with(SynthConfig {
        n_instances,
        chain_len,
        vocab,
        seed,
        cue_offset: None,
    })
}

/// Panics if `chain_len < 4` or `vocab == 0`.
pub fn synth_with(cfg: SynthConfig) -> Vec<AnnotatedDocument> {
    assert!(cfg.chain_len >= 4, "chain_len must be at least 4");
    assert!(cfg.vocab > 0, "vocab must be positive");
    let n = cfg.chain_len;
    let k = clamp_offset(cfg.cue_offset.unwrap_or_else(|| default_cue_offset(n)), n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_instances)
        .map(|i| {
            let left = rng.gen_range(0..CUE_CLASSES);
            let right = rng.gen_range(0..CUE_CLASSES);
            let sentence: Vec<Token> = (0..n)
                .map(|t| {
                    let (form, upos) = if t == 0 || t == n - 1 {
                        (format!("MENTION_{}", t.min(1)), "PROPN")
                    } else if t == k {
                        (format!("CUE_{left}"), "ADJ")
                    } else if t == n - 1 - k {
                        (format!("CUE_{right}"), "ADJ")
                    } else {
                        (format!("w{}", rng.gen_range(0..cfg.vocab)), "NOUN")
                    };
                    Token {
                        form,
                        upos: upos.into(),
                        head: if t == n - 1 { 0 } else { t + 2 },
                        deprel: if t == n - 1 { "root" } else { "dep" }.into(),
                    }
                })
                .collect();
            let doc_id = format!("synth-{i:05}");
            AnnotatedDocument {
                document: Document {
                    doc_id: doc_id.clone(),
                    sentences: vec![sentence],
                },
                sidecar: Sidecar {
                    doc_id,
                    coref: Vec::new(),
                    instances: vec![SidecarInstance {
                        entities: vec![
                            SidecarEntity {
                                id: "e0".into(),
                                mentions: vec![[0, 1]],
                            },
                            SidecarEntity {
                                id: "e1".into(),
                                mentions: vec![[n - 1, n]],
                            },
                        ],
                        label: xor_label(left, right),
                        task: Task::MentionLevel,
                    }],
                },
            }
        })
        .collect()
}
