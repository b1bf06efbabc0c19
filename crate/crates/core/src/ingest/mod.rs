//! Document ingestion: CoNLL-U parsing, the JSON annotation sidecar,
//! document-graph construction, entity anonymization and token features.

mod conllu;
mod embed;

pub use conllu::{parse_conllu, to_conllu, Document, Token};
pub use embed::{embed_tokens, hash_unit_vector, EmbeddingTable, POS_DIM};

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeKind, GraphError, LabeledGraph, NodeId};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error("graph construction: {0}")]
    Graph(#[from] GraphError),
    #[error("mention [{start}, {end}) invalid for a document of {tokens} tokens")]
    BadSpan {
        start: usize,
        end: usize,
        tokens: usize,
    },
    #[error("token {token} belongs to mentions of entities {first} and {second}")]
    OverlappingEntities {
        token: usize,
        first: usize,
        second: usize,
    },
    #[error("relation instance: {0}")]
    BadInstance(String),
    #[error("embedding file line {line}: {message}")]
    Embedding { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Token graph of a whole document in reading order.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentGraph {
    pub graph: LabeledGraph,
    /// `[start, end)` token range of each sentence.
    pub sentence_spans: Vec<(usize, usize)>,
    pub root_tokens: Vec<NodeId>,
}

/// Links consecutive tokens, dependency arcs (head to dependent, root arcs
/// omitted), consecutive sentence roots and the given coreference pairs.
/// Edge order: per sentence adjacency then arcs, then sentence links, then
/// coreference.
pub fn build_document_graph(
    doc: &Document,
    coref: &[(usize, usize)],
) -> Result<DocumentGraph, IngestError> {
    let n = doc.token_count();
    let mut edges = Vec::new();
    let mut spans = Vec::with_capacity(doc.sentences.len());
    let mut roots = Vec::with_capacity(doc.sentences.len());
    let mut off = 0;
    for sent in &doc.sentences {
        for i in 1..sent.len() {
            edges.push((off + i - 1, off + i, EdgeKind::Adjacency));
        }
        for (i, tok) in sent.iter().enumerate() {
            if tok.head == 0 {
                roots.push(NodeId(off + i));
            } else {
                edges.push((
                    off + tok.head - 1,
                    off + i,
                    EdgeKind::Dependency(tok.deprel.clone()),
                ));
            }
        }
        spans.push((off, off + sent.len()));
        off += sent.len();
    }
    for w in roots.windows(2) {
        edges.push((w[0].0, w[1].0, EdgeKind::SentenceSeq));
    }
    for &(a, b) in coref {
        edges.push((a, b, EdgeKind::Coreference));
    }
    Ok(DocumentGraph {
        graph: LabeledGraph::new(n, edges)?,
        sentence_spans: spans,
        root_tokens: roots,
    })
}

/// `[start, end)` token span of one mention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MentionSpan {
    pub start: usize,
    pub end: usize,
}

impl MentionSpan {
    pub fn new(start: usize, end: usize) -> Self {
        MentionSpan { start, end }
    }

    pub fn tokens(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, tokens: usize) -> Result<(), IngestError> {
        if self.start < self.end && self.end <= tokens {
            Ok(())
        } else {
            Err(IngestError::BadSpan {
                start: self.start,
                end: self.end,
                tokens,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityCluster {
    pub entity_id: String,
    pub mentions: Vec<MentionSpan>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "mention")]
    MentionLevel,
    #[serde(rename = "entity")]
    EntityLevel,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationInstance {
    pub doc_id: String,
    pub entities: Vec<EntityCluster>,
    pub label: usize,
    pub task: Task,
}

impl RelationInstance {
    pub fn validate(&self, tokens: usize, num_classes: usize) -> Result<(), IngestError> {
        if self.entities.len() < 2 {
            return Err(IngestError::BadInstance(format!(
                "{}: needs at least 2 entities, found {}",
                self.doc_id,
                self.entities.len()
            )));
        }
        for e in &self.entities {
            if e.mentions.is_empty() {
                return Err(IngestError::BadInstance(format!(
                    "{}: entity `{}` has no mentions",
                    self.doc_id, e.entity_id
                )));
            }
            for m in &e.mentions {
                m.validate(tokens)?;
            }
        }
        if self.label >= num_classes {
            return Err(IngestError::BadInstance(format!(
                "{}: label {} outside {num_classes} classes",
                self.doc_id, self.label
            )));
        }
        Ok(())
    }
}

/// Replaces every token inside a mention of entity `k` with `ENTITY_k`.
/// Spans of different entities may not overlap.
pub fn anonymize(doc: &Document, instance: &RelationInstance) -> Result<Document, IngestError> {
    let n = doc.token_count();
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (k, e) in instance.entities.iter().enumerate() {
        for m in &e.mentions {
            m.validate(n)?;
            for t in m.tokens() {
                match owner.get(&t) {
                    Some(&other) if other != k => {
                        return Err(IngestError::OverlappingEntities {
                            token: t,
                            first: other,
                            second: k,
                        })
                    }
                    _ => {
                        owner.insert(t, k);
                    }
                }
            }
        }
    }
    let mut out = doc.clone();
    for (t, k) in owner {
        out.token_mut(t).expect("validated span").form = format!("ENTITY_{k}");
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarEntity {
    pub id: String,
    pub mentions: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarInstance {
    pub entities: Vec<SidecarEntity>,
    pub label: usize,
    pub task: Task,
}

/// Per-document annotations that CoNLL-U has no slot for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub doc_id: String,
    #[serde(default)]
    pub coref: Vec<[usize; 2]>,
    #[serde(default)]
    pub instances: Vec<SidecarInstance>,
}

impl Sidecar {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn coref_pairs(&self) -> Vec<(usize, usize)> {
        self.coref.iter().map(|&[a, b]| (a, b)).collect()
    }

    pub fn relation_instances(&self) -> Vec<RelationInstance> {
        self.instances
            .iter()
            .map(|inst| RelationInstance {
                doc_id: self.doc_id.clone(),
                entities: inst
                    .entities
                    .iter()
                    .map(|e| EntityCluster {
                        entity_id: e.id.clone(),
                        mentions: e
                            .mentions
                            .iter()
                            .map(|&[s, t]| MentionSpan::new(s, t))
                            .collect(),
                    })
                    .collect(),
                label: inst.label,
                task: inst.task,
            })
            .collect()
    }
}

/// A parsed document together with its sidecar.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedDocument {
    pub document: Document,
    pub sidecar: Sidecar,
}

impl AnnotatedDocument {
    pub fn from_texts(conllu: &str, sidecar: Option<&str>) -> Result<Self, IngestError> {
        let mut document = parse_conllu(conllu)?;
        let sidecar = match sidecar {
            Some(s) => Sidecar::from_json(s)?,
            None => Sidecar {
                doc_id: document.doc_id.clone(),
                coref: Vec::new(),
                instances: Vec::new(),
            },
        };
        if document.doc_id.is_empty() {
            document.doc_id = sidecar.doc_id.clone();
        }
        let n = document.token_count();
        for &[a, b] in &sidecar.coref {
            if a >= n || b >= n {
                return Err(IngestError::BadInstance(format!(
                    "{}: coreference pair ({a}, {b}) out of range",
                    sidecar.doc_id
                )));
            }
        }
        Ok(AnnotatedDocument { document, sidecar })
    }

    pub fn graph(&self) -> Result<DocumentGraph, IngestError> {
        build_document_graph(&self.document, &self.sidecar.coref_pairs())
    }
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a `.conllu` file and the `.json` sidecar next to it, if present.
pub fn load_document(conllu_path: &Path) -> Result<AnnotatedDocument, IngestError> {
    let text = read(conllu_path)?;
    let side_path = conllu_path.with_extension("json");
    let side = if side_path.exists() {
        Some(read(&side_path)?)
    } else {
        None
    };
    let mut doc = AnnotatedDocument::from_texts(&text, side.as_deref())?;
    if doc.document.doc_id.is_empty() {
        let stem = conllu_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        doc.document.doc_id = stem.clone();
        doc.sidecar.doc_id = stem;
    }
    Ok(doc)
}

/// Every `*.conllu` in `dir`, sorted by file name.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<AnnotatedDocument>, IngestError> {
    let entries = fs::read_dir(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "conllu"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_document(p)).collect()
}
