//! Diagnostics: mention and entity distances on the token graph, coarsening
//! rates, and accuracy bucketed by distance or input length.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarsen::{build_hierarchy, ClauseMatchConfig, PoolingMethod};
use crate::graph::{bfs_distances, AdjacencyMatrix};
use crate::ingest::{AnnotatedDocument, EntityCluster, IngestError, MentionSpan};
use crate::train::{Example, Metrics};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("mention [{start}, {end}) invalid for a graph of {nodes} nodes")]
    BadSpan {
        start: usize,
        end: usize,
        nodes: usize,
    },
    #[error("entity distance needs at least 2 entities, got {0}")]
    TooFewEntities(usize),
    #[error("entity `{0}` has no mentions")]
    EmptyEntity(String),
    #[error("bucket edges must be finite and strictly increasing: {0:?}")]
    BadEdges(Vec<f64>),
    #[error("{instances} instances but {predictions} predictions")]
    PredictionCount { instances: usize, predictions: usize },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// A graph distance that may not exist.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Finite(f64),
    Unreachable,
}

impl Distance {
    pub fn value(self) -> Option<f64> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Unreachable => None,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Unreachable => f.write_str("unreachable"),
        }
    }
}

fn check_span(a: &AdjacencyMatrix, s: MentionSpan) -> Result<(), AnalysisError> {
    if s.is_empty() || s.end > a.size() {
        return Err(AnalysisError::BadSpan {
            start: s.start,
            end: s.end,
            nodes: a.size(),
        });
    }
    Ok(())
}

/// Mean shortest-path length over every (token of `x`, token of `y`) pair.
pub fn mention_pair_distance(
    a: &AdjacencyMatrix,
    x: MentionSpan,
    y: MentionSpan,
) -> Result<Distance, AnalysisError> {
    check_span(a, x)?;
    check_span(a, y)?;
    let mut total = 0usize;
    for s in x.tokens() {
        let dist = bfs_distances(a, s);
        for t in y.tokens() {
            match dist[t] {
                Some(d) => total += d,
                None => return Ok(Distance::Unreachable),
            }
        }
    }
    Ok(Distance::Finite(total as f64 / (x.len() * y.len()) as f64))
}

/// Closest mention pair between two entities.
fn cluster_pair_distance(
    a: &AdjacencyMatrix,
    p: &EntityCluster,
    q: &EntityCluster,
) -> Result<Distance, AnalysisError> {
    let mut best = Distance::Unreachable;
    for &x in &p.mentions {
        for &y in &q.mentions {
            if let Distance::Finite(d) = mention_pair_distance(a, x, y)? {
                if best.value().is_none_or(|b| d < b) {
                    best = Distance::Finite(d);
                }
            }
        }
    }
    Ok(best)
}

/// Largest, over entity pairs, of the closest mention-pair distance.
pub fn entity_distance(
    a: &AdjacencyMatrix,
    clusters: &[EntityCluster],
) -> Result<Distance, AnalysisError> {
    if clusters.len() < 2 {
        return Err(AnalysisError::TooFewEntities(clusters.len()));
    }
    if let Some(c) = clusters.iter().find(|c| c.mentions.is_empty()) {
        return Err(AnalysisError::EmptyEntity(c.entity_id.clone()));
    }
    let mut worst = 0.0f64;
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            match cluster_pair_distance(a, &clusters[i], &clusters[j])? {
                Distance::Finite(d) => worst = worst.max(d),
                Distance::Unreachable => return Ok(Distance::Unreachable),
            }
        }
    }
    Ok(Distance::Finite(worst))
}

/// Mean node count at each of the `steps + 1` levels over the corpus.
pub fn coarsening_stats(
    corpus: &[AnnotatedDocument],
    method: PoolingMethod,
    steps: usize,
    seed: u64,
) -> Result<Vec<f64>, AnalysisError> {
    let cfg = ClauseMatchConfig::default();
    let sizes: Vec<Vec<usize>> = corpus
        .par_iter()
        .map(|d| Ok(build_hierarchy(&d.graph()?.graph, method, steps, &cfg, seed).sizes()))
        .collect::<Result<_, AnalysisError>>()?;
    if sizes.is_empty() {
        return Ok(vec![0.0; steps + 1]);
    }
    Ok((0..=steps)
        .map(|l| sizes.iter().map(|s| s[l] as f64).sum::<f64>() / sizes.len() as f64)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketKey {
    EntityDistance,
    InputLength,
}

impl std::str::FromStr for BucketKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "distance" | "entity_distance" => Ok(BucketKey::EntityDistance),
            "length" | "input_length" => Ok(BucketKey::InputLength),
            other => Err(format!("unknown bucket key `{other}` (expected distance or length)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceKey {
    pub doc_id: String,
    pub value: Distance,
    pub gold: usize,
    pub predicted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Inclusive lower edge; `None` is unbounded.
    pub lower: Option<f64>,
    /// Exclusive upper edge; `None` is unbounded.
    pub upper: Option<f64>,
    pub count: usize,
    /// `None` when the bucket is empty.
    pub metrics: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub key: BucketKey,
    pub edges: Vec<f64>,
    pub instances: Vec<InstanceKey>,
    pub buckets: Vec<Bucket>,
    /// Instances whose entities are disconnected in the token graph.
    pub unreachable: Bucket,
}

fn bucket(lower: Option<f64>, upper: Option<f64>, members: &[&InstanceKey], classes: usize) -> Bucket {
    let gold: Vec<usize> = members.iter().map(|m| m.gold).collect();
    let pred: Vec<usize> = members.iter().map(|m| m.predicted).collect();
    Bucket {
        lower,
        upper,
        count: members.len(),
        metrics: (!members.is_empty()).then(|| Metrics::from_predictions(&gold, &pred, classes)),
    }
}

/// Key value of one example: entity distance on its level-0 graph, or its
/// token count.
pub fn instance_key(ex: &Example, key: BucketKey) -> Result<Distance, AnalysisError> {
    match key {
        BucketKey::InputLength => Ok(Distance::Finite(ex.token_count() as f64)),
        BucketKey::EntityDistance => {
            entity_distance(&ex.hierarchy.levels[0].adjacency, &ex.instance.entities)
        }
    }
}

/// Edges `e_0 < .. < e_k` give buckets `(-inf, e_0), [e_0, e_1), ..,
/// [e_k, inf)`; no edges give a single bucket.
pub fn bucket_report(
    examples: &[Example],
    predictions: &[usize],
    key: BucketKey,
    edges: &[f64],
    classes: usize,
) -> Result<DistanceReport, AnalysisError> {
    if examples.len() != predictions.len() {
        return Err(AnalysisError::PredictionCount {
            instances: examples.len(),
            predictions: predictions.len(),
        });
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::BadEdges(edges.to_vec()));
    }
    let values: Vec<Distance> = examples
        .par_iter()
        .map(|ex| instance_key(ex, key))
        .collect::<Result<_, _>>()?;
    let instances: Vec<InstanceKey> = examples
        .iter()
        .zip(values)
        .zip(predictions)
        .map(|((ex, value), &predicted)| InstanceKey {
            doc_id: ex.instance.doc_id.clone(),
            value,
            gold: ex.instance.label,
            predicted,
        })
        .collect();

    let mut members: BTreeMap<usize, Vec<&InstanceKey>> = BTreeMap::new();
    let mut unreachable = Vec::new();
    for inst in &instances {
        match inst.value {
            Distance::Finite(v) => {
                let b = edges.partition_point(|&e| e <= v);
                members.entry(b).or_default().push(inst);
            }
            Distance::Unreachable => unreachable.push(inst),
        }
    }
    let buckets = (0..=edges.len())
        .map(|b| {
            let lower = b.checked_sub(1).map(|i| edges[i]);
            let upper = edges.get(b).copied();
            bucket(lower, upper, members.get(&b).map_or(&[][..], Vec::as_slice), classes)
        })
        .collect();
    let unreachable = bucket(None, None, &unreachable, classes);
    drop(members);
    Ok(DistanceReport {
        key,
        edges: edges.to_vec(),
        instances,
        buckets,
        unreachable,
    })
}

impl DistanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per bucket plus a final `unreachable` row; metric columns
    /// are empty for empty buckets.
    pub fn to_csv(&self) -> String {
        fn edge(e: Option<f64>, inf: &str) -> String {
            e.map_or_else(|| inf.to_string(), |v| v.to_string())
        }
        let mut s = String::from("bucket,lower,upper,count,accuracy,micro_f1\n");
        let rows = self
            .buckets
            .iter()
            .enumerate()
            .map(|(i, b)| (i.to_string(), b))
            .chain(std::iter::once(("unreachable".to_string(), &self.unreachable)));
        for (name, b) in rows {
            let (acc, f1) = b
                .metrics
                .as_ref()
                .map_or((String::new(), String::new()), |m| {
                    (m.accuracy.to_string(), m.micro_f1.to_string())
                });
            s.push_str(&format!(
                "{name},{},{},{},{acc},{f1}\n",
                edge(b.lower, "-inf"),
                edge(b.upper, "inf"),
                b.count
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeKind, LabeledGraph};

    fn p4() -> AdjacencyMatrix {
        LabeledGraph::new(4, (1..4).map(|i| (i - 1, i, EdgeKind::Adjacency)))
            .unwrap()
            .adjacency()
    }

    fn span(a: usize, b: usize) -> MentionSpan {
        MentionSpan::new(a, b)
    }

    fn ent(id: &str, spans: &[(usize, usize)]) -> EntityCluster {
        EntityCluster {
            entity_id: id.into(),
            mentions: spans.iter().map(|&(a, b)| span(a, b)).collect(),
        }
    }

    #[test]
    fn mention_pair_cases() {
        let a = p4();
        assert_eq!(mention_pair_distance(&a, span(0, 1), span(3, 4)).unwrap(), Distance::Finite(3.0));
        assert_eq!(mention_pair_distance(&a, span(0, 2), span(3, 4)).unwrap(), Distance::Finite(2.5));
        assert_eq!(mention_pair_distance(&a, span(2, 3), span(2, 3)).unwrap(), Distance::Finite(0.0));
        assert!(mention_pair_distance(&a, span(3, 5), span(0, 1)).is_err());
    }

    #[test]
    fn entity_cases() {
        let a = p4();
        assert_eq!(
            entity_distance(&a, &[ent("a", &[(0, 1)]), ent("b", &[(3, 4)])]).unwrap(),
            Distance::Finite(3.0)
        );
        assert_eq!(
            entity_distance(&a, &[ent("a", &[(0, 1), (2, 3)]), ent("b", &[(3, 4)])]).unwrap(),
            Distance::Finite(1.0)
        );
        assert_eq!(
            entity_distance(
                &a,
                &[ent("a", &[(0, 1)]), ent("b", &[(1, 2)]), ent("c", &[(3, 4)])]
            )
            .unwrap(),
            Distance::Finite(3.0)
        );
        assert!(entity_distance(&a, &[ent("a", &[(0, 1)])]).is_err());
        assert!(entity_distance(&a, &[ent("a", &[(0, 1)]), ent("b", &[])]).is_err());
    }

    #[test]
    fn disconnected_is_unreachable() {
        let a = LabeledGraph::new(4, [(0, 1, EdgeKind::Adjacency), (2, 3, EdgeKind::Adjacency)])
            .unwrap()
            .adjacency();
        assert_eq!(mention_pair_distance(&a, span(0, 1), span(3, 4)).unwrap(), Distance::Unreachable);
        assert_eq!(
            entity_distance(&a, &[ent("a", &[(0, 1)]), ent("b", &[(3, 4)])]).unwrap(),
            Distance::Unreachable
        );
        // one reachable mention is enough for the closest pair
        assert_eq!(
            entity_distance(&a, &[ent("a", &[(0, 1), (2, 3)]), ent("b", &[(3, 4)])]).unwrap(),
            Distance::Finite(1.0)
        );
    }

    #[test]
    fn bucket_key_parsing() {
        assert_eq!("distance".parse::<BucketKey>().unwrap(), BucketKey::EntityDistance);
        assert_eq!("length".parse::<BucketKey>().unwrap(), BucketKey::InputLength);
        assert!("width".parse::<BucketKey>().is_err());
    }
}
