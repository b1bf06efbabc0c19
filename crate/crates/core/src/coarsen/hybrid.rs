//! Hybrid matching: structural-equivalence grouping followed by normalized
//! heavy-edge matching over whatever is left.

use std::collections::{BTreeMap, BTreeSet};

use super::MatchingMatrix;
use crate::graph::AdjacencyMatrix;

/// `A[u][v] / sqrt(D(u) * D(v))` with `D` the distinct-neighbor count.
pub fn normalized_edge_weight(a: &AdjacencyMatrix, u: usize, v: usize) -> f64 {
    let w = a.get(u, v);
    assert!(w > 0, "no edge between {u} and {v}");
    let (du, dv) = (a.degree(u), a.degree(v));
    assert!(du > 0 && dv > 0, "positive edge weight with zero degree");
    w as f64 / ((du * dv) as f64).sqrt()
}

/// Groups of two or more nodes with identical (nonempty) neighbor sets.
/// Weights and the diagonal are ignored. Groups come out ordered by their
/// smallest member.
pub fn sem_match(a: &AdjacencyMatrix) -> Vec<Vec<usize>> {
    let mut classes: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for u in 0..a.size() {
        let nbrs: Vec<usize> = a.neighbors(u).collect();
        if !nbrs.is_empty() {
            classes.entry(nbrs).or_default().push(u);
        }
    }
    let mut groups: Vec<Vec<usize>> = classes.into_values().filter(|g| g.len() >= 2).collect();
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Greedy heavy-edge matching on nodes outside `frozen`.
///
/// Nodes are visited by ascending degree (ties by index). An unmatched node
/// pairs with the available neighbor of largest normalized edge weight
/// (ties by index); both then leave the pool. Pairs are `(min, max)`.
pub fn nhem_match(a: &AdjacencyMatrix, frozen: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    let n = a.size();
    let degrees: Vec<usize> = (0..n).map(|u| a.degree(u)).collect();
    let mut order: Vec<usize> = (0..n).filter(|u| !frozen.contains(u)).collect();
    order.sort_by_key(|&u| (degrees[u], u));

    let mut taken: Vec<bool> = (0..n).map(|u| frozen.contains(&u)).collect();
    let mut pairs = Vec::new();
    for u in order {
        if taken[u] {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for v in a.neighbors(u) {
            if taken[v] {
                continue;
            }
            let w = a.get(u, v) as f64 / ((degrees[u] * degrees[v]) as f64).sqrt();
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((v, w));
            }
        }
        if let Some((v, _)) = best {
            taken[u] = true;
            taken[v] = true;
            pairs.push((u.min(v), u.max(v)));
        }
    }
    pairs
}

pub fn hybrid_match(a: &AdjacencyMatrix) -> MatchingMatrix {
    let mut groups = sem_match(a);
    let frozen: BTreeSet<usize> = groups.iter().flatten().copied().collect();
    groups.extend(nhem_match(a, &frozen).into_iter().map(|(u, v)| vec![u, v]));
    MatchingMatrix::from_groups(a.size(), &groups).expect("SEM and NHEM groups are disjoint")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeKind, LabeledGraph};

    fn adj(n: usize, edges: &[(usize, usize)]) -> AdjacencyMatrix {
        LabeledGraph::new(n, edges.iter().map(|&(u, v)| (u, v, EdgeKind::Adjacency)))
            .unwrap()
            .adjacency()
    }

    #[test]
    fn normalized_weight_on_path() {
        let a = adj(4, &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(normalized_edge_weight(&a, 0, 1), 0.7071067811865475);
        assert_eq!(normalized_edge_weight(&a, 1, 2), 0.5);
    }

    #[test]
    fn regular_graph_scores_one_over_degree() {
        // 6-cycle, degree 2
        let a = adj(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]);
        for u in 0..6 {
            assert_eq!(normalized_edge_weight(&a, u, (u + 1) % 6), 0.5);
        }
        // K4, degree 3
        let k4 = adj(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!((normalized_edge_weight(&k4, 0, 3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_coarse_edge() {
        let a = AdjacencyMatrix::from_rows(&[
            vec![2, 2, 0, 1],
            vec![2, 2, 1, 0],
            vec![0, 1, 0, 0],
            vec![1, 0, 0, 0],
        ])
        .unwrap();
        assert_eq!(normalized_edge_weight(&a, 0, 1), 1.0);
    }

    #[test]
    fn sem_on_star_and_path() {
        let star = adj(4, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(sem_match(&star), vec![vec![1, 2, 3]]);
        assert!(sem_match(&adj(4, &[(0, 1), (1, 2), (2, 3)])).is_empty());
    }

    #[test]
    fn nhem_on_path() {
        let a = adj(4, &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(nhem_match(&a, &BTreeSet::new()), vec![(0, 1), (2, 3)]);
        assert!(nhem_match(&AdjacencyMatrix::zeros(1), &BTreeSet::new()).is_empty());
    }

    #[test]
    fn hybrid_cases() {
        let p4 = hybrid_match(&adj(4, &[(0, 1), (1, 2), (2, 3)]));
        assert_eq!(p4.assignment(), &[0, 0, 1, 1]);
        let star = hybrid_match(&adj(4, &[(0, 1), (0, 2), (0, 3)]));
        assert_eq!(star.n_coarse(), 2);
        assert_eq!(star.assignment(), &[0, 1, 1, 1]);
        let empty = hybrid_match(&AdjacencyMatrix::zeros(5));
        assert!(empty.is_identity());
    }
}
