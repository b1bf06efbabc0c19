//! One round of hybrid matching on the eight-node example graph: structural
//! equivalence groups first, then heavy-edge pairs among what is left.
//!
//! cargo run --example hybrid_matching

use std::collections::BTreeSet;

use coarsen_gnn::coarsen::{
    coarsen_adjacency, hybrid_match, nhem_match, normalized_edge_weight, sem_match,
};
use coarsen_gnn::graph::{shortest_path_length, EdgeKind, LabeledGraph, NodeId};

fn main() {
    let edges = [(0, 1), (1, 2), (1, 4), (3, 4), (4, 5), (5, 6), (6, 7), (5, 7)];
    let g = LabeledGraph::new(8, edges.map(|(u, v)| (u, v, EdgeKind::Adjacency))).unwrap();
    let a = g.adjacency();

    println!("normalized edge weights:");
    for (u, v) in edges {
        println!("  n{u}-n{v}: {:.3}", normalized_edge_weight(&a, u, v));
    }

    let groups = sem_match(&a);
    println!("structural equivalence groups: {groups:?}");
    let frozen: BTreeSet<usize> = groups.iter().flatten().copied().collect();
    println!("heavy-edge pairs: {:?}", nhem_match(&a, &frozen));

    let m = hybrid_match(&a);
    println!("supernodes: {:?}", m.members());
    let coarse = coarsen_adjacency(&a, &m).unwrap();
    println!("coarse adjacency:");
    for row in coarse.to_rows() {
        println!("  {row:?}");
    }

    for (u, v) in [(3, 7), (0, 7)] {
        let before = shortest_path_length(&a, NodeId(u), NodeId(v));
        let after = shortest_path_length(
            &coarse,
            NodeId(m.supernode_of(u)),
            NodeId(m.supernode_of(v)),
        );
        println!("distance n{u} to n{v}: {before:?} before, {after:?} after");
    }
}
