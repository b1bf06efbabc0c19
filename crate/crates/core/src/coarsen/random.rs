//! Random edge-coin pooling baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MatchingMatrix;
use crate::graph::AdjacencyMatrix;

/// Visits edges `(u, v)`, `u < v`, in row-major order and merges the pair
/// with probability 0.5 when both endpoints are still unmatched.
pub fn random_match(a: &AdjacencyMatrix, seed: u64) -> MatchingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_match_with(a, || rng.gen_bool(0.5))
}

/// Same visiting rule with an arbitrary coin.
pub fn random_match_with(a: &AdjacencyMatrix, mut coin: impl FnMut() -> bool) -> MatchingMatrix {
    let n = a.size();
    let mut taken = vec![false; n];
    let mut groups = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if a.get(u, v) == 0 {
                continue;
            }
            // the coin is flipped for every edge so the stream position
            // depends only on the graph
            let heads = coin();
            if heads && !taken[u] && !taken[v] {
                taken[u] = true;
                taken[v] = true;
                groups.push(vec![u, v]);
            }
        }
    }
    MatchingMatrix::from_groups(n, &groups).expect("pairs are disjoint")
}
