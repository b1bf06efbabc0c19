//! Shared generators, oracles and checks for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use proptest::prelude::*;
use proptest::sample::Index;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coarsen_gnn::coarsen::{
    build_hierarchy, clause_match_graph, coarsen_adjacency, hybrid_match,
    merges_across_core_edges, ClauseMatchConfig, GraphHierarchy, MatchingMatrix, PoolingMethod,
};
use coarsen_gnn::graph::{bfs_distances, AdjacencyMatrix, EdgeKind, LabeledGraph};
use coarsen_gnn::ingest::{
    load_corpus_dir, load_document, EmbeddingTable, EntityCluster, MentionSpan,
};
use coarsen_gnn::model::{ModelConfig, MrGcn, PoolMode};
use coarsen_gnn::numeric::{Matrix, NumericError, Tape, Var};
use coarsen_gnn::re_head::{entity_pair_score, mention_embed, mention_tuple_score, HeadConfig, PairScorer};
use coarsen_gnn::train::{
    cross_entropy, prepare_examples, synth_long_dep, RelationModel, TrainConfig,
};

pub const METHODS: [PoolingMethod; 4] = [
    PoolingMethod::Hybrid,
    PoolingMethod::Clause,
    PoolingMethod::Random,
    PoolingMethod::Identity,
];

pub const CORE_LABELS: [&str; 4] = ["nsubj", "dobj", "iobj", "ccomp"];
pub const OTHER_LABELS: [&str; 6] = ["det", "amod", "case", "obl", "nmod", "compound"];

pub fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample")
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_coarsen-gnn")
}

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

// ---------------------------------------------------------------------------
// generators

/// Untyped graph with up to `max_n` nodes and about `2n` random edges.
pub fn arb_graph(max_n: usize) -> impl Strategy<Value = LabeledGraph> {
    (1..=max_n)
        .prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..=2 * n)))
        .prop_map(|(n, pairs)| {
            let edges = pairs
                .into_iter()
                .filter(|(u, v)| u != v)
                .map(|(u, v)| (u, v, EdgeKind::Adjacency));
            LabeledGraph::new(n, edges).unwrap()
        })
}

/// Dependency tree over shuffled token positions with random core and
/// non-core labels, plus optional adjacency links between consecutive
/// tokens. With `extra`, random coreference and adjacency edges are added,
/// so the typed graph is no longer a tree.
pub fn arb_typed_graph(max_n: usize, extra: bool) -> impl Strategy<Value = LabeledGraph> {
    let all_labels: Vec<&'static str> = CORE_LABELS.iter().chain(&OTHER_LABELS).copied().collect();
    (1..=max_n)
        .prop_flat_map(move |n| {
            let m = n.saturating_sub(1);
            (
                Just(n),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
                prop::collection::vec(any::<Index>(), m),
                prop::collection::vec(prop::sample::select(all_labels.clone()), m),
                prop::collection::vec(any::<bool>(), m),
                prop::collection::vec((0..n, 0..n, any::<bool>()), 0..=if extra { n } else { 0 }),
            )
        })
        .prop_map(|(n, perm, heads, labels, chain, extras)| {
            let mut edges = Vec::new();
            for i in 1..n {
                if chain[i - 1] {
                    edges.push((i - 1, i, EdgeKind::Adjacency));
                }
            }
            for i in 1..n {
                let h = heads[i - 1].index(i);
                edges.push((perm[h], perm[i], EdgeKind::dependency(labels[i - 1])));
            }
            for (u, v, coref) in extras {
                if u != v {
                    let kind = if coref { EdgeKind::Coreference } else { EdgeKind::Adjacency };
                    edges.push((u, v, kind));
                }
            }
            LabeledGraph::new(n, edges).unwrap()
        })
}

// ---------------------------------------------------------------------------
// oracles

/// Every weighted fine edge `(u, v, w)` adds `w` to `(M(u), M(v))`.
pub fn pair_accumulation(a: &AdjacencyMatrix, m: &MatchingMatrix) -> AdjacencyMatrix {
    let mut out = AdjacencyMatrix::zeros(m.n_coarse());
    for u in 0..a.size() {
        for v in 0..a.size() {
            let w = a.get(u, v);
            if w > 0 {
                out.add(m.supernode_of(u), m.supernode_of(v), w);
            }
        }
    }
    out
}

/// `Mᵀ A M` with dense floating-point matrices.
pub fn dense_triple_product(a: &AdjacencyMatrix, m: &MatchingMatrix) -> Vec<Vec<f64>> {
    let n = a.size();
    let af = Matrix::from_vec(n, n, a.to_f64()).unwrap();
    let md = m.to_dense();
    md.transpose().matmul(&af).unwrap().matmul(&md).unwrap().to_rows()
}

fn hierarchies(g: &LabeledGraph, steps: usize, seed: u64) -> Vec<GraphHierarchy> {
    let cfg = ClauseMatchConfig::default();
    METHODS
        .iter()
        .map(|&m| build_hierarchy(g, m, steps, &cfg, seed))
        .collect()
}

// ---------------------------------------------------------------------------
// properties

/// One-hot rows, exact `Mᵀ A M` against both oracles, symmetry, weight
/// conservation and member bookkeeping, at every level of every method.
pub fn prop_partition_algebra(g: &LabeledGraph, seed: u64) -> Result<(), TestCaseError> {
    for h in hierarchies(g, 3, seed) {
        let ctx = h.method;
        prop_assert_eq!(h.levels.len(), 4);
        for (l, m) in h.matchings.iter().enumerate() {
            let a = &h.levels[l].adjacency;
            let coarse = &h.levels[l + 1].adjacency;
            prop_assert_eq!(m.n_fine(), a.size());
            let dense = m.to_dense();
            for r in 0..m.n_fine() {
                let row = dense.row(r);
                prop_assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1, "{} row {}", ctx, r);
                prop_assert!(row.iter().all(|&x| x == 0.0 || x == 1.0));
            }
            for c in 0..m.n_coarse() {
                prop_assert!((0..m.n_fine()).any(|r| dense.get(r, c) == 1.0), "empty supernode {}", c);
            }
            prop_assert_eq!(coarse, &pair_accumulation(a, m));
            prop_assert_eq!(coarse, &coarsen_adjacency(a, m).unwrap());
            let oracle = dense_triple_product(a, m);
            let got: Vec<Vec<f64>> =
                coarse.to_rows().iter().map(|r| r.iter().map(|&w| w as f64).collect()).collect();
            prop_assert_eq!(got, oracle);
            if a.is_symmetric() {
                prop_assert!(coarse.is_symmetric());
            }
            prop_assert_eq!(coarse.total_weight(), a.total_weight());
            prop_assert!(coarse.size() <= a.size());
        }
        for level in &h.levels {
            let mut seen: Vec<usize> = level.members.iter().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..g.node_count()).collect::<Vec<_>>());
        }
    }
    Ok(())
}

/// Supernode distances never exceed the fine distances they came from.
pub fn prop_distance_contraction(g: &LabeledGraph, seed: u64) -> Result<(), TestCaseError> {
    for h in hierarchies(g, 3, seed) {
        for (l, m) in h.matchings.iter().enumerate() {
            let fine = &h.levels[l].adjacency;
            let coarse = &h.levels[l + 1].adjacency;
            let coarse_d: Vec<Vec<Option<usize>>> =
                (0..coarse.size()).map(|s| bfs_distances(coarse, s)).collect();
            for u in 0..fine.size() {
                let du = bfs_distances(fine, u);
                for (v, d) in du.iter().enumerate() {
                    if let Some(d) = d {
                        let c = coarse_d[m.supernode_of(u)][m.supernode_of(v)];
                        prop_assert!(c.is_some_and(|c| c <= *d),
                            "{} level {}: d({},{})={} but coarse {:?}", h.method, l, u, v, d, c);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Shape of the groups one round produces: hybrid groups are a structural
/// equivalence class or an adjacent pair, random groups are adjacent pairs.
pub fn prop_round_shapes(g: &LabeledGraph, seed: u64) -> Result<(), TestCaseError> {
    for method in [PoolingMethod::Hybrid, PoolingMethod::Random] {
        let h = build_hierarchy(g, method, 3, &ClauseMatchConfig::default(), seed);
        for (l, m) in h.matchings.iter().enumerate() {
            let a = &h.levels[l].adjacency;
            for group in m.members().iter().filter(|grp| grp.len() > 1) {
                let adjacent_pair = group.len() == 2 && a.get(group[0], group[1]) > 0;
                let nbrs = |u: usize| a.neighbors(u).collect::<Vec<_>>();
                let equivalent = method == PoolingMethod::Hybrid
                    && !nbrs(group[0]).is_empty()
                    && group.iter().all(|&u| nbrs(u) == nbrs(group[0]));
                prop_assert!(adjacent_pair || equivalent, "{} level {}: group {:?}", method, l, group);
            }
        }
    }
    Ok(())
}

/// Level-0 node to supernode at each level.
fn owners(h: &GraphHierarchy) -> Vec<Vec<usize>> {
    h.levels
        .iter()
        .map(|level| {
            let mut own = vec![0; h.levels[0].size()];
            for (s, group) in level.members.iter().enumerate() {
                for &v in group {
                    own[v] = s;
                }
            }
            own
        })
        .collect()
}

/// Clause matching never merges across a core-argument edge. On trees the
/// endpoints of every core arc stay apart at every level; on general typed
/// graphs every merged group is connected through mergeable edges.
pub fn prop_cm_core(g: &LabeledGraph, tree: bool) -> Result<(), TestCaseError> {
    let cfg = ClauseMatchConfig::default();
    let h = build_hierarchy(g, PoolingMethod::Clause, 4, &cfg, 0);
    for (l, m) in h.matchings.iter().enumerate() {
        let bad = merges_across_core_edges(&h.levels[l].graph, m, &cfg);
        prop_assert!(bad.is_empty(), "round {}: {:?}", l, bad);
    }
    if tree {
        let own = owners(&h);
        for e in g.edges() {
            if e.kind.dep_label().is_some_and(|lab| cfg.core_arguments.contains(lab)) {
                for (l, o) in own.iter().enumerate() {
                    prop_assert_ne!(o[e.src.0], o[e.dst.0], "core arc {:?} merged at level {}", e, l);
                }
            }
        }
    }
    Ok(())
}

fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// acceptance checks: Ok(detail) or Err(reason)

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

pub fn check_partition_algebra(cases: u32) -> Check {
    let t = Instant::now();
    run_property(cases, (arb_typed_graph(40, true), any::<u64>()), |(g, s)| {
        prop_partition_algebra(&g, s)
    })?;
    run_property(cases, (arb_graph(40), any::<u64>()), |(g, s)| prop_partition_algebra(&g, s))?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("took {secs:.1}s, limit 10s"))?;
    Ok(format!("{} graphs x 4 methods x 3 levels, {secs:.2}s", 2 * cases))
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> AdjacencyMatrix {
    LabeledGraph::new(n, edges.iter().map(|&(u, v)| (u, v, EdgeKind::Adjacency)))
        .unwrap()
        .adjacency()
}

/// Eight-node hybrid matching example: n0 and n2 hang off n1;
/// n3 is a leaf on n4; n5, n6, n7 form a triangle.
pub const HM_EXAMPLE_EDGES: [(usize, usize); 8] =
    [(0, 1), (1, 2), (1, 4), (3, 4), (4, 5), (5, 6), (6, 7), (5, 7)];

pub fn check_hm_fixtures() -> Check {
    let p4 = hybrid_match(&adjacency(4, &[(0, 1), (1, 2), (2, 3)]));
    ensure(p4.assignment() == [0, 0, 1, 1], format!("P4 assignment {:?}", p4.assignment()))?;
    let a1 = coarsen_adjacency(&adjacency(4, &[(0, 1), (1, 2), (2, 3)]), &p4).unwrap();
    ensure(a1.to_rows() == vec![vec![2, 1], vec![1, 2]], format!("P4 A1 {:?}", a1.to_rows()))?;

    let star = hybrid_match(&adjacency(4, &[(0, 1), (0, 2), (0, 3)]));
    ensure(
        star.n_coarse() == 2 && star.members() == vec![vec![0], vec![1, 2, 3]],
        format!("star members {:?}", star.members()),
    )?;

    let fig = hybrid_match(&adjacency(8, &HM_EXAMPLE_EDGES));
    let s = |v| fig.supernode_of(v);
    let together = |u, v| s(u) == s(v);
    ensure(together(0, 2), "n0 and n2 not merged")?;
    ensure(together(3, 4), "n3 and n4 not merged")?;
    ensure(together(6, 7), "n6 and n7 not merged")?;
    let groups = fig.members();
    for lone in [1, 5] {
        ensure(
            groups[s(lone)] == vec![lone],
            format!("n{lone} should remain alone, group {:?}", groups[s(lone)]),
        )?;
    }
    ensure(fig.n_coarse() == 5, format!("example gives {} supernodes", fig.n_coarse()))?;
    Ok(format!("P4, K13 and eight-node example; groups {:?}", groups))
}

pub fn check_cm_fixtures(cases: u32) -> Check {
    let cfg = ClauseMatchConfig::default();
    let apple = load_document(&sample_dir().join("apple.conllu")).map_err(|e| e.to_string())?;
    let g = apple.graph().unwrap().graph;
    let (m, pooled) = clause_match_graph(&g, &cfg);
    ensure(m.n_coarse() == 1, format!("apple pooled to {} nodes", m.n_coarse()))?;
    ensure(pooled.edges().is_empty(), "apple keeps edges")?;

    // first sentence of the study document: A study | was performed | in patients ...
    let study = load_document(&sample_dir().join("study.conllu")).map_err(|e| e.to_string())?;
    let mut first = study.clone();
    first.document.sentences.truncate(1);
    first.sidecar.coref.clear();
    let g = first.graph().unwrap().graph;
    let h = build_hierarchy(&g, PoolingMethod::Clause, 2, &cfg, 0);
    let own = owners(&h);
    let (r1, r2) = (&own[1], &own[2]);
    ensure(r1[0] == r1[1], "m0 = {A, study} not formed")?;
    ensure(r1[2] == r1[3], "m1 = {was, performed} not formed")?;
    ensure(r1[4] == r1[5], "m2 = {in, patients} not formed")?;
    ensure(r1[5] != r1[3], "m2 merged into m1 in round one")?;
    ensure(r2[5] == r2[3], "m2 not merged into m1 in round two")?;
    ensure(r2[1] != r2[3], "m0 merged into m1 over nsubj:pass")?;

    run_property(cases, arb_typed_graph(30, false), |g| prop_cm_core(&g, true))?;
    run_property(cases, arb_typed_graph(30, true), |g| prop_cm_core(&g, false))?;
    Ok(format!(
        "apple -> 1 node; study sentence sizes {:?}; {} fuzzed typed graphs",
        h.sizes(),
        2 * cases
    ))
}

pub fn check_distance_contraction(cases: u32) -> Check {
    let t = Instant::now();
    run_property(cases, (arb_typed_graph(30, true), any::<u64>()), |(g, s)| {
        prop_distance_contraction(&g, s)
    })?;
    Ok(format!("{cases} graphs x 4 methods, {:.2}s", t.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------------------
// finite differences

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    let data = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(r, c, data).unwrap()
}

/// `||a - n|| / (||a|| + ||n||)`, or 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = norm(analytic) + norm(numeric);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

pub type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var, NumericError> + 'a;

/// Gradient of `sum(f(inputs) * R)` for a random projection `R`, taped
/// versus central differences over every input entry.
pub fn tape_fd_error(inputs: &[Matrix], f: &Build<'_>, rng: &mut ChaCha8Rng) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone()).unwrap()).collect();
    let out = f(&mut tape, &vars).unwrap();
    let (r, c) = tape.value(out).shape();
    let proj = rand_matrix(rng, r, c);
    let grads = tape.backward(out, proj.clone()).unwrap();

    let loss = |xs: &[Matrix]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|m| t.leaf(m.clone()).unwrap()).collect();
        let o = f(&mut t, &vs).unwrap();
        t.value(o).data().iter().zip(proj.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, x) in inputs.iter().enumerate() {
        let g = grads.get(vars[k]).cloned().unwrap_or_else(|| Matrix::zeros(x.rows(), x.cols()));
        for i in 0..x.data().len() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[i] += FD_STEP;
            let up = loss(&xs);
            xs[k].data_mut()[i] -= 2.0 * FD_STEP;
            let down = loss(&xs);
            numeric.push((up - down) / (2.0 * FD_STEP));
            analytic.push(g.data()[i]);
        }
    }
    relative_error(&analytic, &numeric)
}

pub const PRIMITIVES: [&str; 12] = [
    "matmul",
    "add",
    "add_row",
    "relu",
    "mul_const",
    "segment_sum",
    "gather",
    "scale_rows",
    "max_pool_rows",
    "concat_cols",
    "concat_rows",
    "logsumexp_rows",
];

/// Relative error of one primitive on random inputs drawn from `seed`.
pub fn primitive_fd_error(name: &str, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_range(2..6);
    let c = rng.gen_range(2..5);
    let x = rand_matrix(&mut rng, r, c);
    match name {
        "matmul" => {
            let k = rng.gen_range(1..5);
            let b = rand_matrix(&mut rng, c, k);
            tape_fd_error(&[x, b], &|t, v| t.matmul(v[0], v[1]), &mut rng)
        }
        "add" => {
            let y = rand_matrix(&mut rng, r, c);
            tape_fd_error(&[x, y], &|t, v| t.add(v[0], v[1]), &mut rng)
        }
        "add_row" => {
            let b = rand_matrix(&mut rng, 1, c);
            tape_fd_error(&[x, b], &|t, v| t.add_row(v[0], v[1]), &mut rng)
        }
        "relu" => tape_fd_error(&[x], &|t, v| t.relu(v[0]), &mut rng),
        "mul_const" => {
            let mask = rand_matrix(&mut rng, r, c);
            tape_fd_error(&[x], &|t, v| t.mul_const(v[0], mask.clone()), &mut rng)
        }
        "segment_sum" => {
            let k = rng.gen_range(1..=r);
            let mut seg: Vec<usize> = (0..r).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
            seg.reverse();
            tape_fd_error(&[x], &|t, v| t.segment_sum(v[0], &seg, k), &mut rng)
        }
        "gather" => {
            let idx: Vec<usize> = (0..r + 2).map(|_| rng.gen_range(0..r)).collect();
            tape_fd_error(&[x], &|t, v| t.gather(v[0], &idx), &mut rng)
        }
        "scale_rows" => {
            let f: Vec<f64> = (0..r).map(|_| rng.gen_range(-2.0..2.0)).collect();
            tape_fd_error(&[x], &|t, v| t.scale_rows(v[0], &f), &mut rng)
        }
        "max_pool_rows" => {
            let rows: Vec<usize> = (0..r).filter(|_| rng.gen_bool(0.7)).collect();
            let rows = if rows.is_empty() { vec![0] } else { rows };
            tape_fd_error(&[x], &|t, v| t.max_pool_rows(v[0], &rows), &mut rng)
        }
        "concat_cols" => {
            let y = rand_matrix(&mut rng, r, 3);
            tape_fd_error(&[x, y], &|t, v| t.concat_cols(&[v[0], v[1], v[0]]), &mut rng)
        }
        "concat_rows" => {
            let y = rand_matrix(&mut rng, 2, c);
            tape_fd_error(&[x, y], &|t, v| t.concat_rows(&[v[1], v[0], v[1]]), &mut rng)
        }
        "logsumexp_rows" => {
            let scaled = x.scale(5.0);
            tape_fd_error(&[scaled], &|t, v| t.logsumexp_rows(v[0]), &mut rng)
        }
        other => panic!("unknown primitive {other}"),
    }
}

/// Full encoder plus scorer plus cross-entropy, gradients from
/// [`RelationModel::accumulate_gradients`] against central differences over
/// every parameter. Architecture, pooling method and document vary with the
/// seed.
pub fn composite_fd_error(seed: u64) -> f64 {
    let mut docs: Vec<_> = load_corpus_dir(&sample_dir())
        .unwrap()
        .into_iter()
        .filter(|d| !d.sidecar.instances.is_empty())
        .collect();
    docs.extend(synth_long_dep(2, 10, 3, seed));
    let doc = docs[seed as usize % docs.len()].clone();

    let cfg = TrainConfig {
        embed_dim: 4,
        hidden: 4,
        levels: 1 + (seed as usize % 3),
        sublayers: 1 + (seed as usize / 3) % 2,
        method: METHODS[seed as usize % 4],
        pool_mode: if seed.is_multiple_of(2) { PoolMode::Sum } else { PoolMode::Mean },
        seed,
        ..TrainConfig::default()
    };
    let examples = prepare_examples(&[doc], &cfg, &EmbeddingTable::hashed(4)).unwrap();
    let ex = &examples[seed as usize % examples.len()];
    let arity = ex.instance.entities.len();
    let mut model = RelationModel::new(cfg.model_config(), arity, cfg.classes).unwrap();

    // random biases keep pre-activations away from the ReLU kink at 0
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xFD);
    for p in model.params_mut() {
        let (r, c) = p.shape();
        p.value = rand_matrix(&mut rng, r, c).scale(0.5);
        p.zero_grad();
    }
    model.accumulate_gradients(ex, None).unwrap();
    let analytic: Vec<f64> =
        model.params().iter().flat_map(|p| p.grad.data().to_vec()).collect();

    let loss = |m: &RelationModel| cross_entropy(&m.logits(ex).unwrap(), ex.instance.label).0;
    let mut numeric = Vec::with_capacity(analytic.len());
    let counts: Vec<usize> = model.params().iter().map(|p| p.value.data().len()).collect();
    for (k, &count) in counts.iter().enumerate() {
        for i in 0..count {
            let orig = model.params()[k].value.data()[i];
            model.params_mut()[k].value.data_mut()[i] = orig + FD_STEP;
            let up = loss(&model);
            model.params_mut()[k].value.data_mut()[i] = orig - FD_STEP;
            let down = loss(&model);
            model.params_mut()[k].value.data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

pub fn check_gradients(seeds: u64) -> Check {
    let t = Instant::now();
    let mut worst = (0.0f64, String::new());
    for seed in 0..seeds {
        for name in PRIMITIVES {
            let e = primitive_fd_error(name, seed);
            if e > worst.0 {
                worst = (e, format!("{name} seed {seed}"));
            }
        }
        let e = composite_fd_error(seed);
        if e > worst.0 {
            worst = (e, format!("composite seed {seed}"));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(
        worst.0 < FD_TOLERANCE,
        format!("max rel err {:.2e} at {}", worst.0, worst.1),
    )?;
    ensure(secs < 120.0, format!("took {secs:.1}s, limit 120s"))?;
    Ok(format!(
        "{} primitives + composite x {seeds} seeds, max rel err {:.2e} ({}), {secs:.1}s",
        PRIMITIVES.len(),
        worst.0,
        worst.1
    ))
}

// ---------------------------------------------------------------------------
// reference stack

/// Plain GCN layer stack with the residual wiring of the
/// pooling-unpooling model, on plain matrices.
pub fn reference_stack(model: &MrGcn, a: &AdjacencyMatrix, x: &Matrix) -> Matrix {
    let n = a.size();
    let am = Matrix::from_vec(n, n, a.to_f64()).unwrap();
    let block = |b: &coarsen_gnn::model::GcnBlock, mut h: Matrix| {
        for layer in &b.layers {
            h = am
                .matmul(&h)
                .unwrap()
                .matmul(&layer.weight.value)
                .unwrap()
                .add_row_broadcast(&layer.bias.value)
                .unwrap()
                .relu();
        }
        h
    };
    let levels = model.config().levels;
    let mut h_out = Vec::new();
    let mut h = x.clone();
    for l in 0..levels {
        h = block(&model.down[l], h);
        h_out.push(h.clone());
    }
    let mut u = h_out[levels - 1].clone();
    for l in (0..levels - 1).rev() {
        u = block(&model.up[l], u).add(&h_out[l]).unwrap();
    }
    u
}

pub fn check_layer_identity() -> Check {
    for l in 1..=4 {
        for s in 1..=2 {
            let m = MrGcn::new(ModelConfig {
                input_dim: 3,
                hidden: 2,
                levels: l,
                sublayers: s,
                pool_mode: PoolMode::Sum,
                dropout: 0.0,
            })
            .unwrap();
            ensure(
                m.layer_count() == (2 * l - 1) * s,
                format!("L={l} S={s}: {} layers", m.layer_count()),
            )?;
        }
    }
    let mut cases = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..20);
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
        let g = LabeledGraph::new(n, edges.iter().map(|&(u, v)| (u, v, EdgeKind::Adjacency))).unwrap();
        for levels in 1..=4 {
            for (mode, sublayers) in [(PoolMode::Sum, 1), (PoolMode::Mean, 2)] {
                let h = build_hierarchy(&g, PoolingMethod::Identity, levels - 1, &ClauseMatchConfig::default(), 0);
                let mut model = MrGcn::new(ModelConfig {
                    input_dim: 5,
                    hidden: 4,
                    levels,
                    sublayers,
                    pool_mode: mode,
                    dropout: 0.0,
                })
                .unwrap();
                model.init_parameters(seed * 31 + levels as u64);
                for p in model.params_mut().into_iter().filter(|p| p.shape().0 == 1) {
                    p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
                }
                let x = rand_matrix(&mut rng, n, 5);
                let (out, _) = model.forward(&h, &x).unwrap();
                let reference = reference_stack(&model, &h.levels[0].adjacency, &x);
                let same = out.data().iter().zip(reference.data()).all(|(a, b)| a.to_bits() == b.to_bits());
                ensure(same, format!("seed {seed} L={levels} S={sublayers}: output differs from reference"))?;
                cases += 1;
            }
        }
    }
    Ok(format!("(2L-1)S for L in 1..4, S in 1..2; {cases} identity models bit-equal"))
}

// ---------------------------------------------------------------------------
// log-sum-exp head

#[derive(Clone, Debug)]
pub struct HeadCase {
    pub seed: u64,
    pub tokens: usize,
    pub mentions: Vec<Vec<(usize, usize)>>,
}

pub fn arb_head_case() -> impl Strategy<Value = HeadCase> {
    (2usize..=3, 4usize..20, any::<u64>())
        .prop_flat_map(|(arity, tokens, seed)| {
            let span = (0..tokens, 1usize..4).prop_map(move |(s, len)| (s.min(tokens - 1), (s + len).min(tokens)));
            let cluster = prop::collection::vec(span, 1..=3);
            (Just(seed), Just(tokens), prop::collection::vec(cluster, arity))
        })
        .prop_map(|(seed, tokens, mentions)| HeadCase { seed, tokens, mentions })
}

/// Per-tuple logits alongside the log-sum-exp aggregate, plain and taped.
pub fn head_scores(case: &HeadCase) -> (Vec<Matrix>, Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
    let width = 3;
    let mut scorer = PairScorer::new(HeadConfig {
        arity: case.mentions.len(),
        width,
        hidden: 5,
        classes: 3,
    })
    .unwrap();
    scorer.init_parameters(case.seed);
    scorer.b1.value = rand_matrix(&mut rng, 1, 5);
    let h = rand_matrix(&mut rng, case.tokens, width).scale(3.0);
    let clusters: Vec<EntityCluster> = case
        .mentions
        .iter()
        .enumerate()
        .map(|(i, ms)| EntityCluster {
            entity_id: format!("e{i}"),
            mentions: ms.iter().map(|&(s, e)| MentionSpan::new(s, e)).collect(),
        })
        .collect();
    let all: Vec<usize> = (0..case.tokens).collect();
    let context = h.row_max_pool(&all).unwrap();
    let sizes: Vec<usize> = clusters.iter().map(|c| c.mentions.len()).collect();
    let tuples = coarsen_gnn::re_head::cartesian(&sizes)
        .into_iter()
        .map(|combo| {
            let ms: Vec<Matrix> = combo
                .iter()
                .enumerate()
                .map(|(k, &i)| mention_embed(&h, clusters[k].mentions[i]).unwrap())
                .collect();
            mention_tuple_score(&scorer, &ms, &context).unwrap()
        })
        .collect();
    let plain = entity_pair_score(&scorer, &clusters, &h, &context).unwrap();
    let mut tape = Tape::new();
    let bound = scorer.bind(&mut tape).unwrap();
    let hv = tape.leaf(h.clone()).unwrap();
    let out = scorer.score_on_tape(&mut tape, &bound, hv, &clusters).unwrap();
    (tuples, plain, tape.value(out).clone())
}

/// Slack for the upper bound, which goes through `ln` and one addition.
pub const LSE_SLACK: f64 = 1e-12;

pub fn prop_lse_bounds(case: &HeadCase) -> Result<(), TestCaseError> {
    let (tuples, plain, taped) = head_scores(case);
    let k = tuples.len() as f64;
    for c in 0..plain.cols() {
        let max = tuples.iter().map(|t| t.get(0, c)).fold(f64::NEG_INFINITY, f64::max);
        let s = plain.get(0, c);
        prop_assert!(max <= s, "class {}: score {} below max {}", c, s, max);
        prop_assert!(s <= max + k.ln() + LSE_SLACK, "class {}: score {} above {}", c, s, max + k.ln());
        if tuples.len() == 1 {
            prop_assert_eq!(s.to_bits(), tuples[0].get(0, c).to_bits());
        }
        prop_assert!((taped.get(0, c) - s).abs() <= 1e-12 * s.abs().max(1.0));
    }
    Ok(())
}

pub fn check_lse_bounds(cases: u32) -> Check {
    run_property(cases, arb_head_case(), |c| prop_lse_bounds(&c))?;
    run_property(cases / 4, arb_head_case(), |mut c| {
        for m in &mut c.mentions {
            m.truncate(1);
        }
        prop_lse_bounds(&c)
    })?;
    Ok(format!("{cases} fuzzed heads + {} single-tuple heads, slack {LSE_SLACK:e}", cases / 4))
}

// ---------------------------------------------------------------------------
// coarsening rate on the sample corpus

pub fn check_coarsening_direction() -> Check {
    let corpus = load_corpus_dir(&sample_dir()).map_err(|e| e.to_string())?;
    let stats = |m| coarsen_gnn::analysis::coarsening_stats(&corpus, m, 1, 0).map_err(|e| e.to_string());
    let hm = stats(PoolingMethod::Hybrid)?;
    let cm = stats(PoolingMethod::Clause)?;
    ensure(
        cm[1] < hm[1],
        format!("CM level-1 mean {:.2} not below HM {:.2}", cm[1], hm[1]),
    )?;
    Ok(format!(
        "{} docs, mean size {:.2} -> HM {:.2}, CM {:.2}",
        corpus.len(),
        hm[0],
        hm[1],
        cm[1]
    ))
}

// ---------------------------------------------------------------------------
// command line

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env_remove("COARSEN_GNN_SEED").output().expect("binary runs")
}

/// Relative path to bytes for every file under `dir`.
pub fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            (rel, std::fs::read(e.path()).unwrap())
        })
        .collect()
}

/// Runs each pipeline stage twice into separate directories and compares
/// every output file byte for byte.
pub fn check_cli_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sample = sample_dir();
    let sample = sample.to_str().unwrap();
    let run = |tag: &str| -> Result<PathBuf, String> {
        let root = tmp.path().join(tag);
        let p = |s: &str| root.join(s).to_string_lossy().into_owned();
        // both runs score the first run's checkpoint so the flags match
        let ckpt = tmp.path().join("a/train/checkpoint.bin").to_string_lossy().into_owned();
        let steps: Vec<Vec<String>> = vec![
            vec!["coarsen", sample, "--method", "cm", "--levels", "3", "--seed", "5", "--out", &p("coarsen")]
                .into_iter().map(String::from).collect(),
            vec!["coarsen", sample, "--method", "random", "--levels", "2", "--seed", "5", "--out", &p("random")]
                .into_iter().map(String::from).collect(),
            vec!["train", "--synthetic", "8,12", "--synthetic-instances", "24", "--epochs", "3",
                 "--lr", "0.02", "--seed", "5", "--dropout", "0.2", "--out", &p("train")]
                .into_iter().map(String::from).collect(),
            vec!["eval", "--synthetic", "8,12", "--checkpoint", &ckpt, "--out", &p("eval")]
                .into_iter().map(String::from).collect(),
            vec!["analyze", "--synthetic", "8,12", "--checkpoint", &ckpt, "--bucket-by", "length",
                 "--edges", "10", "--out", &p("analyze")]
                .into_iter().map(String::from).collect(),
        ];
        for args in &steps {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            let o = run_cli(&args);
            if !o.status.success() {
                return Err(format!(
                    "`{}` exited {:?}: {}",
                    args.join(" "),
                    o.status.code(),
                    String::from_utf8_lossy(&o.stderr)
                ));
            }
        }
        Ok(root)
    };
    let a = tree_bytes(&run("a")?);
    let b = tree_bytes(&run("b")?);
    let names: BTreeSet<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    ensure(a.len() == b.len(), "different file sets")?;
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        ensure(na == nb, format!("file sets differ at {na} / {nb}"))?;
        ensure(ba == bb, format!("{na} differs between runs"))?;
    }
    Ok(format!("coarsen x2, train, eval, analyze: {} files identical", names.len()))
}
