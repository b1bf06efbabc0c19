//! Mean graph size per level under each matching method, over a CoNLL-U
//! directory (the bundled sample corpus by default).
//!
//! cargo run --example coarsening_stats -- [corpus_dir] [levels]

use std::path::PathBuf;

use coarsen_gnn::analysis::coarsening_stats;
use coarsen_gnn::coarsen::PoolingMethod;
use coarsen_gnn::ingest::load_corpus_dir;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample"));
    let steps: usize = args.next().map_or(3, |s| s.parse().expect("levels"));
    let corpus = load_corpus_dir(&dir).expect("readable corpus");
    println!("{} documents in {}", corpus.len(), dir.display());
    for method in [
        PoolingMethod::Identity,
        PoolingMethod::Hybrid,
        PoolingMethod::Clause,
        PoolingMethod::Random,
    ] {
        let sizes = coarsening_stats(&corpus, method, steps, 7).expect("stats");
        let cells: Vec<String> = sizes.iter().map(|s| format!("{s:7.2}")).collect();
        println!("{:>9}: {}", method.to_string(), cells.join(" "));
    }
}
