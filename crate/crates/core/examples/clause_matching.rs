//! Clause matching on a sample document, round by round. Non-core
//! dependents fold into their heads; subjects and objects stay apart.
//!
//! cargo run --example clause_matching -- [file.conllu] [rounds]

use std::path::PathBuf;

use coarsen_gnn::coarsen::{build_hierarchy, ClauseMatchConfig, PoolingMethod};
use coarsen_gnn::ingest::load_document;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample/study.conllu"));
    let rounds: usize = args.next().map_or(3, |s| s.parse().expect("rounds"));

    let doc = load_document(&path).expect("readable document");
    let forms = doc.document.forms();
    let g = doc.graph().expect("valid graph").graph;
    let cfg = ClauseMatchConfig::default();
    println!("core arguments: {:?}", cfg.core_arguments);

    let h = build_hierarchy(&g, PoolingMethod::Clause, rounds, &cfg, 0);
    println!("level 0: {} tokens", h.levels[0].size());
    for (l, level) in h.levels.iter().enumerate().skip(1) {
        println!("level {l}: {} nodes", level.size());
        for members in &level.members {
            let words: Vec<&str> = members.iter().map(|&i| forms[i].as_str()).collect();
            println!("  [{}]", words.join(" "));
        }
        let kinds: Vec<String> = level.graph.edges().iter().map(|e| e.kind.to_string()).collect();
        println!("  edges: {}", kinds.join(", "));
    }
    if let Some(step) = h.stopped_early_at {
        println!("nothing left to merge from round {}", step + 1);
    }
}
