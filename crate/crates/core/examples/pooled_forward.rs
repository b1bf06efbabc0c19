//! Forward pass of the pooling-unpooling encoder over a document hierarchy,
//! followed by the entity-pair scorer.
//!
//! cargo run --example pooled_forward

use std::path::PathBuf;

use coarsen_gnn::coarsen::{build_hierarchy, ClauseMatchConfig, PoolingMethod};
use coarsen_gnn::ingest::{embed_tokens, load_document, EmbeddingTable};
use coarsen_gnn::model::{ModelConfig, MrGcn, PoolMode};
use coarsen_gnn::re_head::{entity_pair_score, predict, HeadConfig, PairScorer};

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample/study.conllu");
    let doc = load_document(&path).expect("sample document");
    let g = doc.graph().expect("graph").graph;
    let table = EmbeddingTable::hashed(16);
    let x = embed_tokens(&doc.document, &table);

    let levels = 3;
    let h = build_hierarchy(&g, PoolingMethod::Hybrid, levels - 1, &ClauseMatchConfig::default(), 0);
    let mut encoder = MrGcn::new(ModelConfig {
        input_dim: table.width(),
        hidden: 8,
        levels,
        sublayers: 1,
        pool_mode: PoolMode::Mean,
        dropout: 0.0,
    })
    .expect("config");
    encoder.init_parameters(0);
    println!("graph sizes {:?}, {} GCN layers", h.sizes(), encoder.layer_count());

    let (out, trace) = encoder.forward(&h, &x).expect("forward");
    for l in 0..levels {
        println!(
            "level {l}: H_in {:?}  H_out {:?}  U_out {:?}",
            trace.h_in[l].shape(),
            trace.h_out[l].shape(),
            trace.u_out[l].shape()
        );
    }

    let mut scorer = PairScorer::new(HeadConfig { arity: 2, width: 8, hidden: 8, classes: 2 }).expect("head");
    scorer.init_parameters(1);
    let all: Vec<usize> = (0..out.rows()).collect();
    let context = out.row_max_pool(&all).expect("context");
    for inst in doc.sidecar.relation_instances() {
        let logits = entity_pair_score(&scorer, &inst.entities, &out, &context).expect("score");
        let ids: Vec<&str> = inst.entities.iter().map(|e| e.entity_id.as_str()).collect();
        println!(
            "{:?}: logits {:?} -> class {} (gold {})",
            ids,
            logits.data(),
            predict(logits.data()),
            inst.label
        );
    }
}
