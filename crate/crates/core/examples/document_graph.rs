//! From CoNLL-U text and a JSON sidecar to a typed token graph, anonymized
//! features and a DOT rendering.
//!
//! cargo run --example document_graph

use coarsen_gnn::coarsen::{build_hierarchy, dot, ClauseMatchConfig, PoolingMethod};
use coarsen_gnn::graph::EdgeCategory;
use coarsen_gnn::ingest::{anonymize, embed_tokens, AnnotatedDocument, EmbeddingTable};

const CONLLU: &str = "\
# newdoc id = demo
1\tAspirin\t_\tPROPN\t_\t_\t2\tnsubj\t_\t_
2\tcaused\t_\tVERB\t_\t_\t0\troot\t_\t_
3\tmild\t_\tADJ\t_\t_\t4\tamod\t_\t_
4\tbleeding\t_\tNOUN\t_\t_\t2\tdobj\t_\t_
5\t.\t_\tPUNCT\t_\t_\t2\tpunct\t_\t_

1\tIt\t_\tPRON\t_\t_\t2\tnsubj\t_\t_
2\tstopped\t_\tVERB\t_\t_\t0\troot\t_\t_
3\t.\t_\tPUNCT\t_\t_\t2\tpunct\t_\t_
";

const SIDECAR: &str = r#"{
  "doc_id": "demo",
  "coref": [[3, 5]],
  "instances": [{
    "entities": [
      {"id": "aspirin", "mentions": [[0, 1]]},
      {"id": "bleeding", "mentions": [[2, 4], [5, 6]]}
    ],
    "label": 1,
    "task": "entity"
  }]
}"#;

fn main() {
    let doc = AnnotatedDocument::from_texts(CONLLU, Some(SIDECAR)).expect("valid input");
    let dg = doc.graph().expect("graph");
    println!(
        "{} tokens, {} sentences, roots {:?}",
        doc.document.token_count(),
        dg.sentence_spans.len(),
        dg.root_tokens
    );
    for cat in [
        EdgeCategory::Adjacency,
        EdgeCategory::Dependency,
        EdgeCategory::SentenceSeq,
        EdgeCategory::Coreference,
    ] {
        let edges: Vec<String> = dg
            .graph
            .edges()
            .iter()
            .filter(|e| e.kind.category() == cat)
            .map(|e| format!("{}->{}", e.src, e.dst))
            .collect();
        println!("{cat:?}: {}", edges.join(" "));
    }

    let inst = &doc.sidecar.relation_instances()[0];
    let anon = anonymize(&doc.document, inst).expect("disjoint mentions");
    println!("anonymized: {}", anon.forms().join(" "));
    let table = EmbeddingTable::hashed(8);
    let x = embed_tokens(&anon, &table);
    println!("features: {} x {}", x.rows(), x.cols());

    let h = build_hierarchy(&dg.graph, PoolingMethod::Clause, 1, &ClauseMatchConfig::default(), 0);
    print!("{}", dot::level_dot(&h, 1, Some(&doc.document.forms())));
}
