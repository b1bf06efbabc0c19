//! Train a small model on synthetic chains of mixed length, save and reload
//! the checkpoint, then break accuracy down by entity distance.
//!
//! cargo run --release --example train_and_evaluate

use coarsen_gnn::analysis::{bucket_report, BucketKey};
use coarsen_gnn::coarsen::PoolingMethod;
use coarsen_gnn::ingest::EmbeddingTable;
use coarsen_gnn::train::{
    evaluate, predict_all, prepare_examples, read_checkpoint, synth_long_dep, train,
    write_checkpoint, RelationModel, TrainConfig,
};

fn main() {
    let cfg = TrainConfig {
        method: PoolingMethod::Hybrid,
        levels: 3,
        hidden: 32,
        lr: 0.005,
        epochs: 30,
        clip_norm: 5.0,
        seed: 3,
        ..TrainConfig::default()
    };
    let table = EmbeddingTable::hashed(cfg.embed_dim);
    let mut docs = synth_long_dep(200, 8, 1, 1);
    docs.extend(synth_long_dep(200, 16, 1, 2));
    let mut dev_docs = synth_long_dep(50, 8, 1, 3);
    dev_docs.extend(synth_long_dep(50, 16, 1, 4));
    let train_set = prepare_examples(&docs, &cfg, &table).expect("train examples");
    let dev = prepare_examples(&dev_docs, &cfg, &table).expect("dev examples");

    let mut model = RelationModel::from_train_config(&cfg, 2).expect("model");
    let report = train(&mut model, &train_set, &dev, &cfg).expect("training");
    for r in report.curve.iter().step_by(5) {
        println!("epoch {:2}: loss {:.4}  dev acc {:.3}", r.epoch, r.loss, r.dev_metric);
    }
    println!("best epoch {} with dev accuracy {:.3}", report.best_epoch, report.best_dev.accuracy);

    let mut bytes = Vec::new();
    write_checkpoint(&model, Some(&cfg), &mut bytes).expect("serialize");
    let (restored, stored_cfg) = read_checkpoint(bytes.as_slice()).expect("deserialize");
    assert_eq!(restored, model);
    assert_eq!(stored_cfg.as_ref(), Some(&cfg));
    println!("checkpoint: {} bytes", bytes.len());

    let metrics = evaluate(&restored, &dev).expect("evaluate");
    println!("dev: accuracy {:.3}, micro F1 {:.3}", metrics.accuracy, metrics.micro_f1);
    let pred = predict_all(&restored, &dev).expect("predict");
    let buckets = bucket_report(&dev, &pred, BucketKey::EntityDistance, &[10.0], 2).expect("report");
    print!("{}", buckets.to_csv());
}
