//! Pooling-unpooling model (3 levels, 1 layer per block) against a plain
//! 5-layer GCN on synthetic chains whose label needs cues from both ends.
//!
//! cargo run --release --example long_dependency -- [chain_len] [seeds]

use std::time::Instant;

use coarsen_gnn::train::{median, LongDepSetup};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let setup = LongDepSetup {
        chain_len: args.next().unwrap_or(32),
        ..Default::default()
    };
    let seeds = args.next().unwrap_or(5) as u64;
    let (mut pooled, mut plain) = (Vec::new(), Vec::new());
    for seed in 0..seeds {
        let t = Instant::now();
        let p = setup.run(seed, 3, 1).expect("pooled run");
        let q = setup.run(seed, 1, 5).expect("plain run");
        println!(
            "seed {seed}: pooled {p:.3}  plain {q:.3}  ({:.1}s)",
            t.elapsed().as_secs_f64()
        );
        pooled.push(p);
        plain.push(q);
    }
    println!(
        "median test accuracy: pooled {:.3}, plain {:.3}",
        median(&pooled),
        median(&plain)
    );
}
