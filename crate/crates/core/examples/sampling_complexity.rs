//! Compares nodes and edges per mini-batch for end-to-end sampling (grows
//! with depth) and the fixed two-hop layer-wise batch.
//!
//! cargo run --release --example sampling_complexity

use lrgi::cli::bench_sampling;
use lrgi::graph::{generate_sbm, Fanout, SbmConfig};

fn main() -> lrgi::Result<()> {
    // 20 000 nodes so the end-to-end batches do not saturate right away.
    let g = generate_sbm(&SbmConfig {
        nodes_per_block: 5000,
        blocks: 4,
        p_in: 0.0034,
        p_out: 0.0002,
        ..SbmConfig::default()
    })?;
    println!("graph: {} nodes, mean degree {:.1}", g.num_nodes(), g.mean_degree());
    let rows = bench_sampling(&g, &[1, 2, 3, 4, 6], 64, Fanout::Limit(10), Fanout::Limit(5), 20, 0)?;
    println!("{:<10} {:>5} {:>12} {:>12}", "mode", "depth", "nodes", "edges");
    for r in rows {
        println!("{:<10} {:>5} {:>12.1} {:>12.1}", r.mode, r.depth, r.mean_nodes, r.mean_edges);
    }
    Ok(())
}
