//! Generates a stochastic block model graph, writes it in the dataset format
//! and reads it back.
//!
//! cargo run --example sbm_dataset -- /tmp/sbm

use lrgi::graph::{generate_sbm, load_dataset, write_dataset, SbmConfig, Split};

fn main() -> lrgi::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("lrgi_sbm").display().to_string());
    let cfg = SbmConfig { nodes_per_block: 100, ..SbmConfig::default() };
    let g = generate_sbm(&cfg)?;
    println!(
        "{} nodes, {} directed edges, mean degree {:.2}, {} features",
        g.num_nodes(),
        g.num_edges(),
        g.mean_degree(),
        g.feature_dim()
    );
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{:>5}: {} nodes", split.as_str(), g.split_nodes(split).len());
    }

    let paths = write_dataset(&g, &dir)?;
    let back = load_dataset(&paths, false)?;
    println!("wrote {} and reloaded it: identical = {}", dir, back == g);
    Ok(())
}
