//! Partition a synthetic road network into balanced subgraphs and compare
//! against the exhaustive oracle on a small instance.
//!
//! ```bash
//! cargo run --release --example partition_roads
//! ```

use uniflow::partition::{brute_force_partition, edge_cut, partition_kway};
use uniflow::synth::gen_topology;

fn main() -> uniflow::Result<()> {
    // desk-scale road network
    let topo = gen_topology(3, 240, 4.0)?;
    println!(
        "network: {} nodes, {} edges, connected: {}",
        topo.num_nodes,
        topo.edges.len(),
        topo.is_connected()
    );

    for k in [2, 4, 16] {
        let p = partition_kway(&topo, k, 7)?;
        let min = p.sizes.iter().min().unwrap();
        let max = p.sizes.iter().max().unwrap();
        println!(
            "k={k:<3} cut={:<5} sizes in [{min}, {max}] ({} edges total)",
            p.cut,
            topo.edges.len()
        );
        assert!(max - min <= 1, "balance violated");
        assert_eq!(edge_cut(&topo, &p.assignment)?, p.cut);
    }

    // small graphs: multilevel result vs the global optimum
    println!("\n8-node graphs, k=2, multilevel vs exhaustive optimum:");
    for seed in 0..5 {
        let small = gen_topology(seed, 8, 3.0)?;
        let ours = partition_kway(&small, 2, seed)?;
        let best = brute_force_partition(&small, 2)?;
        println!("  seed {seed}: cut {} vs optimal {}", ours.cut, best.cut);
    }
    Ok(())
}
