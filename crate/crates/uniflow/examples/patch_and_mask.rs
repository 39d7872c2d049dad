//! How windows become patch sequences: layouts, history masking, and the
//! round trip back to flow space.
//!
//! ```bash
//! cargo run --release --example patch_and_mask
//! ```

use uniflow::data::{Kind, TaskSpec};
use uniflow::patching::{mask_history, PatchConfig, PatchLayout};
use uniflow::prepared::PreparedDataset;
use uniflow::synth::{gen_graph, gen_grid, SynthConfig};

fn main() -> uniflow::Result<()> {
    let synth = SynthConfig {
        seed: 1,
        t_len: 200,
        period_daily: 12,
        period_weekly: 84,
        amplitude: 8.0,
        hotspot_count: 2,
        hotspot_speed: 0.4,
        noise_std: 0.3,
        phase_spread: 1.5,
        diffusion: 0.3,
    };
    let task = TaskSpec::new(12, 12);
    let patch = PatchConfig {
        p_t: 4,
        p_s: 4,
        d_model: 32,
        num_subgraphs: 6,
    };

    let grid = gen_grid(&synth, 8, 8)?;
    let layout = PatchLayout::new(Kind::Grid, &task, &patch, grid.grid_spec, 64)?;
    println!(
        "grid 8x8, task 12->12, p_t=4, p_s=4: L = {} ({} temporal blocks x {} spatial units)",
        layout.len(),
        layout.n_blocks,
        layout.spatial_units
    );
    println!(
        "history rows: {} (blocks 0..{}), future rows: {}",
        layout.hist_len(),
        layout.hist_blocks,
        layout.len() - layout.hist_len()
    );

    // masking keeps exactly the history prefix
    let s: Vec<f32> = (0..layout.len() * patch.d_model).map(|i| i as f32).collect();
    let (s_h, future) = mask_history(&s, patch.d_model, &layout);
    assert_eq!(s_h.len() / patch.d_model + future.len(), layout.len());
    println!("masked: {} history rows kept, {} future positions listed", s_h.len() / patch.d_model, future.len());

    // graph datasets go through the balanced partitioner
    let graph = gen_graph(&synth, 60, 4.0)?;
    let prep = PreparedDataset::prepare(graph, task, &patch, None, 7)?;
    let parts = prep.parts.as_ref().unwrap();
    println!(
        "\ngraph 60 nodes into {} subgraphs, sizes: {:?}",
        parts.members.len(),
        parts.members.iter().map(|m| m.len()).collect::<Vec<_>>()
    );
    println!(
        "graph layout: L = {} = {} blocks x {} subgraphs",
        prep.layout.len(),
        prep.layout.n_blocks,
        prep.layout.spatial_units
    );
    Ok(())
}
