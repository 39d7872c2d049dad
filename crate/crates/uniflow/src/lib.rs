//! One-for-all spatio-temporal flow prediction.
//!
//! Grid-based and graph-based flow data are unified into a patch-sequence
//! representation, modeled by a masked encoder-decoder transformer, and
//! augmented with learnable key-value memory retrieval. The crate also
//! carries the full desk-scale harness: synthetic data generation, a
//! balanced k-way graph partitioner, joint multi-dataset training, and the
//! evaluation protocols (short/long-term, few/zero-shot, noise robustness,
//! memory ablations).
//!
//! Start from the `examples/` directory for runnable walkthroughs, or use
//! the `uniflow` binary (`gen`, `train`, `eval`, `ablate`, `shot`,
//! `inspect-memory`).

// index-heavy numeric code; ranged loops and NaN-rejecting comparisons are deliberate
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod fft;
pub mod linalg;
pub mod model;
pub mod mra;
pub mod partition;
pub mod patching;
pub mod rng;
pub mod prepared;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Builds the global worker pool, capped by the `UNIFLOW_THREADS` env var.
/// Safe to call more than once; later calls are no-ops.
pub fn init_threads() {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(s) = std::env::var("UNIFLOW_THREADS") {
        if let Ok(n) = s.trim().parse::<usize>() {
            if n > 0 {
                builder = builder.num_threads(n);
            }
        }
    }
    let _ = builder.build_global();
}
