//! A dataset readied for training/evaluation: normalized values, split
//! ranges, patch layout, and (for graphs) the cached balanced partition.

use crate::data::{normalize, FlowDataset, Kind, Normalizer, TaskSpec};
use crate::error::Result;
use crate::linalg::Scalar;
use crate::model::SampleCtx;
use crate::partition;
use crate::patching::{GraphParts, PatchConfig, PatchLayout};
use std::ops::Range;
use std::path::Path;

#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub ds: FlowDataset,
    pub norm: Normalizer,
    /// Normalized copy of the values, same [T][N][C] layout.
    pub values_norm: Vec<f32>,
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
    pub task: TaskSpec,
    pub layout: PatchLayout,
    pub parts: Option<GraphParts>,
}

impl PreparedDataset {
    /// `dataset_dir`, when given, is used to cache the graph partition next
    /// to the dataset files.
    pub fn prepare(
        ds: FlowDataset,
        task: TaskSpec,
        patch_cfg: &PatchConfig,
        dataset_dir: Option<&Path>,
        seed: u64,
    ) -> Result<PreparedDataset> {
        ds.validate()?;
        let (train, val, test) = crate::data::split_622(ds.t_len)?;

        let (values_norm, norm) = match ds.meta.normalizer {
            Some(n) => {
                let vals = ds
                    .values
                    .iter()
                    .map(|&v| n.normalize(v as f64) as f32)
                    .collect();
                (vals, n)
            }
            None => {
                let (normed, n) = normalize(&ds)?;
                (normed.values, n)
            }
        };

        let layout = PatchLayout::new(ds.kind, &task, patch_cfg, ds.grid_spec, ds.num_locations)?;

        let parts = match ds.kind {
            Kind::Graph => {
                let topo = ds.topology.as_ref().expect("validated graph");
                let p = match dataset_dir {
                    Some(dir) => {
                        partition::load_or_compute(dir, topo, patch_cfg.num_subgraphs, seed)?
                    }
                    None => partition::partition_kway(topo, patch_cfg.num_subgraphs, seed)?,
                };
                Some(GraphParts::from_partition(&p))
            }
            Kind::Grid => None,
        };

        Ok(PreparedDataset {
            ds,
            norm,
            values_norm,
            train,
            val,
            test,
            task,
            layout,
            parts,
        })
    }

    pub fn ctx(&self) -> SampleCtx<'_> {
        SampleCtx {
            layout: &self.layout,
            parts: self.parts.as_ref(),
        }
    }

    pub fn name(&self) -> &str {
        &self.ds.name
    }

    pub fn channels(&self) -> usize {
        self.ds.channels
    }

    /// Normalized window for one channel, `window_len x N`.
    pub fn window_norm<T: Scalar>(&self, start: usize, channel: usize) -> Vec<T> {
        let n = self.ds.num_locations;
        let c_total = self.ds.channels;
        let w = self.task.window_len();
        let mut out = Vec::with_capacity(w * n);
        for t in start..start + w {
            for loc in 0..n {
                out.push(T::of_f32(self.values_norm[(t * n + loc) * c_total + channel]));
            }
        }
        out
    }

    /// Raw (denormalized) window for one channel.
    pub fn window_raw(&self, start: usize, channel: usize) -> Vec<f32> {
        crate::data::window_channel(&self.ds, start, self.task.window_len(), channel)
    }

    pub fn starts(&self, range: &Range<usize>) -> Result<Vec<usize>> {
        crate::data::window_starts(range, &self.task)
    }

    pub fn train_starts(&self) -> Result<Vec<usize>> {
        self.starts(&self.train)
    }

    pub fn val_starts(&self) -> Result<Vec<usize>> {
        self.starts(&self.val)
    }

    pub fn test_starts(&self) -> Result<Vec<usize>> {
        self.starts(&self.test)
    }
}

/// Evenly strided subsample of at most `cap` elements, keeping order.
pub fn strided_cap<T: Clone>(xs: &[T], cap: usize) -> Vec<T> {
    if xs.len() <= cap || cap == 0 {
        return xs.to_vec();
    }
    let step = xs.len() as f64 / cap as f64;
    (0..cap)
        .map(|i| xs[(i as f64 * step) as usize].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_graph, gen_grid, SynthConfig};

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            seed: 5,
            t_len: 120,
            period_daily: 12,
            period_weekly: 24,
            amplitude: 5.0,
            hotspot_count: 1,
            hotspot_speed: 0.3,
            noise_std: 0.2,
            phase_spread: 1.0,
            diffusion: 0.3,
        }
    }

    #[test]
    fn prepare_grid_and_graph() {
        let patch = PatchConfig {
            p_t: 4,
            p_s: 2,
            d_model: 16,
            num_subgraphs: 3,
        };
        let task = TaskSpec::new(12, 12);
        let grid = gen_grid(&small_cfg(), 4, 4).unwrap();
        let pg = PreparedDataset::prepare(grid, task, &patch, None, 1).unwrap();
        assert_eq!(pg.layout.len(), 6 * 4);
        assert!(pg.parts.is_none());

        let graph = gen_graph(&small_cfg(), 12, 3.0).unwrap();
        let pr = PreparedDataset::prepare(graph, task, &patch, None, 1).unwrap();
        assert_eq!(pr.layout.len(), 6 * 3);
        let parts = pr.parts.as_ref().unwrap();
        assert_eq!(parts.members.len(), 3);
        assert_eq!(parts.members.iter().map(|m| m.len()).sum::<usize>(), 12);
    }

    #[test]
    fn normalized_windows_round_trip_to_raw() {
        let patch = PatchConfig {
            p_t: 4,
            p_s: 2,
            d_model: 16,
            num_subgraphs: 2,
        };
        let task = TaskSpec::new(8, 4);
        let grid = gen_grid(&small_cfg(), 2, 2).unwrap();
        let p = PreparedDataset::prepare(grid, task, &patch, None, 1).unwrap();
        let wn: Vec<f64> = p.window_norm(10, 0);
        let wr = p.window_raw(10, 0);
        for (a, b) in wn.iter().zip(&wr) {
            let back = p.norm.denormalize(*a);
            assert!((back - *b as f64).abs() < 1e-4, "{back} vs {b}");
        }
    }

    #[test]
    fn strided_cap_keeps_ends_reasonable() {
        let xs: Vec<usize> = (0..100).collect();
        let capped = strided_cap(&xs, 10);
        assert_eq!(capped.len(), 10);
        assert_eq!(capped[0], 0);
        assert!(*capped.last().unwrap() >= 85);
        let small = strided_cap(&xs[..5], 10);
        assert_eq!(small.len(), 5);
    }
}
