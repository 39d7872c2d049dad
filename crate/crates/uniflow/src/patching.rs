//! Spatio-temporal patching: windows become L x D patch sequences and
//! decoder outputs map back to flow space.
//!
//! Both data kinds share one sequence convention: temporal block outermost,
//! spatial unit innermost. History blocks therefore occupy a contiguous
//! prefix of the sequence, and masking the future is a simple split.
//!
//! - Grid windows go through a strided 3-D convolution (kernel = stride =
//!   `(p_t, p_s, p_s)`), realized as a gather of each block followed by a
//!   shared linear map. Spatial units are enumerated in scan-line order.
//! - Graph windows go through a per-node strided 1-D temporal convolution
//!   (kernel = stride = `p_t`); each subgraph patch is the mean of its
//!   member nodes' features. The per-node features are retained as skip
//!   features for de-patching.
//!
//! De-patching heads are learnable linear maps from token embeddings back
//! to the covered cells. The graph head adds a per-node correction computed
//! from the node's skip feature; future blocks cycle through the node's
//! history skip features so that predictions never depend on future inputs.

use crate::data::{GridSpec, Kind, TaskSpec};
use crate::error::{Error, Result};
use crate::linalg::{gelu, gelu_grad, Scalar};
use crate::model::layers::Linear;
use crate::model::params::ParamStore;
use crate::rng::Stream;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchConfig {
    /// Temporal patch size.
    pub p_t: usize,
    /// Spatial patch size (grid only).
    pub p_s: usize,
    /// Embedding width D.
    pub d_model: usize,
    /// Number of subgraphs L_s (graph only).
    pub num_subgraphs: usize,
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_t == 0 || self.p_s == 0 {
            return Err(Error::Config("patch sizes must be positive".into()));
        }
        if self.num_subgraphs == 0 {
            return Err(Error::Config("num_subgraphs must be >= 1".into()));
        }
        if self.d_model < 8 {
            return Err(Error::Config("d_model must be >= 8".into()));
        }
        Ok(())
    }
}

/// Maps patch indices to (temporal block, spatial unit) and back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchLayout {
    pub kind: Kind,
    pub n_blocks: usize,
    pub hist_blocks: usize,
    pub spatial_units: usize,
    /// Grid dimensions (height, width) when kind is Grid.
    pub grid: Option<(usize, usize)>,
    pub num_locations: usize,
    pub p_t: usize,
    pub p_s: usize,
}

impl PatchLayout {
    pub fn new(
        kind: Kind,
        task: &TaskSpec,
        cfg: &PatchConfig,
        grid: Option<GridSpec>,
        num_locations: usize,
    ) -> Result<PatchLayout> {
        cfg.validate()?;
        let t_total = task.window_len();
        if !t_total.is_multiple_of(cfg.p_t) {
            return Err(Error::Config(format!(
                "p_t = {} must divide H+P = {t_total}",
                cfg.p_t
            )));
        }
        if !task.history_len.is_multiple_of(cfg.p_t) {
            return Err(Error::Config(format!(
                "p_t = {} must divide the history length {}",
                cfg.p_t, task.history_len
            )));
        }
        let n_blocks = t_total / cfg.p_t;
        let hist_blocks = task.history_len / cfg.p_t;
        let (spatial_units, grid_dims) = match kind {
            Kind::Grid => {
                let g = grid.ok_or_else(|| Error::Config("grid layout needs GridSpec".into()))?;
                if g.height % cfg.p_s != 0 || g.width % cfg.p_s != 0 {
                    return Err(Error::Config(format!(
                        "p_s = {} must divide grid {}x{}",
                        cfg.p_s, g.height, g.width
                    )));
                }
                (
                    (g.height / cfg.p_s) * (g.width / cfg.p_s),
                    Some((g.height, g.width)),
                )
            }
            Kind::Graph => (cfg.num_subgraphs, None),
        };
        Ok(PatchLayout {
            kind,
            n_blocks,
            hist_blocks,
            spatial_units,
            grid: grid_dims,
            num_locations,
            p_t: cfg.p_t,
            p_s: cfg.p_s,
        })
    }

    pub fn len(&self) -> usize {
        self.n_blocks * self.spatial_units
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hist_len(&self) -> usize {
        self.hist_blocks * self.spatial_units
    }

    pub fn block_of(&self, patch: usize) -> usize {
        patch / self.spatial_units
    }

    pub fn unit_of(&self, patch: usize) -> usize {
        patch % self.spatial_units
    }

    pub fn is_history(&self, patch: usize) -> bool {
        self.block_of(patch) < self.hist_blocks
    }

    /// Flat input indices covered by one grid patch, in (dt, dy, dx) order.
    /// The same order defines the conv weight rows and the head output slots.
    pub fn grid_patch_indices(&self, patch: usize) -> Vec<usize> {
        let (h, w) = self.grid.expect("grid layout");
        let bw_count = w / self.p_s;
        let b = self.block_of(patch);
        let unit = self.unit_of(patch);
        let bh = unit / bw_count;
        let bw = unit % bw_count;
        let mut idx = Vec::with_capacity(self.p_t * self.p_s * self.p_s);
        for dt in 0..self.p_t {
            let t = b * self.p_t + dt;
            for dy in 0..self.p_s {
                let row = bh * self.p_s + dy;
                for dx in 0..self.p_s {
                    let col = bw * self.p_s + dx;
                    debug_assert!(row < h);
                    idx.push(t * self.num_locations + row * w + col);
                }
            }
        }
        idx
    }
}

/// Splits a patch sequence into its history rows (order preserved) and the
/// indices of the future positions.
pub fn mask_history<T: Clone>(s: &[T], d: usize, layout: &PatchLayout) -> (Vec<T>, Vec<usize>) {
    let lh = layout.hist_len();
    let s_h = s[..lh * d].to_vec();
    let future: Vec<usize> = (lh..layout.len()).collect();
    (s_h, future)
}

// --- grid ------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct GridPatcher {
    pub conv: Linear,
}

pub struct GridPatchCache<T> {
    /// Gathered blocks, L x (p_t * p_s^2).
    pub gathered: Vec<T>,
}

impl GridPatcher {
    pub fn init<T: Scalar>(ps: &mut ParamStore<T>, cfg: &PatchConfig, rng: &mut Stream) -> Self {
        let din = cfg.p_t * cfg.p_s * cfg.p_s;
        GridPatcher {
            conv: Linear::init(ps, "patch.grid.conv", din, cfg.d_model, true, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        values: &[T],
        window: &[T],
        layout: &PatchLayout,
    ) -> (Vec<T>, GridPatchCache<T>) {
        let l = layout.len();
        let din = self.conv.din;
        let mut gathered = vec![T::zero(); l * din];
        for patch in 0..l {
            let idx = layout.grid_patch_indices(patch);
            for (e, &src) in idx.iter().enumerate() {
                gathered[patch * din + e] = window[src];
            }
        }
        let emb = self.conv.forward(values, &gathered, l);
        (emb, GridPatchCache { gathered })
    }

    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        cache: &GridPatchCache<T>,
        d_emb: &[T],
        layout: &PatchLayout,
    ) {
        let _ = self
            .conv
            .backward(values, grads, &cache.gathered, d_emb, layout.len());
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GridHead {
    pub lin: Linear,
}

pub struct GridHeadCache<T> {
    pub head_out: Vec<T>,
}

impl GridHead {
    pub fn init<T: Scalar>(ps: &mut ParamStore<T>, cfg: &PatchConfig, rng: &mut Stream) -> Self {
        let dout = cfg.p_t * cfg.p_s * cfg.p_s;
        GridHead {
            lin: Linear::init(ps, "head.grid", cfg.d_model, dout, true, rng),
        }
    }

    /// Decoder tokens back to a T' x N field; each output cell is written by
    /// exactly one (patch, slot) pair.
    pub fn forward<T: Scalar>(
        &self,
        values: &[T],
        y: &[T],
        layout: &PatchLayout,
    ) -> (Vec<T>, GridHeadCache<T>) {
        let l = layout.len();
        let head_out = self.lin.forward(values, y, l);
        let mut pred = vec![T::zero(); layout.n_blocks * layout.p_t * layout.num_locations];
        let dout = self.lin.dout;
        for patch in 0..l {
            let idx = layout.grid_patch_indices(patch);
            for (e, &dst) in idx.iter().enumerate() {
                pred[dst] += head_out[patch * dout + e];
            }
        }
        (pred, GridHeadCache { head_out })
    }

    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        y: &[T],
        dpred: &[T],
        layout: &PatchLayout,
    ) -> Vec<T> {
        let l = layout.len();
        let dout = self.lin.dout;
        let mut d_head = vec![T::zero(); l * dout];
        for patch in 0..l {
            let idx = layout.grid_patch_indices(patch);
            for (e, &src) in idx.iter().enumerate() {
                d_head[patch * dout + e] = dpred[src];
            }
        }
        self.lin.backward(values, grads, y, &d_head, l)
    }
}

// --- graph -------------------------------------------------------------------

/// Node-to-subgraph assignment context derived from a partition.
#[derive(Clone, Debug)]
pub struct GraphParts {
    pub node_part: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl GraphParts {
    pub fn from_partition(p: &crate::partition::Partition) -> Self {
        GraphParts {
            node_part: p.assignment.clone(),
            members: p.members(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GraphPatcher {
    pub conv: Linear,
}

pub struct GraphPatchCache<T> {
    /// Per-(block, node) temporal slices, (n_blocks * N) x p_t.
    pub gathered: Vec<T>,
    /// Per-node convolved features, (n_blocks * N) x D. These are the skip
    /// features retained for de-patching.
    pub feat: Vec<T>,
}

impl GraphPatcher {
    pub fn init<T: Scalar>(ps: &mut ParamStore<T>, cfg: &PatchConfig, rng: &mut Stream) -> Self {
        GraphPatcher {
            conv: Linear::init(ps, "patch.graph.conv", cfg.p_t, cfg.d_model, true, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        values: &[T],
        window: &[T],
        layout: &PatchLayout,
        parts: &GraphParts,
    ) -> (Vec<T>, GraphPatchCache<T>) {
        let n = layout.num_locations;
        let nb = layout.n_blocks;
        let p_t = layout.p_t;
        let d = self.conv.dout;

        let mut gathered = vec![T::zero(); nb * n * p_t];
        for b in 0..nb {
            for node in 0..n {
                for dt in 0..p_t {
                    gathered[(b * n + node) * p_t + dt] = window[(b * p_t + dt) * n + node];
                }
            }
        }
        let feat = self.conv.forward(values, &gathered, nb * n);

        let units = layout.spatial_units;
        let mut emb = vec![T::zero(); nb * units * d];
        for b in 0..nb {
            for (s, members) in parts.members.iter().enumerate() {
                let out = &mut emb[(b * units + s) * d..(b * units + s + 1) * d];
                let inv = T::of_f64(1.0 / members.len() as f64);
                for &node in members {
                    let f = &feat[(b * n + node) * d..(b * n + node + 1) * d];
                    for c in 0..d {
                        out[c] += f[c] * inv;
                    }
                }
            }
        }
        (emb, GraphPatchCache { gathered, feat })
    }

    /// `d_feat` carries gradient flowing into the skip features from the
    /// de-patching head; the pooled-path gradient from `d_emb` is added here.
    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        cache: &GraphPatchCache<T>,
        d_emb: &[T],
        mut d_feat: Vec<T>,
        layout: &PatchLayout,
        parts: &GraphParts,
    ) {
        let n = layout.num_locations;
        let nb = layout.n_blocks;
        let d = self.conv.dout;
        let units = layout.spatial_units;
        for b in 0..nb {
            for (s, members) in parts.members.iter().enumerate() {
                let src = &d_emb[(b * units + s) * d..(b * units + s + 1) * d];
                let inv = T::of_f64(1.0 / members.len() as f64);
                for &node in members {
                    let dst = &mut d_feat[(b * n + node) * d..(b * n + node + 1) * d];
                    for c in 0..d {
                        dst[c] += src[c] * inv;
                    }
                }
            }
        }
        let _ = self
            .conv
            .backward(values, grads, &cache.gathered, &d_feat, nb * n);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GraphHead {
    /// Subgraph token to a p_t-step subgraph-level prediction.
    pub sub: Linear,
    /// Two-layer correction from a node's skip feature to p_t residuals.
    pub corr1: Linear,
    pub corr2: Linear,
}

pub struct GraphHeadCache<T> {
    pub sub_out: Vec<T>,
    /// Correction inputs, (n_blocks * N) x D; history blocks take the node's
    /// own skip feature, future blocks cycle through the history blocks.
    pub skip_in: Vec<T>,
    pub corr_pre: Vec<T>,
    pub corr_act: Vec<T>,
}

impl GraphHead {
    pub fn init<T: Scalar>(ps: &mut ParamStore<T>, cfg: &PatchConfig, rng: &mut Stream) -> Self {
        GraphHead {
            sub: Linear::init(ps, "head.graph.sub", cfg.d_model, cfg.p_t, true, rng),
            corr1: Linear::init(ps, "head.graph.corr1", cfg.d_model, cfg.d_model, true, rng),
            corr2: Linear::init(ps, "head.graph.corr2", cfg.d_model, cfg.p_t, true, rng),
        }
    }

    fn skip_inputs<T: Scalar>(&self, feat: &[T], layout: &PatchLayout) -> Vec<T> {
        let n = layout.num_locations;
        let nb = layout.n_blocks;
        let hb = layout.hist_blocks;
        let d = self.corr1.din;
        let mut skip_in = vec![T::zero(); nb * n * d];
        skip_in[..hb * n * d].copy_from_slice(&feat[..hb * n * d]);
        // leakage-free stand-in for future blocks: cycle through the history
        // blocks, so each future block sees time-varying per-node features
        for b in hb..nb {
            let src = b % hb;
            let (dst_part, src_part) = skip_in.split_at_mut(b * n * d);
            src_part[..n * d].copy_from_slice(&dst_part[src * n * d..(src + 1) * n * d]);
        }
        skip_in
    }

    pub fn forward<T: Scalar>(
        &self,
        values: &[T],
        y: &[T],
        feat: &[T],
        layout: &PatchLayout,
        parts: &GraphParts,
    ) -> (Vec<T>, GraphHeadCache<T>) {
        let n = layout.num_locations;
        let nb = layout.n_blocks;
        let p_t = layout.p_t;
        let l = layout.len();

        let sub_out = self.sub.forward(values, y, l);

        let skip_in = self.skip_inputs(feat, layout);
        let corr_pre = self.corr1.forward(values, &skip_in, nb * n);
        let corr_act: Vec<T> = corr_pre.iter().map(|&v| gelu(v)).collect();
        let corr_out = self.corr2.forward(values, &corr_act, nb * n);

        let units = layout.spatial_units;
        let mut pred = vec![T::zero(); nb * p_t * n];
        for b in 0..nb {
            for node in 0..n {
                let s = parts.node_part[node];
                let sub_row = &sub_out[(b * units + s) * p_t..(b * units + s + 1) * p_t];
                let corr_row = &corr_out[(b * n + node) * p_t..(b * n + node + 1) * p_t];
                for dt in 0..p_t {
                    pred[(b * p_t + dt) * n + node] = sub_row[dt] + corr_row[dt];
                }
            }
        }
        (
            pred,
            GraphHeadCache {
                sub_out,
                skip_in,
                corr_pre,
                corr_act,
            },
        )
    }

    /// Returns (d_tokens, d_feat).
    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        y: &[T],
        cache: &GraphHeadCache<T>,
        dpred: &[T],
        layout: &PatchLayout,
        parts: &GraphParts,
    ) -> (Vec<T>, Vec<T>) {
        let n = layout.num_locations;
        let nb = layout.n_blocks;
        let hb = layout.hist_blocks;
        let p_t = layout.p_t;
        let l = layout.len();
        let units = layout.spatial_units;
        let d = self.corr1.din;

        let mut d_sub = vec![T::zero(); l * p_t];
        let mut d_corr_out = vec![T::zero(); nb * n * p_t];
        for b in 0..nb {
            for node in 0..n {
                let s = parts.node_part[node];
                for dt in 0..p_t {
                    let g = dpred[(b * p_t + dt) * n + node];
                    d_sub[(b * units + s) * p_t + dt] += g;
                    d_corr_out[(b * n + node) * p_t + dt] = g;
                }
            }
        }

        let d_tokens = self.sub.backward(values, grads, y, &d_sub, l);

        let mut d_act = self
            .corr2
            .backward(values, grads, &cache.corr_act, &d_corr_out, nb * n);
        for i in 0..d_act.len() {
            d_act[i] *= gelu_grad(cache.corr_pre[i]);
        }
        let d_skip_in = self
            .corr1
            .backward(values, grads, &cache.skip_in, &d_act, nb * n);

        let mut d_feat = vec![T::zero(); nb * n * d];
        d_feat[..hb * n * d].copy_from_slice(&d_skip_in[..hb * n * d]);
        for b in hb..nb {
            let src = b % hb;
            for i in 0..n * d {
                d_feat[src * n * d + i] += d_skip_in[b * n * d + i];
            }
        }
        (d_tokens, d_feat)
    }
}
