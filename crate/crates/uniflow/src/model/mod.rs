//! The masked encoder-decoder transformer over patch sequences, with
//! positional/data-kind embeddings, mask-token assembly, memory retrieval
//! augmentation, and the full hand-written backward pass.

pub mod attention;
pub mod checkpoint;
pub mod layers;
pub mod params;

use crate::data::Kind;
use crate::error::{Error, Result};
use crate::linalg::{add_assign, Scalar};
use crate::mra::{augment, Mra, MraCache, MraConfig};
use crate::patching::{
    mask_history, GraphHead, GraphHeadCache, GraphParts, GraphPatchCache, GraphPatcher, GridHead,
    GridHeadCache, GridPatchCache, GridPatcher, PatchConfig, PatchLayout,
};
use crate::rng::Stream;
use attention::{Block, BlockCache};
use params::{grad, Init, ParamId, ParamStore};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub dropout_bp: u32,
    pub max_temporal_blocks: usize,
    pub max_spatial_units: usize,
}

impl ModelConfig {
    /// Dropout probability; stored in basis points so the config stays Eq.
    pub fn dropout(&self) -> f64 {
        self.dropout_bp as f64 / 10_000.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(
                "d_model must be a positive multiple of heads".into(),
            ));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(Error::Config("need at least one encoder and decoder layer".into()));
        }
        if self.ff_mult == 0 {
            return Err(Error::Config("ff_mult must be >= 1".into()));
        }
        if self.dropout_bp >= 10_000 {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            enc_layers: 4,
            dec_layers: 4,
            d_model: 256,
            heads: 8,
            ff_mult: 4,
            dropout_bp: 1000,
            max_temporal_blocks: 32,
            max_spatial_units: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullConfig {
    pub patch: PatchConfig,
    pub model: ModelConfig,
    pub mra: MraConfig,
}

impl FullConfig {
    pub fn validate(&self) -> Result<()> {
        self.patch.validate()?;
        self.model.validate()?;
        self.mra.validate()?;
        if self.patch.d_model != self.model.d_model {
            return Err(Error::Config(format!(
                "patch d_model {} disagrees with model d_model {}",
                self.patch.d_model, self.model.d_model
            )));
        }
        Ok(())
    }
}

/// Everything learnable plus the configs that shape it.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub cfg: FullConfig,
    pub store: ParamStore<T>,
    pub grid_patcher: GridPatcher,
    pub graph_patcher: GraphPatcher,
    pub pe_temporal: ParamId,
    pub pe_spatial: ParamId,
    pub pe_kind: ParamId,
    pub mask_token: ParamId,
    pub encoder: Vec<Block>,
    pub decoder: Vec<Block>,
    pub mra: Mra,
    pub grid_head: GridHead,
    pub graph_head: GraphHead,
    /// Dataset names this model was trained on (provenance for zero-shot).
    pub trained_on: Vec<String>,
}

/// Per-sample context resolved from the dataset.
pub struct SampleCtx<'a> {
    pub layout: &'a PatchLayout,
    pub parts: Option<&'a GraphParts>,
}

pub enum PatchCache<T> {
    Grid(GridPatchCache<T>),
    Graph(GraphPatchCache<T>),
}

pub enum HeadCache<T> {
    Grid(GridHeadCache<T>),
    Graph(GraphHeadCache<T>),
}

pub struct WindowCache<T> {
    pub patch: PatchCache<T>,
    pub s_h: Vec<T>,
    pub enc: Vec<BlockCache<T>>,
    pub z_e: Vec<T>,
    pub mra: Option<MraCache<T>>,
    pub z_d: Vec<T>,
    pub dec: Vec<BlockCache<T>>,
    pub y: Vec<T>,
    pub head: HeadCache<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(cfg: FullConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Stream::new(seed);
        let mut ps: ParamStore<T> = ParamStore::new();
        let d = cfg.model.d_model;

        let grid_patcher = GridPatcher::init(&mut ps, &cfg.patch, &mut rng);
        let graph_patcher = GraphPatcher::init(&mut ps, &cfg.patch, &mut rng);

        let pe_std = 0.02;
        let pe_temporal = ps.add(
            "pos.temporal",
            &[cfg.model.max_temporal_blocks, d],
            Init::Normal(pe_std),
            &mut rng,
        );
        let pe_spatial = ps.add(
            "pos.spatial",
            &[cfg.model.max_spatial_units, d],
            Init::Normal(pe_std),
            &mut rng,
        );
        let pe_kind = ps.add("pos.kind", &[2, d], Init::Normal(pe_std), &mut rng);
        let mask_token = ps.add("mask_token", &[d], Init::Normal(pe_std), &mut rng);

        let encoder = (0..cfg.model.enc_layers)
            .map(|i| {
                Block::init(
                    &mut ps,
                    &format!("enc.{i}"),
                    d,
                    cfg.model.heads,
                    cfg.model.ff_mult,
                    &mut rng,
                )
            })
            .collect();
        let decoder = (0..cfg.model.dec_layers)
            .map(|i| {
                Block::init(
                    &mut ps,
                    &format!("dec.{i}"),
                    d,
                    cfg.model.heads,
                    cfg.model.ff_mult,
                    &mut rng,
                )
            })
            .collect();

        let mra = Mra::init(&mut ps, cfg.mra, d, cfg.model.heads, &mut rng);

        let grid_head = GridHead::init(&mut ps, &cfg.patch, &mut rng);
        let graph_head = GraphHead::init(&mut ps, &cfg.patch, &mut rng);

        Ok(Model {
            cfg,
            store: ps,
            grid_patcher,
            graph_patcher,
            pe_temporal,
            pe_spatial,
            pe_kind,
            mask_token,
            encoder,
            decoder,
            mra,
            grid_head,
            graph_head,
            trained_on: Vec::new(),
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.len()
    }

    fn check_layout(&self, layout: &PatchLayout) -> Result<()> {
        if layout.n_blocks > self.cfg.model.max_temporal_blocks {
            return Err(Error::Config(format!(
                "layout needs {} temporal blocks, model supports {}",
                layout.n_blocks, self.cfg.model.max_temporal_blocks
            )));
        }
        if layout.spatial_units > self.cfg.model.max_spatial_units {
            return Err(Error::Config(format!(
                "layout needs {} spatial units, model supports {}",
                layout.spatial_units, self.cfg.model.max_spatial_units
            )));
        }
        if layout.hist_blocks == 0 {
            return Err(Error::Config("history must cover at least one block".into()));
        }
        Ok(())
    }

    fn pe_row(&self, table: ParamId, index: usize) -> &[T] {
        let d = self.cfg.model.d_model;
        &self.store.values[table.offset + index * d..table.offset + (index + 1) * d]
    }

    /// Adds temporal, spatial, and data-kind embeddings to every patch row.
    fn add_positional(&self, emb: &mut [T], layout: &PatchLayout) {
        let d = self.cfg.model.d_model;
        let kind_idx = match layout.kind {
            Kind::Grid => 0,
            Kind::Graph => 1,
        };
        for patch in 0..layout.len() {
            let b = layout.block_of(patch);
            let u = layout.unit_of(patch);
            let row = &mut emb[patch * d..(patch + 1) * d];
            let pt = self.pe_row(self.pe_temporal, b);
            let pu = self.pe_row(self.pe_spatial, u);
            let pk = self.pe_row(self.pe_kind, kind_idx);
            for c in 0..d {
                row[c] += pt[c] + pu[c] + pk[c];
            }
        }
    }

    /// Encoder over the history rows; output aligns row-for-row with input.
    pub fn encode(
        &self,
        s_h: &[T],
        rows: usize,
        dropout: f64,
        mut rng: Option<&mut Stream>,
    ) -> Result<(Vec<T>, Vec<BlockCache<T>>)> {
        if rows == 0 {
            return Err(Error::Shape("encoder input is empty".into()));
        }
        let mut x = s_h.to_vec();
        let mut caches = Vec::with_capacity(self.encoder.len());
        for block in &self.encoder {
            let (y, cache) = block.forward(&self.store.values, &x, rows, dropout, rng.as_deref_mut());
            caches.push(cache);
            x = y;
        }
        Ok((x, caches))
    }

    /// History positions take the encoder output; future positions take the
    /// mask token plus its positional encoding.
    pub fn assemble_decoder_input(
        &self,
        z_e: &[T],
        layout: &PatchLayout,
        prompts: Option<&MraCache<T>>,
    ) -> Vec<T> {
        let d = self.cfg.model.d_model;
        let l = layout.len();
        let l_h = layout.hist_len();
        debug_assert_eq!(z_e.len(), l_h * d);
        let kind_idx = match layout.kind {
            Kind::Grid => 0,
            Kind::Graph => 1,
        };
        let mut z_d = vec![T::zero(); l * d];
        z_d[..l_h * d].copy_from_slice(z_e);
        let mask = self.store.get(self.mask_token);
        for patch in l_h..l {
            let b = layout.block_of(patch);
            let u = layout.unit_of(patch);
            let row = &mut z_d[patch * d..(patch + 1) * d];
            let pt = self.pe_row(self.pe_temporal, b);
            let pu = self.pe_row(self.pe_spatial, u);
            let pk = self.pe_row(self.pe_kind, kind_idx);
            for c in 0..d {
                row[c] = mask[c] + pt[c] + pu[c] + pk[c];
            }
        }
        if let Some(cache) = prompts {
            augment(&mut z_d, cache, d, l);
        }
        z_d
    }

    /// Full self-attention over the assembled sequence (no causal mask).
    pub fn decode(
        &self,
        z_d: &[T],
        rows: usize,
        dropout: f64,
        mut rng: Option<&mut Stream>,
    ) -> (Vec<T>, Vec<BlockCache<T>>) {
        let mut x = z_d.to_vec();
        let mut caches = Vec::with_capacity(self.decoder.len());
        for block in &self.decoder {
            let (y, cache) = block.forward(&self.store.values, &x, rows, dropout, rng.as_deref_mut());
            caches.push(cache);
            x = y;
        }
        (x, caches)
    }

    /// Window values (normalized, `T' x N`, one channel) to predictions for
    /// all T' steps. `dropout_rng = None` runs in inference mode.
    pub fn forward_window(
        &self,
        window: &[T],
        ctx: &SampleCtx,
        mut dropout_rng: Option<&mut Stream>,
    ) -> Result<(Vec<T>, WindowCache<T>)> {
        let layout = ctx.layout;
        self.check_layout(layout)?;
        let d = self.cfg.model.d_model;
        let dropout = if dropout_rng.is_some() {
            self.cfg.model.dropout()
        } else {
            0.0
        };

        let (mut emb, patch_cache) = match layout.kind {
            Kind::Grid => {
                let (emb, cache) = self.grid_patcher.forward(&self.store.values, window, layout);
                (emb, PatchCache::Grid(cache))
            }
            Kind::Graph => {
                let parts = ctx
                    .parts
                    .ok_or_else(|| Error::Config("graph window needs partition context".into()))?;
                if parts.members.len() != layout.spatial_units {
                    return Err(Error::Shape(format!(
                        "partition has {} parts, layout expects {}",
                        parts.members.len(),
                        layout.spatial_units
                    )));
                }
                let (emb, cache) =
                    self.graph_patcher
                        .forward(&self.store.values, window, layout, parts);
                (emb, PatchCache::Graph(cache))
            }
        };
        self.add_positional(&mut emb, layout);

        let (s_h, _future) = mask_history(&emb, d, layout);
        let l_h = layout.hist_len();

        let (z_e, enc_caches) = self.encode(&s_h, l_h, dropout, dropout_rng.as_deref_mut())?;

        let mra_cache = if self.mra.cfg.any_enabled() {
            Some(
                self.mra
                    .forward(&self.store.values, &s_h, layout.hist_blocks, layout.spatial_units),
            )
        } else {
            None
        };

        let z_d = self.assemble_decoder_input(&z_e, layout, mra_cache.as_ref());
        let (y, dec_caches) = self.decode(&z_d, layout.len(), dropout, dropout_rng);

        let (pred, head_cache) = match layout.kind {
            Kind::Grid => {
                let (pred, cache) = self.grid_head.forward(&self.store.values, &y, layout);
                (pred, HeadCache::Grid(cache))
            }
            Kind::Graph => {
                let parts = ctx.parts.expect("checked above");
                let feat = match &patch_cache {
                    PatchCache::Graph(c) => &c.feat,
                    PatchCache::Grid(_) => unreachable!(),
                };
                let (pred, cache) =
                    self.graph_head
                        .forward(&self.store.values, &y, feat, layout, parts);
                (pred, HeadCache::Graph(cache))
            }
        };

        Ok((
            pred,
            WindowCache {
                patch: patch_cache,
                s_h,
                enc: enc_caches,
                z_e,
                mra: mra_cache,
                z_d,
                dec: dec_caches,
                y,
                head: head_cache,
            },
        ))
    }

    /// Per-bank retrieval weights averaged over history positions and
    /// concatenated in bank order: a `4 * n_mem` pattern fingerprint.
    pub fn retrieval_signature(&self, window: &[T], ctx: &SampleCtx) -> Result<Vec<f64>> {
        if !self.mra.cfg.any_enabled() {
            return Err(Error::Config(
                "retrieval signature needs at least one enabled memory bank".into(),
            ));
        }
        let (_, cache) = self.forward_window(window, ctx, None)?;
        let mc = cache.mra.as_ref().expect("mra enabled");
        let n_mem = self.mra.cfg.n_mem;
        let l_h = mc.l_h;
        let mut signature = Vec::with_capacity(crate::mra::BANK_COUNT * n_mem);
        for bank in mc.banks.iter().flatten() {
            for m in 0..n_mem {
                let mut acc = 0.0;
                for i in 0..l_h {
                    acc += bank.alpha[i * n_mem + m].as_f64();
                }
                signature.push(acc / l_h as f64);
            }
        }
        Ok(signature)
    }

    /// Accumulates parameter gradients for one window into `grads`.
    pub fn backward_window(
        &self,
        ctx: &SampleCtx,
        cache: &WindowCache<T>,
        dpred: &[T],
        grads: &mut [T],
    ) {
        let layout = ctx.layout;
        let d = self.cfg.model.d_model;
        let l = layout.len();
        let l_h = layout.hist_len();
        let values = &self.store.values;

        // head
        let (dy, d_feat) = match (&cache.head, &cache.patch) {
            (HeadCache::Grid(_), _) => {
                let dy = self
                    .grid_head
                    .backward(values, grads, &cache.y, dpred, layout);
                (dy, None)
            }
            (HeadCache::Graph(hc), PatchCache::Graph(_)) => {
                let parts = ctx.parts.expect("graph ctx");
                let (dy, d_feat) =
                    self.graph_head
                        .backward(values, grads, &cache.y, hc, dpred, layout, parts);
                (dy, Some(d_feat))
            }
            _ => unreachable!("head/patch cache kinds always match"),
        };

        // decoder
        let mut dz = dy;
        for (block, bc) in self.decoder.iter().zip(&cache.dec).rev() {
            dz = block.backward(values, grads, bc, &dz, l);
        }

        // disassemble decoder input
        let d_z_e = dz[..l_h * d].to_vec();
        let kind_idx = match layout.kind {
            Kind::Grid => 0,
            Kind::Graph => 1,
        };
        let mut d_mean_prompt = vec![T::zero(); d];
        for patch in l_h..l {
            let row = &dz[patch * d..(patch + 1) * d];
            let b = layout.block_of(patch);
            let u = layout.unit_of(patch);
            add_assign(grad(grads, self.mask_token), row);
            let gt = grad(grads, self.pe_temporal);
            add_assign(&mut gt[b * d..(b + 1) * d], row);
            let gs = grad(grads, self.pe_spatial);
            add_assign(&mut gs[u * d..(u + 1) * d], row);
            let gk = grad(grads, self.pe_kind);
            add_assign(&mut gk[kind_idx * d..(kind_idx + 1) * d], row);
            add_assign(&mut d_mean_prompt, row);
        }

        // memory retrieval: prompts at history rows get the same gradient as
        // z_e rows (additive), future rows feed the mean prompt
        let mut d_s_h = vec![T::zero(); l_h * d];
        if let Some(mc) = &cache.mra {
            let d_prompt_rows = &dz[..l_h * d];
            let ds = self.mra.backward(
                values,
                grads,
                &cache.s_h,
                mc,
                d_prompt_rows,
                &d_mean_prompt,
            );
            add_assign(&mut d_s_h, &ds);
        }

        // encoder
        let mut dzt = d_z_e;
        for (block, bc) in self.encoder.iter().zip(&cache.enc).rev() {
            dzt = block.backward(values, grads, bc, &dzt, l_h);
        }
        add_assign(&mut d_s_h, &dzt);

        // positional gradients at history rows; future rows of S are masked
        // out and carry no gradient
        let mut d_emb = vec![T::zero(); l * d];
        d_emb[..l_h * d].copy_from_slice(&d_s_h);
        for patch in 0..l_h {
            let row = &d_s_h[patch * d..(patch + 1) * d];
            let b = layout.block_of(patch);
            let u = layout.unit_of(patch);
            let gt = grad(grads, self.pe_temporal);
            add_assign(&mut gt[b * d..(b + 1) * d], row);
            let gs = grad(grads, self.pe_spatial);
            add_assign(&mut gs[u * d..(u + 1) * d], row);
            let gk = grad(grads, self.pe_kind);
            add_assign(&mut gk[kind_idx * d..(kind_idx + 1) * d], row);
        }

        // patch encoders
        match (&cache.patch, layout.kind) {
            (PatchCache::Grid(pc), Kind::Grid) => {
                self.grid_patcher
                    .backward(values, grads, pc, &d_emb, layout);
            }
            (PatchCache::Graph(pc), Kind::Graph) => {
                let parts = ctx.parts.expect("graph ctx");
                let nb = layout.n_blocks;
                let n = layout.num_locations;
                let d_feat =
                    d_feat.unwrap_or_else(|| vec![T::zero(); nb * n * d]);
                self.graph_patcher
                    .backward(values, grads, pc, &d_emb, d_feat, layout, parts);
            }
            _ => unreachable!(),
        }
    }
}
