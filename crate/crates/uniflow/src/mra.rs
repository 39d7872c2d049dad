//! Memory retrieval augmentation: pattern queries over the history patches,
//! four learnable key-value banks, softmax retrieval, and additive prompts
//! for the decoder input.
//!
//! Queries come from four views of the history sequence `S_h`:
//! - time: one multi-head self-attention pass;
//! - frequency: per-(spatial unit, channel) DFT magnitudes along the
//!   temporal-block axis, zero-padded back to the block count, then a
//!   learnable linear map (phase is discarded, so the view is invariant to
//!   circular time shifts);
//! - two spatial views: a graph convolution `relu(A . E . W)` over the
//!   adaptive adjacency `A = softmax(relu(E E^T))` built from each of the
//!   views above.
//!
//! Retrieval is `alpha = softmax(Q K^T)`, `P = alpha V`; prompts from all
//! enabled banks are summed. History positions receive their own prompt
//! row; future (mask-token) positions receive the mean prompt over history
//! positions, keeping every prompt a function of history only.

use crate::fft;
use crate::linalg::{
    add_assign, axpy, matmul, matmul_acc, matmul_at_b_acc, matmul_bt, relu_backward, softmax_rows,
    softmax_rows_backward, Scalar,
};
use crate::model::attention::{MhaCache, MultiHeadAttention};
use crate::model::params::{grad, Init, ParamId, ParamStore};
use crate::model::layers::Linear;
use crate::rng::Stream;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

pub const BANK_COUNT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    Time,
    Freq,
    TimeSpatial,
    FreqSpatial,
}

pub const BANK_KINDS: [BankKind; BANK_COUNT] = [
    BankKind::Time,
    BankKind::Freq,
    BankKind::TimeSpatial,
    BankKind::FreqSpatial,
];

impl BankKind {
    pub fn label(self) -> &'static str {
        match self {
            BankKind::Time => "time",
            BankKind::Freq => "freq",
            BankKind::TimeSpatial => "time_spatial",
            BankKind::FreqSpatial => "freq_spatial",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MraConfig {
    /// Memory units per bank.
    pub n_mem: usize,
    /// Per-bank ablation switches, ordered [time, freq, time_spatial, freq_spatial].
    pub enabled: [bool; BANK_COUNT],
}

impl Default for MraConfig {
    fn default() -> Self {
        MraConfig {
            n_mem: 512,
            enabled: [true; BANK_COUNT],
        }
    }
}

impl MraConfig {
    pub fn none() -> Self {
        MraConfig {
            n_mem: 0,
            enabled: [false; BANK_COUNT],
        }
    }

    pub fn any_enabled(&self) -> bool {
        self.n_mem > 0 && self.enabled.iter().any(|&e| e)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.enabled.iter().any(|&e| e) && self.n_mem == 0 {
            return Err(crate::Error::Config(
                "enabled memory banks need n_mem >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MemoryBank {
    pub kind: BankKind,
    pub keys: ParamId,
    pub values: ParamId,
}

#[derive(Clone, Debug)]
pub struct Mra {
    pub cfg: MraConfig,
    pub d: usize,
    pub query_attn: MultiHeadAttention,
    pub freq_lin: Linear,
    pub gcn_time: ParamId,
    pub gcn_freq: ParamId,
    pub banks: [MemoryBank; BANK_COUNT],
}

pub struct BankCache<T> {
    pub alpha: Vec<T>,
    pub prompt: Vec<T>,
}

pub struct MraCache<T> {
    pub l_h: usize,
    pub n_b: usize,
    pub n_s: usize,
    pub e_t: Vec<T>,
    pub attn: MhaCache<T>,
    /// Non-redundant DFT bins per (spatial unit, channel).
    pub spectra: Vec<Complex<T>>,
    pub mag: Vec<T>,
    pub e_f: Vec<T>,
    pub g_t: Vec<T>,
    pub a_t: Vec<T>,
    pub g_f: Vec<T>,
    pub a_f: Vec<T>,
    pub h_t: Vec<T>,
    pub st_pre: Vec<T>,
    pub e_st: Vec<T>,
    pub h_f: Vec<T>,
    pub sf_pre: Vec<T>,
    pub e_sf: Vec<T>,
    pub banks: [Option<BankCache<T>>; BANK_COUNT],
    pub prompt_sum: Vec<T>,
    pub mean_prompt: Vec<T>,
}

impl Mra {
    pub fn init<T: Scalar>(
        ps: &mut ParamStore<T>,
        cfg: MraConfig,
        d: usize,
        heads: usize,
        rng: &mut Stream,
    ) -> Self {
        let query_attn = MultiHeadAttention::init(ps, "mra.query", d, heads, rng);
        let freq_lin = Linear::init(ps, "mra.freq", d, d, true, rng);
        let std = 1.0 / (d as f64).sqrt();
        let gcn_time = ps.add("mra.gcn_time.w", &[d, d], Init::Normal(std), rng);
        let gcn_freq = ps.add("mra.gcn_freq.w", &[d, d], Init::Normal(std), rng);
        let n_mem = cfg.n_mem.max(1);
        // keys start hot so the retrieval softmax is peaked enough to
        // differentiate queries; values start an order of magnitude colder
        // so the initial prompts barely perturb the decoder input
        let key_std = 4.0 / (d as f64).sqrt();
        let value_std = 0.1 / (d as f64).sqrt();
        let mk_bank = |ps: &mut ParamStore<T>, kind: BankKind, rng: &mut Stream| {
            let keys = ps.add(
                &format!("mem.{}.keys", kind.label()),
                &[n_mem, d],
                Init::Normal(key_std),
                rng,
            );
            let values = ps.add(
                &format!("mem.{}.values", kind.label()),
                &[n_mem, d],
                Init::Normal(value_std),
                rng,
            );
            MemoryBank { kind, keys, values }
        };
        let banks = [
            mk_bank(ps, BankKind::Time, rng),
            mk_bank(ps, BankKind::Freq, rng),
            mk_bank(ps, BankKind::TimeSpatial, rng),
            mk_bank(ps, BankKind::FreqSpatial, rng),
        ];
        Mra {
            cfg,
            d,
            query_attn,
            freq_lin,
            gcn_time,
            gcn_freq,
            banks,
        }
    }

    /// Query formulation plus retrieval from every enabled bank.
    /// `s_h` is the history patch sequence, (n_b * n_s) x D.
    pub fn forward<T: Scalar>(
        &self,
        values: &[T],
        s_h: &[T],
        n_b: usize,
        n_s: usize,
    ) -> MraCache<T> {
        let d = self.d;
        let l_h = n_b * n_s;
        assert!(l_h >= 1, "query formulation needs at least one history row");

        // time view
        let (e_t, attn) = self.query_attn.forward(values, s_h, l_h);

        // frequency view
        let bins = fft::rfft_bins(n_b);
        let mut spectra = vec![Complex::new(T::zero(), T::zero()); n_s * d * bins];
        let mut mag = vec![T::zero(); l_h * d];
        let mut series = vec![T::zero(); n_b];
        for s in 0..n_s {
            for c in 0..d {
                for b in 0..n_b {
                    series[b] = s_h[(b * n_s + s) * d + c];
                }
                let spec = fft::rfft(&series);
                for (k, &z) in spec.iter().enumerate() {
                    spectra[(s * d + c) * bins + k] = z;
                    mag[(k * n_s + s) * d + c] = z.norm();
                }
            }
        }
        let e_f = self.freq_lin.forward(values, &mag, l_h);

        // adaptive adjacencies and spatial views
        let (g_t, a_t) = adjacency(&e_t, l_h, d);
        let (g_f, a_f) = adjacency(&e_f, l_h, d);

        let w_st = &values[self.gcn_time.offset..self.gcn_time.offset + self.gcn_time.len];
        let (h_t, st_pre, e_st) = gcn_forward(&a_t, &e_t, w_st, l_h, d);
        let w_sf = &values[self.gcn_freq.offset..self.gcn_freq.offset + self.gcn_freq.len];
        let (h_f, sf_pre, e_sf) = gcn_forward(&a_f, &e_f, w_sf, l_h, d);

        // retrieval
        let queries = [&e_t, &e_f, &e_st, &e_sf];
        let mut banks: [Option<BankCache<T>>; BANK_COUNT] = [None, None, None, None];
        let mut prompt_sum = vec![T::zero(); l_h * d];
        for i in 0..BANK_COUNT {
            if !self.cfg.enabled[i] {
                continue;
            }
            let cache = retrieve(
                queries[i],
                &values[self.banks[i].keys.offset..self.banks[i].keys.offset + self.banks[i].keys.len],
                &values[self.banks[i].values.offset
                    ..self.banks[i].values.offset + self.banks[i].values.len],
                l_h,
                self.cfg.n_mem,
                d,
            );
            add_assign(&mut prompt_sum, &cache.prompt);
            banks[i] = Some(cache);
        }
        let mut mean_prompt = vec![T::zero(); d];
        let inv = T::of_f64(1.0 / l_h as f64);
        for i in 0..l_h {
            for c in 0..d {
                mean_prompt[c] += prompt_sum[i * d + c] * inv;
            }
        }

        MraCache {
            l_h,
            n_b,
            n_s,
            e_t,
            attn,
            spectra,
            mag,
            e_f,
            g_t,
            a_t,
            g_f,
            a_f,
            h_t,
            st_pre,
            e_st,
            h_f,
            sf_pre,
            e_sf,
            banks,
            prompt_sum,
            mean_prompt,
        }
    }

    /// Backward from prompt gradients to `dS_h`. `d_prompt_rows` is the
    /// gradient arriving at each history position's prompt; `d_mean_prompt`
    /// the gradient arriving at the shared future-position prompt.
    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        s_h: &[T],
        cache: &MraCache<T>,
        d_prompt_rows: &[T],
        d_mean_prompt: &[T],
    ) -> Vec<T> {
        let d = self.d;
        let l_h = cache.l_h;
        let n_mem = self.cfg.n_mem;

        // every bank's prompt receives the same upstream flow
        let inv = T::of_f64(1.0 / l_h as f64);
        let mut dps = d_prompt_rows.to_vec();
        for i in 0..l_h {
            for c in 0..d {
                dps[i * d + c] += d_mean_prompt[c] * inv;
            }
        }

        let mut d_e_t = vec![T::zero(); l_h * d];
        let mut d_e_f = vec![T::zero(); l_h * d];
        let mut d_e_st = vec![T::zero(); l_h * d];
        let mut d_e_sf = vec![T::zero(); l_h * d];

        let queries = [&cache.e_t, &cache.e_f, &cache.e_st, &cache.e_sf];
        let dqueries: [&mut Vec<T>; BANK_COUNT] =
            [&mut d_e_t, &mut d_e_f, &mut d_e_st, &mut d_e_sf];
        for (i, dq) in dqueries.into_iter().enumerate() {
            let Some(bank_cache) = &cache.banks[i] else {
                continue;
            };
            retrieve_backward(
                queries[i],
                values,
                grads,
                self.banks[i],
                bank_cache,
                &dps,
                l_h,
                n_mem,
                d,
                dq,
            );
        }

        // spatial views feed back into E_t / E_f
        let mut d_a_t = vec![T::zero(); l_h * l_h];
        let w_st = &values[self.gcn_time.offset..self.gcn_time.offset + self.gcn_time.len];
        gcn_backward(
            &cache.a_t,
            &cache.e_t,
            w_st,
            &cache.h_t,
            &cache.st_pre,
            &d_e_st,
            l_h,
            d,
            grad_split(grads, self.gcn_time),
            &mut d_a_t,
            &mut d_e_t,
        );
        let mut d_a_f = vec![T::zero(); l_h * l_h];
        let w_sf = &values[self.gcn_freq.offset..self.gcn_freq.offset + self.gcn_freq.len];
        gcn_backward(
            &cache.a_f,
            &cache.e_f,
            w_sf,
            &cache.h_f,
            &cache.sf_pre,
            &d_e_sf,
            l_h,
            d,
            grad_split(grads, self.gcn_freq),
            &mut d_a_f,
            &mut d_e_f,
        );

        adjacency_backward(&cache.g_t, &cache.a_t, &cache.e_t, &d_a_t, l_h, d, &mut d_e_t);
        adjacency_backward(&cache.g_f, &cache.a_f, &cache.e_f, &d_a_f, l_h, d, &mut d_e_f);

        // frequency path back to s_h
        let d_mag = self.freq_lin.backward(values, grads, &cache.mag, &d_e_f, l_h);
        let n_b = cache.n_b;
        let n_s = cache.n_s;
        let bins = fft::rfft_bins(n_b);
        let mut d_s_h = vec![T::zero(); l_h * d];
        let mut g = vec![Complex::new(T::zero(), T::zero()); n_b];
        for s in 0..n_s {
            for c in 0..d {
                for z in g.iter_mut() {
                    *z = Complex::new(T::zero(), T::zero());
                }
                let mut any = false;
                for k in 0..bins {
                    let z = cache.spectra[(s * d + c) * bins + k];
                    let r = z.norm();
                    if r > T::zero() {
                        let u = d_mag[(k * n_s + s) * d + c];
                        if u != T::zero() {
                            // d|z|/dz as a complex pair, conjugated for the
                            // transpose-DFT trick below
                            let gr = u * z.re / r;
                            let gi = u * z.im / r;
                            g[k] = Complex::new(gr, -gi);
                            any = true;
                        }
                    }
                }
                if any {
                    // dL/dx_t = Re(DFT(conj(g))_t)
                    fft::fft(&mut g);
                    for b in 0..n_b {
                        d_s_h[(b * n_s + s) * d + c] += g[b].re;
                    }
                }
            }
        }

        // time path back to s_h
        let d_from_attn =
            self.query_attn
                .backward(values, grads, s_h, &cache.attn, &d_e_t);
        add_assign(&mut d_s_h, &d_from_attn);
        d_s_h
    }
}

fn grad_split<T: Scalar>(grads: &mut [T], id: ParamId) -> &mut [T] {
    grad(grads, id)
}

/// A = softmax(relu(E E^T)) row-wise; returns (pre-relu logits, A).
fn adjacency<T: Scalar>(e: &[T], l_h: usize, d: usize) -> (Vec<T>, Vec<T>) {
    let mut g = vec![T::zero(); l_h * l_h];
    matmul_bt(e, e, l_h, d, l_h, &mut g);
    let mut a = g.clone();
    for v in a.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    softmax_rows(&mut a, l_h, l_h);
    (g, a)
}

fn adjacency_backward<T: Scalar>(
    g_pre: &[T],
    a: &[T],
    e: &[T],
    d_a: &[T],
    l_h: usize,
    d: usize,
    d_e: &mut [T],
) {
    let mut d_relu = vec![T::zero(); l_h * l_h];
    softmax_rows_backward(a, d_a, l_h, l_h, &mut d_relu);
    let mut d_g = vec![T::zero(); l_h * l_h];
    relu_backward(g_pre, &d_relu, &mut d_g);
    // G = E E^T: dE += (dG + dG^T) E
    let mut d_g_sym = vec![T::zero(); l_h * l_h];
    for i in 0..l_h {
        for j in 0..l_h {
            d_g_sym[i * l_h + j] = d_g[i * l_h + j] + d_g[j * l_h + i];
        }
    }
    matmul_acc(&d_g_sym, e, l_h, l_h, d, d_e);
}

/// E_s = relu(A E W); returns (H = A E, pre-activation, E_s).
fn gcn_forward<T: Scalar>(
    a: &[T],
    e: &[T],
    w: &[T],
    l_h: usize,
    d: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut h = vec![T::zero(); l_h * d];
    matmul(a, e, l_h, l_h, d, &mut h);
    let mut pre = vec![T::zero(); l_h * d];
    matmul(&h, w, l_h, d, d, &mut pre);
    let mut out = pre.clone();
    for v in out.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    (h, pre, out)
}

#[allow(clippy::too_many_arguments)]
fn gcn_backward<T: Scalar>(
    a: &[T],
    e: &[T],
    w: &[T],
    h: &[T],
    pre: &[T],
    d_out: &[T],
    l_h: usize,
    d: usize,
    d_w: &mut [T],
    d_a: &mut [T],
    d_e: &mut [T],
) {
    let mut d_pre = vec![T::zero(); l_h * d];
    relu_backward(pre, d_out, &mut d_pre);
    matmul_at_b_acc(h, &d_pre, l_h, d, d, d_w);
    // dH = d_pre W^T
    let mut d_h = vec![T::zero(); l_h * d];
    matmul_bt(&d_pre, w, l_h, d, d, &mut d_h);
    // dA += dH E^T ; dE += A^T dH
    matmul_bt(&d_h, e, l_h, d, l_h, d_a);
    matmul_at_b_acc(a, &d_h, l_h, l_h, d, d_e);
}

fn retrieve<T: Scalar>(
    q: &[T],
    keys: &[T],
    vals: &[T],
    l_h: usize,
    n_mem: usize,
    d: usize,
) -> BankCache<T> {
    let mut alpha = vec![T::zero(); l_h * n_mem];
    matmul_bt(q, keys, l_h, d, n_mem, &mut alpha);
    softmax_rows(&mut alpha, l_h, n_mem);
    let mut prompt = vec![T::zero(); l_h * d];
    matmul(&alpha, vals, l_h, n_mem, d, &mut prompt);
    BankCache { alpha, prompt }
}

#[allow(clippy::too_many_arguments)]
fn retrieve_backward<T: Scalar>(
    q: &[T],
    values: &[T],
    grads: &mut [T],
    bank: MemoryBank,
    cache: &BankCache<T>,
    d_prompt: &[T],
    l_h: usize,
    n_mem: usize,
    d: usize,
    d_q: &mut [T],
) {
    let keys = &values[bank.keys.offset..bank.keys.offset + bank.keys.len];
    let vals = &values[bank.values.offset..bank.values.offset + bank.values.len];

    // dV += alpha^T dP
    matmul_at_b_acc(&cache.alpha, d_prompt, l_h, n_mem, d, grad(grads, bank.values));
    // dalpha = dP V^T
    let mut d_alpha = vec![T::zero(); l_h * n_mem];
    matmul_bt(d_prompt, vals, l_h, d, n_mem, &mut d_alpha);
    let mut d_logits = vec![T::zero(); l_h * n_mem];
    softmax_rows_backward(&cache.alpha, &d_alpha, l_h, n_mem, &mut d_logits);
    // logits = Q K^T
    matmul_acc(&d_logits, keys, l_h, n_mem, d, d_q);
    matmul_at_b_acc(&d_logits, q, l_h, n_mem, d, grad(grads, bank.keys));
}

/// Adds prompts to an assembled decoder input: each history row gets its own
/// prompt, each future row the mean prompt.
pub fn augment<T: Scalar>(z_d: &mut [T], cache: &MraCache<T>, d: usize, total_rows: usize) {
    let l_h = cache.l_h;
    for i in 0..l_h {
        axpy(
            &mut z_d[i * d..(i + 1) * d],
            T::one(),
            &cache.prompt_sum[i * d..(i + 1) * d],
        );
    }
    for i in l_h..total_rows {
        axpy(&mut z_d[i * d..(i + 1) * d], T::one(), &cache.mean_prompt);
    }
}
