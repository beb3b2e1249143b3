use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::audio::{StackedFeatures, STACKED_DIM};
use crate::error::{Error, Result};
use crate::seed::Rng;

use super::DVector;

/// Layer sizes. `full()` is the large model, `desk()` the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub projection: usize,
    pub layers: usize,
    pub embedding_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    pub fn full() -> Self {
        Self {
            input_dim: STACKED_DIM,
            hidden: 768,
            projection: 256,
            layers: 3,
            embedding_dim: 256,
        }
    }

    pub fn desk() -> Self {
        Self {
            input_dim: STACKED_DIM,
            hidden: 128,
            projection: 64,
            layers: 3,
            embedding_dim: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.hidden == 0
            || self.projection == 0
            || self.layers == 0
            || self.embedding_dim == 0
        {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.projection
        }
    }
}

/// One LSTM layer with a tanh projection. Gate blocks are ordered
/// input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `4H x in`
    pub w: Array2<f64>,
    /// `4H x P`, applied to the previous projected output
    pub r: Array2<f64>,
    /// `4H`
    pub b: Array1<f64>,
    /// `P x H`
    pub wp: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layers: Vec<LstmLayer>,
    /// `E x P`
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
    pub ge2e_w: f64,
    pub ge2e_b: f64,
}

pub const GE2E_W_INIT: f64 = 10.0;
pub const GE2E_B_INIT: f64 = -5.0;
pub const GE2E_W_MIN: f64 = 1e-6;

fn uniform(rng: &mut Rng, rows: usize, cols: usize, k: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-k..=k))
}

impl ModelParams {
    /// Weights `U[-k, k]` with `k = 1/sqrt(fan_in)` per matrix, biases zero,
    /// GE2E scale 10 and bias -5.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (h, p) = (config.hidden, config.projection);
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let input = config.layer_input_dim(l);
            let w = uniform(rng, 4 * h, input, fan(input));
            let r = uniform(rng, 4 * h, p, fan(p));
            let wp = uniform(rng, p, h, fan(h));
            layers.push(LstmLayer {
                w,
                r,
                b: Array1::zeros(4 * h),
                wp,
            });
        }
        let out_w = uniform(rng, config.embedding_dim, p, fan(p));
        let out_b = Array1::zeros(config.embedding_dim);
        Ok(Self {
            config,
            layers,
            out_w,
            out_b,
            ge2e_w: GE2E_W_INIT,
            ge2e_b: GE2E_B_INIT,
        })
    }

    /// All-zero tensors with this model's shapes; used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| LstmLayer {
                w: Array2::zeros(l.w.raw_dim()),
                r: Array2::zeros(l.r.raw_dim()),
                b: Array1::zeros(l.b.raw_dim()),
                wp: Array2::zeros(l.wp.raw_dim()),
            })
            .collect();
        Self {
            config: self.config,
            layers,
            out_w: Array2::zeros(self.out_w.raw_dim()),
            out_b: Array1::zeros(self.out_b.raw_dim()),
            ge2e_w: 0.0,
            ge2e_b: 0.0,
        }
    }

    /// Network tensors in checkpoint order: per layer `w, r, b, wp`, then
    /// `out_w, out_b`. The GE2E scalars are not included.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            v.push(l.w.as_slice().expect("standard layout"));
            v.push(l.r.as_slice().expect("standard layout"));
            v.push(l.b.as_slice().expect("standard layout"));
            v.push(l.wp.as_slice().expect("standard layout"));
        }
        v.push(self.out_w.as_slice().expect("standard layout"));
        v.push(self.out_b.as_slice().expect("standard layout"));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            v.push(l.w.as_slice_mut().expect("standard layout"));
            v.push(l.r.as_slice_mut().expect("standard layout"));
            v.push(l.b.as_slice_mut().expect("standard layout"));
            v.push(l.wp.as_slice_mut().expect("standard layout"));
        }
        v.push(self.out_w.as_slice_mut().expect("standard layout"));
        v.push(self.out_b.as_slice_mut().expect("standard layout"));
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum::<usize>() + 2
    }

    /// `self += alpha * other`, including the GE2E scalars.
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
        self.ge2e_w += alpha * other.ge2e_w;
        self.ge2e_b += alpha * other.ge2e_b;
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= alpha);
        }
        self.ge2e_w *= alpha;
        self.ge2e_b *= alpha;
    }

    pub fn norm_sq(&self) -> f64 {
        let t: f64 = self
            .tensors()
            .iter()
            .map(|t| t.iter().map(|x| x * x).sum::<f64>())
            .sum();
        t + self.ge2e_w * self.ge2e_w + self.ge2e_b * self.ge2e_b
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
            && self.ge2e_w.is_finite()
            && self.ge2e_b.is_finite()
    }

    /// Embeds one stacked sequence.
    pub fn embed(&self, features: &StackedFeatures) -> Result<DVector> {
        let batch = SequenceBatch::from_sequences(&[features.frames.view()], self.config.input_dim)?;
        let (emb, _) = forward(self, &batch, false)?;
        Ok(DVector::from_raw(emb.row(0).to_vec()))
    }
}

/// `B` sequences laid out time-major: row `t * B + b` holds frame `t` of
/// sequence `b`. Shorter sequences are zero padded; their output is read
/// at their own last frame.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub data: Array2<f64>,
    pub lengths: Vec<usize>,
    pub max_len: usize,
}

impl SequenceBatch {
    pub fn from_sequences(seqs: &[ArrayView2<f64>], input_dim: usize) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::Parameter("empty sequence batch".into()));
        }
        let b = seqs.len();
        let max_len = seqs.iter().map(|s| s.nrows()).max().unwrap_or(0);
        for s in seqs {
            if s.nrows() == 0 {
                return Err(Error::TooShort("empty feature sequence".into()));
            }
            if s.ncols() != input_dim {
                return Err(Error::Parameter(format!(
                    "feature dimension {}, model expects {input_dim}",
                    s.ncols()
                )));
            }
        }
        let mut data = Array2::zeros((max_len * b, input_dim));
        for (j, s) in seqs.iter().enumerate() {
            for (t, row) in s.rows().into_iter().enumerate() {
                data.row_mut(t * b + j).assign(&row);
            }
        }
        Ok(Self {
            data,
            lengths: seqs.iter().map(|s| s.nrows()).collect(),
            max_len,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }
}

struct LayerCache {
    input: Array2<f64>,
    /// post-activation gates `[i f g o]`, `TB x 4H`
    gates: Array2<f64>,
    cell: Array2<f64>,
    tanh_cell: Array2<f64>,
    hidden: Array2<f64>,
    /// projected output, `TB x P`
    proj: Array2<f64>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    /// last-frame top-layer outputs, `B x P`
    last: Array2<f64>,
    /// pre-normalization embeddings, `B x E`
    raw: Array2<f64>,
    lengths: Vec<usize>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn layer_forward(layer: &LstmLayer, input: Array2<f64>, b: usize, t_len: usize) -> LayerCache {
    let h = layer.wp.ncols();
    let p = layer.wp.nrows();
    let rows = b * t_len;
    let mut gates = input.dot(&layer.w.t());
    gates += &layer.b;
    let mut cell = Array2::zeros((rows, h));
    let mut tanh_cell = Array2::zeros((rows, h));
    let mut hidden = Array2::zeros((rows, h));
    let mut proj = Array2::zeros((rows, p));

    for t in 0..t_len {
        let (lo, hi) = (t * b, (t + 1) * b);
        if t > 0 {
            let prev = proj.slice(s![lo - b..lo, ..]);
            let mut g = gates.slice_mut(s![lo..hi, ..]);
            general_mat_mul(1.0, &prev, &layer.r.t(), 1.0, &mut g);
        }
        for row in lo..hi {
            let mut g = gates.row_mut(row);
            let gs = g.as_slice_mut().expect("contiguous row");
            for v in &mut gs[..2 * h] {
                *v = sigmoid(*v);
            }
            for v in &mut gs[2 * h..3 * h] {
                *v = v.tanh();
            }
            for v in &mut gs[3 * h..] {
                *v = sigmoid(*v);
            }
            for k in 0..h {
                let c_prev = if t > 0 { cell[[row - b, k]] } else { 0.0 };
                let c = gs[h + k] * c_prev + gs[k] * gs[2 * h + k];
                let tc = c.tanh();
                cell[[row, k]] = c;
                tanh_cell[[row, k]] = tc;
                hidden[[row, k]] = gs[3 * h + k] * tc;
            }
        }
        let hid = hidden.slice(s![lo..hi, ..]);
        let mut pr = proj.slice_mut(s![lo..hi, ..]);
        general_mat_mul(1.0, &hid, &layer.wp.t(), 0.0, &mut pr);
        pr.mapv_inplace(f64::tanh);
    }
    LayerCache {
        input,
        gates,
        cell,
        tanh_cell,
        hidden,
        proj,
    }
}

/// Runs the network on a batch. Returns the pre-normalization embeddings
/// (`B x E`) and, if `keep_cache`, the activations for [`backward`].
pub fn forward(
    params: &ModelParams,
    batch: &SequenceBatch,
    keep_cache: bool,
) -> Result<(Array2<f64>, Option<ForwardCache>)> {
    let cfg = &params.config;
    if batch.data.ncols() != cfg.input_dim {
        return Err(Error::Parameter(format!(
            "feature dimension {}, model expects {}",
            batch.data.ncols(),
            cfg.input_dim
        )));
    }
    if batch.max_len == 0 {
        return Err(Error::TooShort("empty feature sequence".into()));
    }
    let b = batch.batch_size();
    let t_len = batch.max_len;
    let mut caches = Vec::with_capacity(params.layers.len());
    let mut input = batch.data.clone();
    for layer in &params.layers {
        let c = layer_forward(layer, input, b, t_len);
        input = c.proj.clone();
        if keep_cache {
            caches.push(c);
        }
    }
    let top = input;
    let mut last = Array2::zeros((b, cfg.projection));
    for (j, &len) in batch.lengths.iter().enumerate() {
        last.row_mut(j).assign(&top.row((len - 1) * b + j));
    }
    let mut raw = last.dot(&params.out_w.t());
    raw += &params.out_b;
    let cache = keep_cache.then(|| ForwardCache {
        layers: caches,
        last,
        raw: raw.clone(),
        lengths: batch.lengths.clone(),
    });
    Ok((raw, cache))
}

/// Row-wise L2 normalization with the zero-norm convention of [`DVector`].
pub fn normalize_rows(raw: &Array2<f64>) -> Array2<f64> {
    let mut out = raw.clone();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 && n.is_finite() {
            row /= n;
        } else {
            row.fill(0.0);
            row[0] = 1.0;
        }
    }
    out
}

/// Back-propagates `d_emb` (gradient w.r.t. the normalized embeddings) and
/// accumulates `scale * gradient` into `grads`. The GE2E scalars are left
/// alone.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    d_emb: &Array2<f64>,
    scale: f64,
    grads: &mut ModelParams,
) {
    let b = cache.lengths.len();
    let t_len = cache.layers[0].input.nrows() / b;

    // through the normalization: d raw = (g - e (e.g)) / |raw|
    let mut d_raw = Array2::zeros(cache.raw.raw_dim());
    for j in 0..b {
        let raw = cache.raw.row(j);
        let n = raw.dot(&raw).sqrt();
        if n > 0.0 && n.is_finite() {
            let e = &raw / n;
            let g = d_emb.row(j);
            let eg = e.dot(&g);
            d_raw.row_mut(j).assign(&((&g - &(&e * eg)) * (scale / n)));
        }
    }

    general_mat_mul(1.0, &d_raw.t(), &cache.last, 1.0, &mut grads.out_w);
    grads.out_b += &d_raw.sum_axis(Axis(0));
    let d_last = d_raw.dot(&params.out_w);

    let top_rows = cache.layers.last().map(|c| c.proj.nrows()).unwrap_or(0);
    let mut d_out = Array2::zeros((top_rows, params.config.projection));
    for (j, &len) in cache.lengths.iter().enumerate() {
        d_out.row_mut((len - 1) * b + j).assign(&d_last.row(j));
    }

    for (l, layer) in params.layers.iter().enumerate().rev() {
        d_out = layer_backward(layer, &cache.layers[l], d_out, b, t_len, &mut grads.layers[l], l > 0);
    }
}

/// Returns the gradient w.r.t. the layer input (empty if not needed).
fn layer_backward(
    layer: &LstmLayer,
    c: &LayerCache,
    d_out: Array2<f64>,
    b: usize,
    t_len: usize,
    g: &mut LstmLayer,
    need_input_grad: bool,
) -> Array2<f64> {
    let h = layer.wp.ncols();
    let p = layer.wp.nrows();
    let rows = b * t_len;
    let mut d_gates = Array2::<f64>::zeros((rows, 4 * h));
    let mut d_pre = Array2::<f64>::zeros((rows, p));
    let mut d_rec = Array2::<f64>::zeros((b, p));
    let mut d_cell_next = Array2::<f64>::zeros((b, h));

    for t in (0..t_len).rev() {
        let (lo, hi) = (t * b, (t + 1) * b);
        {
            let mut dp = d_pre.slice_mut(s![lo..hi, ..]);
            dp.assign(&d_out.slice(s![lo..hi, ..]));
            dp += &d_rec;
            let pr = c.proj.slice(s![lo..hi, ..]);
            dp.zip_mut_with(&pr, |d, &r| *d *= 1.0 - r * r);
        }
        let d_hidden = d_pre.slice(s![lo..hi, ..]).dot(&layer.wp);
        for j in 0..b {
            let row = lo + j;
            let gs = c.gates.row(row);
            let mut dg = d_gates.row_mut(row);
            for k in 0..h {
                let (i, f, gg, o) = (gs[k], gs[h + k], gs[2 * h + k], gs[3 * h + k]);
                let tc = c.tanh_cell[[row, k]];
                let dh = d_hidden[[j, k]];
                let dc = d_cell_next[[j, k]] + dh * o * (1.0 - tc * tc);
                let c_prev = if t > 0 { c.cell[[row - b, k]] } else { 0.0 };
                dg[k] = dc * gg * i * (1.0 - i);
                dg[h + k] = dc * c_prev * f * (1.0 - f);
                dg[2 * h + k] = dc * i * (1.0 - gg * gg);
                dg[3 * h + k] = dh * tc * o * (1.0 - o);
                d_cell_next[[j, k]] = dc * f;
            }
        }
        if t > 0 {
            let dg = d_gates.slice(s![lo..hi, ..]);
            general_mat_mul(1.0, &dg, &layer.r, 0.0, &mut d_rec);
        }
    }

    general_mat_mul(1.0, &d_gates.t(), &c.input, 1.0, &mut g.w);
    if t_len > 1 {
        let dg = d_gates.slice(s![b.., ..]);
        let prev = c.proj.slice(s![..rows - b, ..]);
        general_mat_mul(1.0, &dg.t(), &prev, 1.0, &mut g.r);
    }
    g.b += &d_gates.sum_axis(Axis(0));
    general_mat_mul(1.0, &d_pre.t(), &c.hidden, 1.0, &mut g.wp);

    if need_input_grad {
        d_gates.dot(&layer.w)
    } else {
        Array2::zeros((0, 0))
    }
}
