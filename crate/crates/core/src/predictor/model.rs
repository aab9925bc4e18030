//! Bidirectional LSTM with additive attention, forward and backward passes.
//!
//! Padding positions are masked: the recurrences skip them and they receive
//! zero attention.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::PAD;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("sequence has no attendable position")]
    AllPad,
    #[error("token index {index} out of range for vocabulary of {vocab}")]
    BadIndex { index: u32, vocab: usize },
    #[error("sequence length {len} exceeds the model length {max}")]
    TooLong { len: usize, max: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("tensor {name} has shape {got:?}, expected {want:?}")]
    Shape { name: String, got: Vec<usize>, want: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub attn: usize,
    pub max_len: usize,
}

/// Tokens the classifier sees; longer sequences are truncated.
pub const MAX_LEN: usize = 128;

impl Dims {
    pub fn new(vocab: usize) -> Self {
        Dims { vocab, embed: 32, hidden: 32, attn: 32, max_len: MAX_LEN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    fn uniform<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(|_| rng.random_range(-scale..=scale)).collect() }
    }

    fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }
}

/// Gate order everywhere is input, forget, output, candidate.
pub const GATES: [&str; 4] = ["i", "f", "o", "g"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// H×E input weights.
    pub w: [Tensor; 4],
    /// H×H recurrent weights.
    pub u: [Tensor; 4],
    pub b: [Tensor; 4],
}

impl LstmParams {
    fn zeros(e: usize, h: usize) -> Self {
        LstmParams {
            w: std::array::from_fn(|_| Tensor::zeros(&[h, e])),
            u: std::array::from_fn(|_| Tensor::zeros(&[h, h])),
            b: std::array::from_fn(|_| Tensor::zeros(&[h])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: Dims,
    /// |V|×E.
    pub embedding: Tensor,
    pub forward: LstmParams,
    pub backward: LstmParams,
    /// A×2H.
    pub w_a: Tensor,
    pub b_a: Tensor,
    pub v: Tensor,
    /// 2H.
    pub w_c: Tensor,
    pub b_c: Tensor,
}

impl ModelParams {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { vocab, embed: e, hidden: h, attn: a, .. } = dims;
        ModelParams {
            dims,
            embedding: Tensor::zeros(&[vocab, e]),
            forward: LstmParams::zeros(e, h),
            backward: LstmParams::zeros(e, h),
            w_a: Tensor::zeros(&[a, 2 * h]),
            b_a: Tensor::zeros(&[a]),
            v: Tensor::zeros(&[a]),
            w_c: Tensor::zeros(&[2 * h]),
            b_c: Tensor::zeros(&[1]),
        }
    }

    pub fn init<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        let Dims { vocab, embed: e, hidden: h, attn: a, .. } = dims;
        let lstm = |rng: &mut R| {
            let mut p = LstmParams {
                w: std::array::from_fn(|_| Tensor::uniform(&[h, e], 1.0 / (e as f64).sqrt(), rng)),
                u: std::array::from_fn(|_| Tensor::uniform(&[h, h], 1.0 / (h as f64).sqrt(), rng)),
                b: std::array::from_fn(|_| Tensor::zeros(&[h])),
            };
            p.b[1].data.fill(1.0);
            p
        };
        let forward = lstm(rng);
        let backward = lstm(rng);
        ModelParams {
            dims,
            embedding: Tensor::uniform(&[vocab, e], 0.5, rng),
            forward,
            backward,
            w_a: Tensor::uniform(&[a, 2 * h], 1.0 / (2.0 * h as f64).sqrt(), rng),
            b_a: Tensor::zeros(&[a]),
            v: Tensor::uniform(&[a], 1.0 / (a as f64).sqrt(), rng),
            w_c: Tensor::uniform(&[2 * h], 1.0 / (2.0 * h as f64).sqrt(), rng),
            b_c: Tensor::zeros(&[1]),
        }
    }

    /// Every tensor with its name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (dir, p) in [("fwd", &self.forward), ("bwd", &self.backward)] {
            for (k, g) in GATES.iter().enumerate() {
                out.push((format!("{dir}.W_{g}"), &p.w[k]));
                out.push((format!("{dir}.U_{g}"), &p.u[k]));
                out.push((format!("{dir}.b_{g}"), &p.b[k]));
            }
        }
        out.extend([
            ("W_a".to_string(), &self.w_a),
            ("b_a".to_string(), &self.b_a),
            ("v".to_string(), &self.v),
            ("w_c".to_string(), &self.w_c),
            ("b_c".to_string(), &self.b_c),
        ]);
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        for p in [&mut self.forward, &mut self.backward] {
            for ((w, u), b) in p.w.iter_mut().zip(p.u.iter_mut()).zip(p.b.iter_mut()) {
                out.extend([w, u, b]);
            }
        }
        out.extend([&mut self.w_a, &mut self.b_a, &mut self.v, &mut self.w_c, &mut self.b_c]);
        out
    }

    /// Checks every shape against `dims` and every value for finiteness.
    pub fn validate(&self) -> Result<(), ModelError> {
        let want = ModelParams::zeros(self.dims);
        for ((name, t), (_, w)) in self.tensors().into_iter().zip(want.tensors()) {
            if t.shape != w.shape || t.data.len() != w.data.len() {
                return Err(ModelError::Shape { name, got: t.shape.clone(), want: w.shape.clone() });
            }
            if !t.data.iter().all(|x| x.is_finite()) {
                return Err(ModelError::NonFinite("parameters"));
            }
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// Per-direction activations, indexed by compact position.
#[derive(Debug, Clone)]
struct DirCache {
    /// n × 4H, post-activation.
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Original positions of the non-PAD tokens.
    positions: Vec<usize>,
    indices: Vec<u32>,
    x: Vec<f64>,
    fwd: DirCache,
    bwd: DirCache,
    /// n × 2H concatenated states.
    states: Vec<f64>,
    /// n × A attention projections after tanh.
    u: Vec<f64>,
    alpha: Vec<f64>,
    context: Vec<f64>,
    logit: f64,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub probability: f64,
    /// One weight per input position; zero at PAD.
    pub attention: Vec<f64>,
    pub cache: ForwardCache,
}

fn run_direction(p: &LstmParams, x: &[f64], n: usize, e: usize, h: usize, reverse: bool) -> DirCache {
    let mut gates = vec![0.0; n * 4 * h];
    let mut c = vec![0.0; n * h];
    let mut hs = vec![0.0; n * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for s in 0..n {
        let t = if reverse { n - 1 - s } else { s };
        let xt = &x[t * e..(t + 1) * e];
        let g = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..4 {
            for j in 0..h {
                let a = p.b[k].data[j] + dot(p.w[k].row(j), xt) + dot(p.u[k].row(j), &h_prev);
                g[k * h + j] = if k == 3 { a.tanh() } else { sigmoid(a) };
            }
        }
        for j in 0..h {
            let (i, f, o, gg) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let cc = f * c_prev[j] + i * gg;
            c[t * h + j] = cc;
            hs[t * h + j] = o * cc.tanh();
        }
        h_prev.copy_from_slice(&hs[t * h..(t + 1) * h]);
        c_prev.copy_from_slice(&c[t * h..(t + 1) * h]);
    }
    DirCache { gates, c, h: hs }
}

pub fn forward(params: &ModelParams, seq: &[u32]) -> Result<Forward, ModelError> {
    let Dims { vocab, embed: e, hidden: h, attn: a, max_len } = params.dims;
    if seq.len() > max_len {
        return Err(ModelError::TooLong { len: seq.len(), max: max_len });
    }
    if let Some(&index) = seq.iter().find(|&&i| i as usize >= vocab) {
        return Err(ModelError::BadIndex { index, vocab });
    }
    let positions: Vec<usize> = (0..seq.len()).filter(|&t| seq[t] != PAD).collect();
    let n = positions.len();
    if n == 0 {
        return Err(ModelError::AllPad);
    }
    let indices: Vec<u32> = positions.iter().map(|&t| seq[t]).collect();
    let x: Vec<f64> = indices.iter().flat_map(|&i| params.embedding.row(i as usize).iter().copied()).collect();
    let fwd = run_direction(&params.forward, &x, n, e, h, false);
    let bwd = run_direction(&params.backward, &x, n, e, h, true);

    let mut states = vec![0.0; n * 2 * h];
    for t in 0..n {
        states[t * 2 * h..t * 2 * h + h].copy_from_slice(&fwd.h[t * h..(t + 1) * h]);
        states[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&bwd.h[t * h..(t + 1) * h]);
    }
    let mut u = vec![0.0; n * a];
    let mut scores = vec![0.0; n];
    for t in 0..n {
        let st = &states[t * 2 * h..(t + 1) * 2 * h];
        for r in 0..a {
            u[t * a + r] = (params.b_a.data[r] + dot(params.w_a.row(r), st)).tanh();
        }
        scores[t] = dot(&params.v.data, &u[t * a..(t + 1) * a]);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(ModelError::NonFinite("attention scores"));
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let alpha: Vec<f64> = exps.iter().map(|x| x / total).collect();
    let mut context = vec![0.0; 2 * h];
    for t in 0..n {
        axpy(&mut context, alpha[t], &states[t * 2 * h..(t + 1) * 2 * h]);
    }
    let logit = params.b_c.data[0] + dot(&params.w_c.data, &context);
    if !logit.is_finite() {
        return Err(ModelError::NonFinite("logit"));
    }
    let mut attention = vec![0.0; seq.len()];
    for (k, &t) in positions.iter().enumerate() {
        attention[t] = alpha[k];
    }
    Ok(Forward {
        probability: sigmoid(logit),
        attention,
        cache: ForwardCache { positions, indices, x, fwd, bwd, states, u, alpha, context, logit },
    })
}

/// Weighted cross-entropy of one sample and its derivative in the logit.
fn sample_loss(logit: f64, label: bool, w_pos: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    if label {
        (w_pos * softplus(-logit), -w_pos * (1.0 - p))
    } else {
        (softplus(logit), p)
    }
}

fn backprop_direction(
    p: &LstmParams,
    g: &mut LstmParams,
    cache: &DirCache,
    x: &[f64],
    dh_ext: &[f64],
    dx: &mut [f64],
    dims: (usize, usize, usize),
    reverse: bool,
) {
    let (n, e, h) = dims;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let zeros = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    for s in (0..n).rev() {
        let t = if reverse { n - 1 - s } else { s };
        let prev = if s == 0 { None } else { Some(if reverse { t + 1 } else { t - 1 }) };
        let (h_prev, c_prev) = match prev {
            Some(tp) => (&cache.h[tp * h..(tp + 1) * h], &cache.c[tp * h..(tp + 1) * h]),
            None => (&zeros[..], &zeros[..]),
        };
        let gt = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for j in 0..h {
            let (i, f, o, gg) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
            let dh = dh_ext[t * h + j] + dh_next[j];
            let tc = cache.c[t * h + j].tanh();
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dc_next[j] = dc * f;
            da[j] = dc * gg * i * (1.0 - i);
            da[h + j] = dc * c_prev[j] * f * (1.0 - f);
            da[2 * h + j] = dh * tc * o * (1.0 - o);
            da[3 * h + j] = dc * i * (1.0 - gg * gg);
        }
        dh_next.fill(0.0);
        let xt = &x[t * e..(t + 1) * e];
        let dxt = &mut dx[t * e..(t + 1) * e];
        for k in 0..4 {
            for j in 0..h {
                let d = da[k * h + j];
                g.b[k].data[j] += d;
                axpy(&mut g.w[k].data[j * e..(j + 1) * e], d, xt);
                axpy(&mut g.u[k].data[j * h..(j + 1) * h], d, h_prev);
                axpy(dxt, d, p.w[k].row(j));
                axpy(&mut dh_next, d, p.u[k].row(j));
            }
        }
    }
}

/// Accumulates the gradient of `scale * loss(sample)` into `grads`.
fn backward(params: &ModelParams, cache: &ForwardCache, dlogit: f64, grads: &mut ModelParams) {
    let Dims { embed: e, hidden: h, attn: a, .. } = params.dims;
    let n = cache.positions.len();
    let h2 = 2 * h;
    grads.b_c.data[0] += dlogit;
    axpy(&mut grads.w_c.data, dlogit, &cache.context);
    let dctx: Vec<f64> = params.w_c.data.iter().map(|w| w * dlogit).collect();

    let dalpha: Vec<f64> = (0..n).map(|t| dot(&dctx, &cache.states[t * h2..(t + 1) * h2])).collect();
    let mean = dot(&cache.alpha, &dalpha);
    let mut dstates = vec![0.0; n * h2];
    for t in 0..n {
        let ds = &mut dstates[t * h2..(t + 1) * h2];
        axpy(ds, cache.alpha[t], &dctx);
        let de = cache.alpha[t] * (dalpha[t] - mean);
        let ut = &cache.u[t * a..(t + 1) * a];
        axpy(&mut grads.v.data, de, ut);
        let st = &cache.states[t * h2..(t + 1) * h2];
        for r in 0..a {
            let d = de * params.v.data[r] * (1.0 - ut[r] * ut[r]);
            grads.b_a.data[r] += d;
            axpy(&mut grads.w_a.data[r * h2..(r + 1) * h2], d, st);
            axpy(ds, d, params.w_a.row(r));
        }
    }

    let mut dh_f = vec![0.0; n * h];
    let mut dh_b = vec![0.0; n * h];
    for t in 0..n {
        dh_f[t * h..(t + 1) * h].copy_from_slice(&dstates[t * h2..t * h2 + h]);
        dh_b[t * h..(t + 1) * h].copy_from_slice(&dstates[t * h2 + h..(t + 1) * h2]);
    }
    let mut dx = vec![0.0; n * e];
    backprop_direction(&params.forward, &mut grads.forward, &cache.fwd, &cache.x, &dh_f, &mut dx, (n, e, h), false);
    backprop_direction(&params.backward, &mut grads.backward, &cache.bwd, &cache.x, &dh_b, &mut dx, (n, e, h), true);
    for (t, &idx) in cache.indices.iter().enumerate() {
        let i = idx as usize;
        axpy(&mut grads.embedding.data[i * e..(i + 1) * e], 1.0, &dx[t * e..(t + 1) * e]);
    }
}

/// Mean weighted cross-entropy over `batch` and its gradient for every
/// parameter tensor.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[(Vec<u32>, bool)],
    class_weight_pos: f64,
) -> Result<(f64, ModelParams), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut grads = ModelParams::zeros(params.dims);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (seq, label) in batch {
        let f = forward(params, seq)?;
        let (l, dlogit) = sample_loss(f.cache.logit, *label, class_weight_pos);
        loss += l * scale;
        backward(params, &f.cache, dlogit * scale, &mut grads);
    }
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("loss"));
    }
    Ok((loss, grads))
}
