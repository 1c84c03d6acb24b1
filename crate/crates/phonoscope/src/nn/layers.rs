//! The layer set: dense, simple-RNN and LSTM cells (full backpropagation
//! through time), additive attention, 2-D convolution and max pooling, batch
//! normalization, and inverted dropout.
//!
//! Each layer owns its parameters and gradient accumulators and exposes an
//! explicit `forward` producing a cache consumed by `backward`. Gradient
//! accumulators grow by `+=` so one backward pass over a batch leaves the
//! total batch gradient; call `zero_grads` between optimizer steps.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{matmul, matmul_abt, matmul_atb};
use super::tensor::Tensor;
use super::{MapBatch, NnError, Result, SeqBatch};
use crate::util::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Tensor, // [in, out]
    pub b: Tensor, // [out]
    pub dw: Tensor,
    pub db: Tensor,
}

#[derive(Debug)]
pub struct DenseCache {
    input: Mat,
}

impl Dense {
    pub fn new(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Tensor::fan_in_init(&[n_in, n_out], n_in, rng),
            b: Tensor::zeros(&[n_out]),
            dw: Tensor::zeros(&[n_in, n_out]),
            db: Tensor::zeros(&[n_out]),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn n_out(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, DenseCache)> {
        if x.cols() != self.n_in() {
            return Err(NnError::Shape {
                layer: "Dense",
                detail: format!("input has {} features, weights expect {}", x.cols(), self.n_in()),
            });
        }
        let (b, n_out) = (x.rows(), self.n_out());
        let mut out = Mat::zeros(b, n_out);
        matmul(x.data(), self.w.data(), b, self.n_in(), n_out, out.data_mut());
        for r in 0..b {
            for (v, bias) in out.row_mut(r).iter_mut().zip(self.b.data()) {
                *v += bias;
            }
        }
        Ok((out, DenseCache { input: x.clone() }))
    }

    pub fn backward(&mut self, cache: &DenseCache, dy: &Mat) -> Mat {
        let (b, n_in, n_out) = (cache.input.rows(), self.n_in(), self.n_out());
        matmul_atb(cache.input.data(), dy.data(), b, n_in, n_out, self.dw.data_mut());
        for r in 0..b {
            for (g, &d) in self.db.data_mut().iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        let mut dx = Mat::zeros(b, n_in);
        matmul_abt(dy.data(), self.w.data(), b, n_out, n_in, dx.data_mut());
        dx
    }

    pub fn zero_grads(&mut self) {
        self.dw.fill(0.0);
        self.db.fill(0.0);
    }
}

// ---------------------------------------------------------------------------
// Simple RNN
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimpleRnn {
    pub wx: Tensor, // [F, H]
    pub wh: Tensor, // [H, H]
    pub b: Tensor,  // [H]
    pub dwx: Tensor,
    pub dwh: Tensor,
    pub db: Tensor,
}

pub struct SimpleRnnCache {
    /// hidden states, [T+1][B*H], index 0 is the zero initial state
    h: Vec<Vec<f64>>,
    b: usize,
    t: usize,
}

impl SimpleRnn {
    pub fn new(n_in: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            wx: Tensor::fan_in_init(&[n_in, hidden], n_in, rng),
            wh: Tensor::fan_in_init(&[hidden, hidden], hidden, rng),
            b: Tensor::zeros(&[hidden]),
            dwx: Tensor::zeros(&[n_in, hidden]),
            dwh: Tensor::zeros(&[hidden, hidden]),
            db: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.shape()[0]
    }

    pub fn n_in(&self) -> usize {
        self.wx.shape()[0]
    }

    /// Runs the cell over the whole batch; returns all hidden states as a
    /// `SeqBatch` of [B, T, H].
    pub fn forward(&self, x: &SeqBatch) -> Result<(SeqBatch, SimpleRnnCache)> {
        if x.f != self.n_in() {
            return Err(NnError::Shape {
                layer: "SimpleRNN",
                detail: format!("input feature dim {} vs expected {}", x.f, self.n_in()),
            });
        }
        let (b, t, h) = (x.b, x.t, self.hidden());
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(t + 1);
        states.push(vec![0.0; b * h]);
        let mut pre = vec![0.0; b * h];
        let mut scratch = vec![0.0; b * h];
        for step in 0..t {
            // pre = x_t * Wx + h_prev * Wh + b
            let xt: Vec<f64> = x.step(step).flatten().copied().collect();
            matmul(&xt, self.wx.data(), b, x.f, h, &mut pre);
            matmul(states[step].as_slice(), self.wh.data(), b, h, h, &mut scratch);
            let mut ht = vec![0.0; b * h];
            for i in 0..b * h {
                ht[i] = (pre[i] + scratch[i] + self.b.data()[i % h]).tanh();
            }
            states.push(ht);
        }
        let mut data = vec![0.0; b * t * h];
        for step in 0..t {
            for bi in 0..b {
                let src = &states[step + 1][bi * h..(bi + 1) * h];
                let at = (bi * t + step) * h;
                data[at..at + h].copy_from_slice(src);
            }
        }
        let out = SeqBatch::new(b, t, h, data, x.lengths.clone());
        Ok((out, SimpleRnnCache { h: states, b, t }))
    }

    /// Full BPTT. `dh_out` is the gradient w.r.t. every emitted hidden state
    /// ([B, T, H], zeros where the readout did not use a state). Returns the
    /// gradient w.r.t. the input sequence.
    pub fn backward(&mut self, x: &SeqBatch, cache: &SimpleRnnCache, dh_out: &SeqBatch) -> SeqBatch {
        let (b, t, h, f) = (cache.b, cache.t, self.hidden(), self.n_in());
        let mut dx = vec![0.0; b * t * f];
        let mut dh_next = vec![0.0; b * h];
        let mut dpre = vec![0.0; b * h];
        let mut dh_prev = vec![0.0; b * h];
        let mut dxt = vec![0.0; b * f];
        for step in (0..t).rev() {
            // dh = gradient from the readout at this step + carry from t+1
            for bi in 0..b {
                let from_out = dh_out.at(bi, step);
                for k in 0..h {
                    let ht = cache.h[step + 1][bi * h + k];
                    let dh = from_out[k] + dh_next[bi * h + k];
                    dpre[bi * h + k] = dh * (1.0 - ht * ht);
                }
            }
            let xt: Vec<f64> = x.step(step).flatten().copied().collect();
            matmul_atb(&xt, &dpre, b, f, h, self.dwx.data_mut());
            matmul_atb(&cache.h[step], &dpre, b, h, h, self.dwh.data_mut());
            for bi in 0..b {
                for k in 0..h {
                    self.db.data_mut()[k] += dpre[bi * h + k];
                }
            }
            matmul_abt(&dpre, self.wx.data(), b, h, f, &mut dxt);
            for bi in 0..b {
                let at = (bi * t + step) * f;
                for k in 0..f {
                    dx[at + k] = dxt[bi * f + k];
                }
            }
            matmul_abt(&dpre, self.wh.data(), b, h, h, &mut dh_prev);
            dh_next.copy_from_slice(&dh_prev);
        }
        SeqBatch::new(b, t, f, dx, x.lengths.clone())
    }

    pub fn zero_grads(&mut self) {
        self.dwx.fill(0.0);
        self.dwh.fill(0.0);
        self.db.fill(0.0);
    }
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Lstm {
    pub wx: Tensor, // [F, 4H], gate order i f g o
    pub wh: Tensor, // [H, 4H]
    pub b: Tensor,  // [4H]
    pub dwx: Tensor,
    pub dwh: Tensor,
    pub db: Tensor,
}

pub struct LstmCache {
    h: Vec<Vec<f64>>,      // [T+1][B*H]
    c: Vec<Vec<f64>>,      // [T+1][B*H]
    gates: Vec<Vec<f64>>,  // [T][B*4H], activated i f g o
    tanh_c: Vec<Vec<f64>>, // [T][B*H]
    b: usize,
    t: usize,
}

impl Lstm {
    pub fn new(n_in: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut b = Tensor::zeros(&[4 * hidden]);
        // forget-gate bias starts at +1 so early training retains memory
        for v in b.data_mut()[hidden..2 * hidden].iter_mut() {
            *v = 1.0;
        }
        Self {
            wx: Tensor::fan_in_init(&[n_in, 4 * hidden], n_in, rng),
            wh: Tensor::fan_in_init(&[hidden, 4 * hidden], hidden, rng),
            b,
            dwx: Tensor::zeros(&[n_in, 4 * hidden]),
            dwh: Tensor::zeros(&[hidden, 4 * hidden]),
            db: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.shape()[0]
    }

    pub fn n_in(&self) -> usize {
        self.wx.shape()[0]
    }

    pub fn forward(&self, x: &SeqBatch) -> Result<(SeqBatch, LstmCache)> {
        if x.f != self.n_in() {
            return Err(NnError::Shape {
                layer: "LSTM",
                detail: format!("input feature dim {} vs expected {}", x.f, self.n_in()),
            });
        }
        let (b, t, h) = (x.b, x.t, self.hidden());
        let g4 = 4 * h;
        let mut hs: Vec<Vec<f64>> = vec![vec![0.0; b * h]];
        let mut cs: Vec<Vec<f64>> = vec![vec![0.0; b * h]];
        let mut gates_all = Vec::with_capacity(t);
        let mut tanh_all = Vec::with_capacity(t);
        let mut pre_x = vec![0.0; b * g4];
        let mut pre_h = vec![0.0; b * g4];
        for step in 0..t {
            let xt: Vec<f64> = x.step(step).flatten().copied().collect();
            matmul(&xt, self.wx.data(), b, x.f, g4, &mut pre_x);
            matmul(hs[step].as_slice(), self.wh.data(), b, h, g4, &mut pre_h);
            let mut gates = vec![0.0; b * g4];
            let mut ct = vec![0.0; b * h];
            let mut ht = vec![0.0; b * h];
            let mut tanh_c = vec![0.0; b * h];
            for bi in 0..b {
                for k in 0..h {
                    let at = bi * g4;
                    let pre =
                        |slot: usize| pre_x[at + slot] + pre_h[at + slot] + self.b.data()[slot];
                    let i = sigmoid(pre(k));
                    let f = sigmoid(pre(h + k));
                    let g = pre(2 * h + k).tanh();
                    let o = sigmoid(pre(3 * h + k));
                    gates[at + k] = i;
                    gates[at + h + k] = f;
                    gates[at + 2 * h + k] = g;
                    gates[at + 3 * h + k] = o;
                    let c = f * cs[step][bi * h + k] + i * g;
                    let tc = c.tanh();
                    ct[bi * h + k] = c;
                    tanh_c[bi * h + k] = tc;
                    ht[bi * h + k] = o * tc;
                }
            }
            hs.push(ht);
            cs.push(ct);
            gates_all.push(gates);
            tanh_all.push(tanh_c);
        }
        let mut data = vec![0.0; b * t * h];
        for step in 0..t {
            for bi in 0..b {
                let src = &hs[step + 1][bi * h..(bi + 1) * h];
                let at = (bi * t + step) * h;
                data[at..at + h].copy_from_slice(src);
            }
        }
        let out = SeqBatch::new(b, t, h, data, x.lengths.clone());
        Ok((out, LstmCache { h: hs, c: cs, gates: gates_all, tanh_c: tanh_all, b, t }))
    }

    pub fn backward(&mut self, x: &SeqBatch, cache: &LstmCache, dh_out: &SeqBatch) -> SeqBatch {
        let (b, t, h, f) = (cache.b, cache.t, self.hidden(), self.n_in());
        let g4 = 4 * h;
        let mut dx = vec![0.0; b * t * f];
        let mut dh_next = vec![0.0; b * h];
        let mut dc_next = vec![0.0; b * h];
        let mut dpre = vec![0.0; b * g4];
        let mut dxt = vec![0.0; b * f];
        let mut dh_prev = vec![0.0; b * h];
        for step in (0..t).rev() {
            let gates = &cache.gates[step];
            let tanh_c = &cache.tanh_c[step];
            for bi in 0..b {
                let at = bi * g4;
                for k in 0..h {
                    let dh = dh_out.at(bi, step)[k] + dh_next[bi * h + k];
                    let i = gates[at + k];
                    let fg = gates[at + h + k];
                    let g = gates[at + 2 * h + k];
                    let o = gates[at + 3 * h + k];
                    let tc = tanh_c[bi * h + k];
                    let mut dc = dc_next[bi * h + k] + dh * o * (1.0 - tc * tc);
                    let c_prev = cache.c[step][bi * h + k];
                    dpre[at + k] = dc * g * i * (1.0 - i);
                    dpre[at + h + k] = dc * c_prev * fg * (1.0 - fg);
                    dpre[at + 2 * h + k] = dc * i * (1.0 - g * g);
                    dpre[at + 3 * h + k] = dh * tc * o * (1.0 - o);
                    dc *= fg;
                    dc_next[bi * h + k] = dc;
                }
            }
            let xt: Vec<f64> = x.step(step).flatten().copied().collect();
            matmul_atb(&xt, &dpre, b, f, g4, self.dwx.data_mut());
            matmul_atb(&cache.h[step], &dpre, b, h, g4, self.dwh.data_mut());
            for bi in 0..b {
                for k in 0..g4 {
                    self.db.data_mut()[k] += dpre[bi * g4 + k];
                }
            }
            matmul_abt(&dpre, self.wx.data(), b, g4, f, &mut dxt);
            for bi in 0..b {
                let at = (bi * t + step) * f;
                dx[at..at + f].copy_from_slice(&dxt[bi * f..(bi + 1) * f]);
            }
            matmul_abt(&dpre, self.wh.data(), b, g4, h, &mut dh_prev);
            dh_next.copy_from_slice(&dh_prev);
        }
        SeqBatch::new(b, t, f, dx, x.lengths.clone())
    }

    pub fn zero_grads(&mut self) {
        self.dwx.fill(0.0);
        self.dwh.fill(0.0);
        self.db.fill(0.0);
    }
}

// ---------------------------------------------------------------------------
// Additive attention pooling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AdditiveAttention {
    pub w: Tensor, // [H, A]
    pub b: Tensor, // [A]
    pub v: Tensor, // [A]
    pub dw: Tensor,
    pub db: Tensor,
    pub dv: Tensor,
}

pub struct AttentionCache {
    hidden: SeqBatch,
    u: Vec<f64>,       // [B*T*A] tanh pre-activations
    weights: Mat,      // [B, T] softmax weights (0 on padding)
}

impl AdditiveAttention {
    pub fn new(hidden: usize, attn: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Tensor::fan_in_init(&[hidden, attn], hidden, rng),
            b: Tensor::zeros(&[attn]),
            v: Tensor::fan_in_init(&[attn], attn, rng),
            dw: Tensor::zeros(&[hidden, attn]),
            db: Tensor::zeros(&[attn]),
            dv: Tensor::zeros(&[attn]),
        }
    }

    pub fn attn_dim(&self) -> usize {
        self.b.len()
    }

    /// Pools hidden states into one context vector per sequence:
    /// scores `e_t = v . tanh(W h_t + b)`, weights `softmax(e)` over the
    /// valid steps, context `sum_t a_t h_t`. Returns `(context, weights)`.
    pub fn forward(&self, hidden: &SeqBatch) -> Result<(Mat, Mat, AttentionCache)> {
        let (b, t, h, a) = (hidden.b, hidden.t, hidden.f, self.attn_dim());
        if h != self.w.shape()[0] {
            return Err(NnError::Shape {
                layer: "AdditiveAttention",
                detail: format!("hidden dim {h} vs expected {}", self.w.shape()[0]),
            });
        }
        let mut u = vec![0.0; b * t * a];
        let mut scores = Mat::zeros(b, t);
        for bi in 0..b {
            for step in 0..t {
                let hs = hidden.at(bi, step);
                let ub = &mut u[(bi * t + step) * a..(bi * t + step + 1) * a];
                for j in 0..a {
                    let mut acc = self.b.data()[j];
                    for (k, &hv) in hs.iter().enumerate() {
                        acc += hv * self.w.data()[k * a + j];
                    }
                    ub[j] = acc.tanh();
                }
                let e: f64 = ub.iter().zip(self.v.data()).map(|(x, y)| x * y).sum();
                scores.set(bi, step, e);
            }
        }
        // masked softmax over valid steps
        let mut weights = Mat::zeros(b, t);
        for bi in 0..b {
            let len = hidden.lengths[bi];
            let row = scores.row(bi);
            let max = row[..len].iter().fold(f64::MIN, |m, &v| m.max(v));
            let mut denom = 0.0;
            for step in 0..len {
                denom += (row[step] - max).exp();
            }
            for step in 0..len {
                weights.set(bi, step, (row[step] - max).exp() / denom);
            }
        }
        let mut context = Mat::zeros(b, h);
        for bi in 0..b {
            for step in 0..hidden.lengths[bi] {
                let a_w = weights.get(bi, step);
                let hs = hidden.at(bi, step);
                for (k, &hv) in hs.iter().enumerate() {
                    context.row_mut(bi)[k] += a_w * hv;
                }
            }
        }
        let cache = AttentionCache { hidden: hidden.clone(), u, weights: weights.clone() };
        Ok((context, weights, cache))
    }

    /// Returns the gradient w.r.t. the hidden-state sequence.
    pub fn backward(&mut self, cache: &AttentionCache, dcontext: &Mat) -> SeqBatch {
        let (b, t, h) = (cache.hidden.b, cache.hidden.t, cache.hidden.f);
        let a = self.attn_dim();
        let mut dhidden = vec![0.0; b * t * h];
        for bi in 0..b {
            let len = cache.hidden.lengths[bi];
            let dcx = dcontext.row(bi);
            // da_t = dcontext . h_t ; dh_t += a_t dcontext
            let mut da = vec![0.0; len];
            for step in 0..len {
                let hs = cache.hidden.at(bi, step);
                let mut acc = 0.0;
                for k in 0..h {
                    acc += dcx[k] * hs[k];
                }
                da[step] = acc;
                let w_t = cache.weights.get(bi, step);
                let slot = &mut dhidden[(bi * t + step) * h..(bi * t + step + 1) * h];
                for k in 0..h {
                    slot[k] += w_t * dcx[k];
                }
            }
            // softmax backward: de_t = a_t (da_t - sum_s a_s da_s)
            let dot: f64 =
                (0..len).map(|s| cache.weights.get(bi, s) * da[s]).sum();
            for step in 0..len {
                let de = cache.weights.get(bi, step) * (da[step] - dot);
                if de == 0.0 {
                    continue;
                }
                let ub = &cache.u[(bi * t + step) * a..(bi * t + step + 1) * a];
                let hs = cache.hidden.at(bi, step);
                let slot = &mut dhidden[(bi * t + step) * h..(bi * t + step + 1) * h];
                for j in 0..a {
                    self.dv.data_mut()[j] += de * ub[j];
                    let du = de * self.v.data()[j];
                    let dpre = du * (1.0 - ub[j] * ub[j]);
                    self.db.data_mut()[j] += dpre;
                    for k in 0..h {
                        self.dw.data_mut()[k * a + j] += dpre * hs[k];
                        slot[k] += dpre * self.w.data()[k * a + j];
                    }
                }
            }
        }
        SeqBatch::new(b, t, h, dhidden, cache.hidden.lengths.clone())
    }

    pub fn zero_grads(&mut self) {
        self.dw.fill(0.0);
        self.db.fill(0.0);
        self.dv.fill(0.0);
    }
}

// ---------------------------------------------------------------------------
// Conv2D (valid padding, stride 1) and MaxPool2D
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub kernel: Tensor, // [C_out, C_in, KH, KW]
    pub bias: Tensor,   // [C_out]
    pub dkernel: Tensor,
    pub dbias: Tensor,
}

pub struct Conv2dCache {
    input: MapBatch,
}

impl Conv2d {
    pub fn new(c_in: usize, c_out: usize, kh: usize, kw: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = c_in * kh * kw;
        Self {
            kernel: Tensor::fan_in_init(&[c_out, c_in, kh, kw], fan_in, rng),
            bias: Tensor::zeros(&[c_out]),
            dkernel: Tensor::zeros(&[c_out, c_in, kh, kw]),
            dbias: Tensor::zeros(&[c_out]),
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.kernel.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn forward(&self, x: &MapBatch) -> Result<(MapBatch, Conv2dCache)> {
        let (c_out, c_in, kh, kw) = self.dims();
        if x.c != c_in {
            return Err(NnError::Shape {
                layer: "Conv2D",
                detail: format!("input channels {} vs kernel {}", x.c, c_in),
            });
        }
        if x.h < kh || x.w < kw {
            return Err(NnError::Shape {
                layer: "Conv2D",
                detail: format!("map {}x{} smaller than kernel {kh}x{kw}", x.h, x.w),
            });
        }
        let (oh, ow) = (x.h - kh + 1, x.w - kw + 1);
        let mut out = MapBatch::zeros(x.b, c_out, oh, ow);
        for b in 0..x.b {
            for co in 0..c_out {
                let bias = self.bias.data()[co];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias;
                        for ci in 0..c_in {
                            for ky in 0..kh {
                                let krow = ((co * c_in + ci) * kh + ky) * kw;
                                let xrow = x.idx(b, ci, oy + ky, ox);
                                for kx in 0..kw {
                                    acc += self.kernel.data()[krow + kx] * x.data[xrow + kx];
                                }
                            }
                        }
                        let at = out.idx(b, co, oy, ox);
                        out.data[at] = acc;
                    }
                }
            }
        }
        Ok((out, Conv2dCache { input: x.clone() }))
    }

    pub fn backward(&mut self, cache: &Conv2dCache, dy: &MapBatch) -> MapBatch {
        let (c_out, c_in, kh, kw) = self.dims();
        let x = &cache.input;
        let (oh, ow) = (dy.h, dy.w);
        let mut dx = MapBatch::zeros(x.b, x.c, x.h, x.w);
        for b in 0..x.b {
            for co in 0..c_out {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = dy.data[dy.idx(b, co, oy, ox)];
                        if g == 0.0 {
                            continue;
                        }
                        self.dbias.data_mut()[co] += g;
                        for ci in 0..c_in {
                            for ky in 0..kh {
                                let krow = ((co * c_in + ci) * kh + ky) * kw;
                                let xrow = x.idx(b, ci, oy + ky, ox);
                                for kx in 0..kw {
                                    self.dkernel.data_mut()[krow + kx] += g * x.data[xrow + kx];
                                    dx.data[xrow + kx] += g * self.kernel.data()[krow + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn zero_grads(&mut self) {
        self.dkernel.fill(0.0);
        self.dbias.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub size: usize,
}

pub struct MaxPoolCache {
    argmax: Vec<usize>,
    in_dims: (usize, usize, usize, usize),
}

impl MaxPool2d {
    pub fn forward(&self, x: &MapBatch) -> Result<(MapBatch, MaxPoolCache)> {
        let s = self.size;
        if x.h < s || x.w < s {
            return Err(NnError::Shape {
                layer: "MaxPool2D",
                detail: format!("map {}x{} smaller than pool {s}", x.h, x.w),
            });
        }
        let (oh, ow) = (x.h / s, x.w / s);
        let mut out = MapBatch::zeros(x.b, x.c, oh, ow);
        let mut argmax = vec![0usize; x.b * x.c * oh * ow];
        for b in 0..x.b {
            for c in 0..x.c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::MIN;
                        let mut best_at = 0;
                        for ky in 0..s {
                            for kx in 0..s {
                                let at = x.idx(b, c, oy * s + ky, ox * s + kx);
                                if x.data[at] > best {
                                    best = x.data[at];
                                    best_at = at;
                                }
                            }
                        }
                        let o = out.idx(b, c, oy, ox);
                        out.data[o] = best;
                        argmax[o] = best_at;
                    }
                }
            }
        }
        Ok((out, MaxPoolCache { argmax, in_dims: (x.b, x.c, x.h, x.w) }))
    }

    pub fn backward(&self, cache: &MaxPoolCache, dy: &MapBatch) -> MapBatch {
        let (b, c, h, w) = cache.in_dims;
        let mut dx = MapBatch::zeros(b, c, h, w);
        for (o, &src) in cache.argmax.iter().enumerate() {
            dx.data[src] += dy.data[o];
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
}

pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    n_rows: usize,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            momentum: 0.9,
            eps: 1e-5,
            dgamma: Tensor::zeros(&[features]),
            dbeta: Tensor::zeros(&[features]),
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Train-mode pass over a [rows, features] view: normalize by the batch
    /// statistics and fold them into the running estimates.
    pub fn forward_train(&mut self, x: &Mat) -> Result<(Mat, BatchNormCache)> {
        let d = self.features();
        if x.cols() != d {
            return Err(NnError::Shape {
                layer: "BatchNorm",
                detail: format!("features {} vs expected {d}", x.cols()),
            });
        }
        let n = x.rows();
        if n < 2 {
            return Err(NnError::DegenerateBatch);
        }
        let mut out = Mat::zeros(n, d);
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for r in 0..n {
            for (c, &v) in x.row(r).iter().enumerate() {
                mean[c] += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for r in 0..n {
            for (c, &v) in x.row(r).iter().enumerate() {
                var[c] += (v - mean[c]) * (v - mean[c]);
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![0.0; n * d];
        for r in 0..n {
            for c in 0..d {
                let h = (x.get(r, c) - mean[c]) * inv_std[c];
                xhat[r * d + c] = h;
                out.set(r, c, self.gamma.data()[c] * h + self.beta.data()[c]);
            }
        }
        for c in 0..d {
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = self.momentum * *rm + (1.0 - self.momentum) * mean[c];
            let rv = &mut self.running_var.data_mut()[c];
            *rv = self.momentum * *rv + (1.0 - self.momentum) * var[c];
        }
        Ok((out, BatchNormCache { xhat, inv_std, n_rows: n }))
    }

    /// Eval-mode pass: running statistics only, no state mutation.
    pub fn forward_eval(&self, x: &Mat) -> Result<Mat> {
        let d = self.features();
        if x.cols() != d {
            return Err(NnError::Shape {
                layer: "BatchNorm",
                detail: format!("features {} vs expected {d}", x.cols()),
            });
        }
        let n = x.rows();
        let mut out = Mat::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                let h = (x.get(r, c) - self.running_mean.data()[c])
                    / (self.running_var.data()[c] + self.eps).sqrt();
                out.set(r, c, self.gamma.data()[c] * h + self.beta.data()[c]);
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Mat) -> Mat {
        let d = self.features();
        let n = cache.n_rows;
        let mut sum_dxhat = vec![0.0; d];
        let mut sum_dxhat_xhat = vec![0.0; d];
        for r in 0..n {
            for (c, &g) in dy.row(r).iter().enumerate() {
                let xh = cache.xhat[r * d + c];
                self.dgamma.data_mut()[c] += g * xh;
                self.dbeta.data_mut()[c] += g;
                let dxhat = g * self.gamma.data()[c];
                sum_dxhat[c] += dxhat;
                sum_dxhat_xhat[c] += dxhat * xh;
            }
        }
        let mut dx = Mat::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                let dxhat = dy.get(r, c) * self.gamma.data()[c];
                let xh = cache.xhat[r * d + c];
                let v = cache.inv_std[c] / n as f64
                    * (n as f64 * dxhat - sum_dxhat[c] - xh * sum_dxhat_xhat[c]);
                dx.set(r, c, v);
            }
        }
        dx
    }

    /// Per-channel normalization of a 4-D map batch: the (b, h, w) axes form
    /// the statistics population for each channel.
    pub fn forward_maps_train(&mut self, x: &MapBatch) -> Result<(MapBatch, BatchNormCache)> {
        let view = maps_to_channel_rows(x);
        let (out_rows, cache) = self.forward_train(&view)?;
        Ok((channel_rows_to_maps(&out_rows, x), cache))
    }

    pub fn forward_maps_eval(&self, x: &MapBatch) -> Result<MapBatch> {
        let view = maps_to_channel_rows(x);
        let out_rows = self.forward_eval(&view)?;
        Ok(channel_rows_to_maps(&out_rows, x))
    }

    pub fn backward_maps(&mut self, cache: &BatchNormCache, dy: &MapBatch) -> MapBatch {
        let view = maps_to_channel_rows(dy);
        let dx = self.backward(cache, &view);
        channel_rows_to_maps(&dx, dy)
    }

    pub fn zero_grads(&mut self) {
        self.dgamma.fill(0.0);
        self.dbeta.fill(0.0);
    }
}

fn maps_to_channel_rows(x: &MapBatch) -> Mat {
    let rows = x.b * x.h * x.w;
    let mut out = Mat::zeros(rows, x.c);
    let mut r = 0;
    for b in 0..x.b {
        for y in 0..x.h {
            for xx in 0..x.w {
                for c in 0..x.c {
                    out.set(r, c, x.data[x.idx(b, c, y, xx)]);
                }
                r += 1;
            }
        }
    }
    out
}

fn channel_rows_to_maps(rows: &Mat, like: &MapBatch) -> MapBatch {
    let mut out = MapBatch::zeros(like.b, like.c, like.h, like.w);
    let mut r = 0;
    for b in 0..like.b {
        for y in 0..like.h {
            for xx in 0..like.w {
                for c in 0..like.c {
                    let at = out.idx(b, c, y, xx);
                    out.data[at] = rows.get(r, c);
                }
                r += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
}

pub struct DropoutCache {
    mask: Vec<f64>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::Shape {
                layer: "Dropout",
                detail: format!("rate {rate} outside [0, 1)"),
            });
        }
        Ok(Self { rate })
    }

    /// Inverted dropout: kept units are scaled by 1/(1-rate) so the
    /// expectation matches eval mode, which is the identity.
    pub fn forward(&self, x: &[f64], mode: Mode, rng: &mut ChaCha8Rng) -> (Vec<f64>, DropoutCache) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x.to_vec(), DropoutCache { mask: vec![1.0; x.len()] });
        }
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> =
            (0..x.len()).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
        (out, DropoutCache { mask })
    }

    pub fn backward(&self, cache: &DropoutCache, dy: &[f64]) -> Vec<f64> {
        dy.iter().zip(&cache.mask).map(|(g, m)| g * m).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;

    #[test]
    fn dense_closed_form_single_unit() {
        let mut rng = seeded_rng(0);
        let mut dense = Dense::new(1, 1, &mut rng);
        dense.w.data_mut()[0] = 2.0;
        dense.b.data_mut()[0] = -1.0;
        let x = Mat::from_rows(vec![vec![1.0]]);
        let (y, _) = dense.forward(&x).unwrap();
        assert!((sigmoid(y.get(0, 0)) - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn dense_gradient_is_outer_product_on_single_example() {
        let mut rng = seeded_rng(1);
        let mut dense = Dense::new(3, 2, &mut rng);
        let x = Mat::from_rows(vec![vec![0.5, -1.0, 2.0]]);
        let (_, cache) = dense.forward(&x).unwrap();
        let dy = Mat::from_rows(vec![vec![0.3, -0.7]]);
        dense.zero_grads();
        let _ = dense.backward(&cache, &dy);
        for i in 0..3 {
            for j in 0..2 {
                let expect = x.get(0, i) * dy.get(0, j);
                assert!((dense.dw.data()[i * 2 + j] - expect).abs() < 1e-12);
            }
        }
        // zero upstream gradient -> zero parameter gradients
        dense.zero_grads();
        let _ = dense.backward(&cache, &Mat::zeros(1, 2));
        assert!(dense.dw.data().iter().all(|&g| g == 0.0));
        assert!(dense.db.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn dense_shape_error_names_layer() {
        let mut rng = seeded_rng(2);
        let dense = Dense::new(3, 2, &mut rng);
        let err = dense.forward(&Mat::zeros(1, 4)).unwrap_err();
        assert!(err.to_string().contains("Dense"));
    }

    #[test]
    fn dropout_preserves_expectation_and_eval_is_identity() {
        let mut rng = seeded_rng(3);
        let d = Dropout::new(0.5).unwrap();
        let x = vec![1.0; 10_000];
        let (y, _) = d.forward(&x, Mode::Train, &mut rng);
        let m = crate::util::mean(&y);
        assert!((m - 1.0).abs() < 0.05, "mean {m}");
        let (e, _) = d.forward(&x, Mode::Eval, &mut rng);
        assert_eq!(e, x);
        let zero = Dropout::new(0.0).unwrap();
        let (z, _) = zero.forward(&x, Mode::Train, &mut rng);
        assert_eq!(z, x);
        assert!(Dropout::new(1.0).is_err());
    }

    #[test]
    fn batchnorm_standardizes_and_respects_affine_identity() {
        let mut bn = BatchNorm::new(3);
        let x = Mat::from_rows(vec![
            vec![1.0, 10.0, -5.0],
            vec![2.0, 20.0, -3.0],
            vec![3.0, 30.0, -1.0],
            vec![4.0, 40.0, 1.0],
        ]);
        let (y, _) = bn.forward_train(&x).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = (0..4).map(|r| y.get(r, c)).collect();
            let mu = crate::util::mean(&col);
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 4.0;
            assert!(mu.abs() < 1e-6, "col {c} mean {mu}");
            assert!((var - 1.0).abs() < 1e-4, "col {c} var {var}");
        }
        // already-standardized input with unit gamma, zero beta ~ identity
        let (z, _) = bn.forward_train(&y).unwrap();
        for r in 0..4 {
            for c in 0..3 {
                assert!((z.get(r, c) - y.get(r, c)).abs() < 1e-4);
            }
        }
        assert!(matches!(bn.forward_train(&Mat::zeros(1, 3)), Err(NnError::DegenerateBatch)));
    }

    #[test]
    fn attention_weights_sum_to_one_and_singleton_is_unit() {
        let mut rng = seeded_rng(4);
        let attn = AdditiveAttention::new(4, 3, &mut rng);
        let single = SeqBatch::new(1, 1, 4, vec![0.3, -0.2, 0.9, 0.0], vec![1]);
        let (ctx, w, _) = attn.forward(&single).unwrap();
        assert!((w.get(0, 0) - 1.0).abs() < 1e-12);
        for k in 0..4 {
            assert!((ctx.get(0, k) - single.at(0, 0)[k]).abs() < 1e-12);
        }

        // identical states -> uniform weights
        let t = 5;
        let state = [0.5, -0.5, 0.25, 0.1];
        let mut data = Vec::new();
        for _ in 0..t {
            data.extend_from_slice(&state);
        }
        let batch = SeqBatch::new(1, t, 4, data, vec![t]);
        let (_, w, _) = attn.forward(&batch).unwrap();
        for step in 0..t {
            assert!((w.get(0, step) - 1.0 / t as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn attention_softmax_sharpness() {
        // a score gap of 10 puts essentially all weight on one step
        let t = 8;
        let mut weights = vec![0.0f64; t];
        let scores: Vec<f64> = (0..t).map(|i| if i == 3 { 10.0 } else { 0.0 }).collect();
        let max = 10.0f64;
        let denom: f64 = scores.iter().map(|&s| (s - max).exp()).sum();
        for (i, w) in weights.iter_mut().enumerate() {
            *w = (scores[i] - max).exp() / denom;
        }
        assert!(weights[3] > 0.99);
    }
}
