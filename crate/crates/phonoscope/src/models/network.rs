//! Architecture assembly over the layer set, with explicit forward/backward
//! chains per family.
//!
//! Readouts: recurrent stacks end in the last valid hidden state, or — for
//! the attention variants — an additive-attention pool over every valid step.
//! The CNN treats the T x F feature matrix as a 1-channel image through two
//! conv/norm/relu/pool blocks. The hybrid runs one conv block, reshapes back
//! to a time-major sequence, and hands it to an LSTM.
//!
//! Parameter traversal order is fixed (it keys the optimizer state and the
//! serialized container): recurrent layers in stack order (wx, wh, b), then
//! attention (w, b, v), then the head (w, b); conv blocks contribute
//! (kernel, bias, gamma, beta) in block order, with batch-norm running
//! statistics appended for serialization only.

use rand_chacha::ChaCha8Rng;

use crate::nn::layers::{
    AttentionCache, BatchNormCache, Conv2dCache, DenseCache, DropoutCache, LstmCache,
    MaxPoolCache, SimpleRnnCache,
};
use crate::nn::{
    AdditiveAttention, BatchNorm, Conv2d, Dense, Dropout, Lstm, MapBatch, MaxPool2d, Mode,
    NnError, SeqBatch, SimpleRnn, Tensor,
};
use crate::util::{seeded_rng, Mat};

use super::{ModelConfig, ModelError, ModelKind, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

enum Cells {
    Simple(Vec<SimpleRnn>),
    Lstm(Vec<Lstm>),
}

struct ConvBlock {
    conv: Conv2d,
    bn: BatchNorm,
    pool: MaxPool2d,
}

enum Arch {
    Recurrent {
        cells: Cells,
        attention: Option<AdditiveAttention>,
        dropout: Dropout,
        head: Dense,
    },
    Cnn {
        block1: ConvBlock,
        block2: ConvBlock,
        dropout: Dropout,
        head: Dense,
    },
    Hybrid {
        block: ConvBlock,
        lstm: Lstm,
        dropout: Dropout,
        head: Dense,
    },
}

/// An assembled (possibly untrained) classifier network.
pub struct Network {
    pub kind: ModelKind,
    /// Frame count the network was built for. The CNN feeds a fixed-size
    /// dense head, so its inputs are padded/truncated to this length;
    /// recurrent families accept any length.
    pub input_t: usize,
    pub input_f: usize,
    config: ModelConfig,
    arch: Arch,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("kind", &self.kind)
            .field("input_t", &self.input_t)
            .field("input_f", &self.input_f)
            .field("params", &self.param_count())
            .finish()
    }
}

impl Clone for Network {
    fn clone(&self) -> Self {
        let mut copy = Network::build(&self.config, (self.input_t, self.input_f))
            .expect("topology already validated");
        let src: Vec<Tensor> = self.state_tensors().into_iter().cloned().collect();
        for (dst, s) in copy.state_tensors_mut().into_iter().zip(src) {
            *dst = s;
        }
        copy
    }
}

fn relu_maps(x: &MapBatch) -> (MapBatch, Vec<bool>) {
    let mut out = x.clone();
    let mask: Vec<bool> = out
        .data
        .iter_mut()
        .map(|v| {
            if *v > 0.0 {
                true
            } else {
                *v = 0.0;
                false
            }
        })
        .collect();
    (out, mask)
}

fn relu_maps_backward(dy: &MapBatch, mask: &[bool]) -> MapBatch {
    let mut dx = dy.clone();
    for (v, &keep) in dx.data.iter_mut().zip(mask) {
        if !keep {
            *v = 0.0;
        }
    }
    dx
}

/// Per-family caches produced by a train-mode forward pass.
pub struct TrainCache {
    probs: Vec<f64>,
    detail: CacheDetail,
}

impl TrainCache {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

enum CacheDetail {
    Recurrent {
        layer_inputs: Vec<SeqBatch>,
        cell_caches: CellCaches,
        hidden: SeqBatch,
        attention: Option<AttentionCache>,
        dropout: DropoutCache,
        dense: DenseCache,
    },
    Cnn {
        b1: BlockCache,
        b2: BlockCache,
        flat_dims: (usize, usize, usize),
        dropout: DropoutCache,
        dense: DenseCache,
    },
    Hybrid {
        b1: BlockCache,
        block_out: (usize, usize, usize, usize),
        seq: SeqBatch,
        lstm: LstmCache,
        hidden: SeqBatch,
        dropout: DropoutCache,
        dense: DenseCache,
    },
}

enum CellCaches {
    Simple(Vec<SimpleRnnCache>),
    Lstm(Vec<LstmCache>),
}

struct BlockCache {
    conv: Conv2dCache,
    bn: BatchNormCache,
    relu_mask: Vec<bool>,
    pool: MaxPoolCache,
}

impl Network {
    /// Builds an untrained network for `(T, F)` inputs; initial parameters
    /// are a pure function of `(config, config.seed)`.
    pub fn build(config: &ModelConfig, input_shape: (usize, usize)) -> Result<Self> {
        let (t, f) = input_shape;
        if t == 0 || f == 0 {
            return Err(ModelError::Shape("input shape must be nonzero".into()));
        }
        let mut rng = seeded_rng(config.seed);
        let h = config.hidden_units;
        let arch = match config.kind {
            ModelKind::SimpleRnn | ModelKind::RnnAttention | ModelKind::Lstm
            | ModelKind::LstmAttention => {
                let n_layers = config.n_recurrent_layers.max(1);
                let lstm_like = matches!(config.kind, ModelKind::Lstm | ModelKind::LstmAttention);
                let cells = if lstm_like {
                    Cells::Lstm(
                        (0..n_layers)
                            .map(|l| Lstm::new(if l == 0 { f } else { h }, h, &mut rng))
                            .collect(),
                    )
                } else {
                    Cells::Simple(
                        (0..n_layers)
                            .map(|l| SimpleRnn::new(if l == 0 { f } else { h }, h, &mut rng))
                            .collect(),
                    )
                };
                let attention =
                    matches!(config.kind, ModelKind::RnnAttention | ModelKind::LstmAttention)
                        .then(|| AdditiveAttention::new(h, config.attention_dim, &mut rng));
                Arch::Recurrent {
                    cells,
                    attention,
                    dropout: Dropout::new(config.dropout)?,
                    head: Dense::new(h, 1, &mut rng),
                }
            }
            ModelKind::Cnn => {
                let (c1, c2) = config.conv_filters;
                let k = config.kernel_size;
                let p = config.pool_size;
                let dims = cnn_output_dims(t, f, k, p, 2)?;
                let flat = c2 * dims.0 * dims.1;
                Arch::Cnn {
                    block1: ConvBlock {
                        conv: Conv2d::new(1, c1, k, k, &mut rng),
                        bn: BatchNorm::new(c1),
                        pool: MaxPool2d { size: p },
                    },
                    block2: ConvBlock {
                        conv: Conv2d::new(c1, c2, k, k, &mut rng),
                        bn: BatchNorm::new(c2),
                        pool: MaxPool2d { size: p },
                    },
                    dropout: Dropout::new(config.dropout)?,
                    head: Dense::new(flat, 1, &mut rng),
                }
            }
            ModelKind::HybridCnnLstm => {
                let (c1, _) = config.conv_filters;
                let k = config.kernel_size;
                let p = config.pool_size;
                let dims = cnn_output_dims(t, f, k, p, 1)?;
                let seq_f = c1 * dims.1;
                Arch::Hybrid {
                    block: ConvBlock {
                        conv: Conv2d::new(1, c1, k, k, &mut rng),
                        bn: BatchNorm::new(c1),
                        pool: MaxPool2d { size: p },
                    },
                    lstm: Lstm::new(seq_f, h, &mut rng),
                    dropout: Dropout::new(config.dropout)?,
                    head: Dense::new(h, 1, &mut rng),
                }
            }
            ModelKind::Svm => {
                return Err(ModelError::Parameter(
                    "the SVM is trained through svm_train, not Network::build".into(),
                ))
            }
        };
        Ok(Self { kind: config.kind, input_t: t, input_f: f, config: config.clone(), arch })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_adam(|p, _| n += p.len());
        n
    }

    fn visit_adam(&self, mut f: impl FnMut(&Tensor, &Tensor)) {
        match &self.arch {
            Arch::Recurrent { cells, attention, head, .. } => {
                match cells {
                    Cells::Simple(v) => {
                        for c in v {
                            f(&c.wx, &c.dwx);
                            f(&c.wh, &c.dwh);
                            f(&c.b, &c.db);
                        }
                    }
                    Cells::Lstm(v) => {
                        for c in v {
                            f(&c.wx, &c.dwx);
                            f(&c.wh, &c.dwh);
                            f(&c.b, &c.db);
                        }
                    }
                }
                if let Some(a) = attention {
                    f(&a.w, &a.dw);
                    f(&a.b, &a.db);
                    f(&a.v, &a.dv);
                }
                f(&head.w, &head.dw);
                f(&head.b, &head.db);
            }
            Arch::Cnn { block1, block2, head, .. } => {
                for b in [block1, block2] {
                    f(&b.conv.kernel, &b.conv.dkernel);
                    f(&b.conv.bias, &b.conv.dbias);
                    f(&b.bn.gamma, &b.bn.dgamma);
                    f(&b.bn.beta, &b.bn.dbeta);
                }
                f(&head.w, &head.dw);
                f(&head.b, &head.db);
            }
            Arch::Hybrid { block, lstm, head, .. } => {
                f(&block.conv.kernel, &block.conv.dkernel);
                f(&block.conv.bias, &block.conv.dbias);
                f(&block.bn.gamma, &block.bn.dgamma);
                f(&block.bn.beta, &block.bn.dbeta);
                f(&lstm.wx, &lstm.dwx);
                f(&lstm.wh, &lstm.dwh);
                f(&lstm.b, &lstm.db);
                f(&head.w, &head.dw);
                f(&head.b, &head.db);
            }
        }
    }

    /// `(parameter, gradient)` pairs in the fixed traversal order.
    pub fn adam_pairs(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        let mut out: Vec<(&mut Tensor, &Tensor)> = Vec::new();
        match &mut self.arch {
            Arch::Recurrent { cells, attention, head, .. } => {
                match cells {
                    Cells::Simple(v) => {
                        for c in v {
                            out.push((&mut c.wx, &c.dwx));
                            out.push((&mut c.wh, &c.dwh));
                            out.push((&mut c.b, &c.db));
                        }
                    }
                    Cells::Lstm(v) => {
                        for c in v {
                            out.push((&mut c.wx, &c.dwx));
                            out.push((&mut c.wh, &c.dwh));
                            out.push((&mut c.b, &c.db));
                        }
                    }
                }
                if let Some(a) = attention {
                    out.push((&mut a.w, &a.dw));
                    out.push((&mut a.b, &a.db));
                    out.push((&mut a.v, &a.dv));
                }
                out.push((&mut head.w, &head.dw));
                out.push((&mut head.b, &head.db));
            }
            Arch::Cnn { block1, block2, head, .. } => {
                for b in [block1, block2] {
                    out.push((&mut b.conv.kernel, &b.conv.dkernel));
                    out.push((&mut b.conv.bias, &b.conv.dbias));
                    out.push((&mut b.bn.gamma, &b.bn.dgamma));
                    out.push((&mut b.bn.beta, &b.bn.dbeta));
                }
                out.push((&mut head.w, &head.dw));
                out.push((&mut head.b, &head.db));
            }
            Arch::Hybrid { block, lstm, head, .. } => {
                out.push((&mut block.conv.kernel, &block.conv.dkernel));
                out.push((&mut block.conv.bias, &block.conv.dbias));
                out.push((&mut block.bn.gamma, &block.bn.dgamma));
                out.push((&mut block.bn.beta, &block.bn.dbeta));
                out.push((&mut lstm.wx, &lstm.dwx));
                out.push((&mut lstm.wh, &lstm.dwh));
                out.push((&mut lstm.b, &lstm.db));
                out.push((&mut head.w, &head.dw));
                out.push((&mut head.b, &head.db));
            }
        }
        out
    }

    /// Gradients in `adam_pairs` order, for finite-difference checks.
    pub fn grad_tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.visit_adam(|_, g| out.push(g.clone()));
        out
    }

    /// Mutable optimized parameters in `adam_pairs` order.
    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.adam_pairs().into_iter().map(|(p, _)| p).collect()
    }

    /// Everything that defines the trained model: optimized parameters plus
    /// batch-norm running statistics, in serialization order.
    pub fn state_tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        match &self.arch {
            Arch::Recurrent { cells, attention, head, .. } => {
                match cells {
                    Cells::Simple(v) => {
                        for c in v {
                            out.extend([&c.wx, &c.wh, &c.b]);
                        }
                    }
                    Cells::Lstm(v) => {
                        for c in v {
                            out.extend([&c.wx, &c.wh, &c.b]);
                        }
                    }
                }
                if let Some(a) = attention {
                    out.extend([&a.w, &a.b, &a.v]);
                }
                out.extend([&head.w, &head.b]);
            }
            Arch::Cnn { block1, block2, head, .. } => {
                for b in [block1, block2] {
                    out.extend([
                        &b.conv.kernel,
                        &b.conv.bias,
                        &b.bn.gamma,
                        &b.bn.beta,
                        &b.bn.running_mean,
                        &b.bn.running_var,
                    ]);
                }
                out.extend([&head.w, &head.b]);
            }
            Arch::Hybrid { block, lstm, head, .. } => {
                out.extend([
                    &block.conv.kernel,
                    &block.conv.bias,
                    &block.bn.gamma,
                    &block.bn.beta,
                    &block.bn.running_mean,
                    &block.bn.running_var,
                ]);
                out.extend([&lstm.wx, &lstm.wh, &lstm.b]);
                out.extend([&head.w, &head.b]);
            }
        }
        out
    }

    pub fn state_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        match &mut self.arch {
            Arch::Recurrent { cells, attention, head, .. } => {
                match cells {
                    Cells::Simple(v) => {
                        for c in v {
                            out.extend([&mut c.wx, &mut c.wh, &mut c.b]);
                        }
                    }
                    Cells::Lstm(v) => {
                        for c in v {
                            out.extend([&mut c.wx, &mut c.wh, &mut c.b]);
                        }
                    }
                }
                if let Some(a) = attention {
                    out.extend([&mut a.w, &mut a.b, &mut a.v]);
                }
                out.extend([&mut head.w, &mut head.b]);
            }
            Arch::Cnn { block1, block2, head, .. } => {
                for b in [block1, block2] {
                    out.extend([
                        &mut b.conv.kernel,
                        &mut b.conv.bias,
                        &mut b.bn.gamma,
                        &mut b.bn.beta,
                        &mut b.bn.running_mean,
                        &mut b.bn.running_var,
                    ]);
                }
                out.extend([&mut head.w, &mut head.b]);
            }
            Arch::Hybrid { block, lstm, head, .. } => {
                out.extend([
                    &mut block.conv.kernel,
                    &mut block.conv.bias,
                    &mut block.bn.gamma,
                    &mut block.bn.beta,
                    &mut block.bn.running_mean,
                    &mut block.bn.running_var,
                ]);
                out.extend([&mut lstm.wx, &mut lstm.wh, &mut lstm.b]);
                out.extend([&mut head.w, &mut head.b]);
            }
        }
        out
    }

    pub fn zero_grads(&mut self) {
        match &mut self.arch {
            Arch::Recurrent { cells, attention, head, .. } => {
                match cells {
                    Cells::Simple(v) => v.iter_mut().for_each(SimpleRnn::zero_grads),
                    Cells::Lstm(v) => v.iter_mut().for_each(Lstm::zero_grads),
                }
                if let Some(a) = attention {
                    a.zero_grads();
                }
                head.zero_grads();
            }
            Arch::Cnn { block1, block2, head, .. } => {
                for b in [block1, block2] {
                    b.conv.zero_grads();
                    b.bn.zero_grads();
                }
                head.zero_grads();
            }
            Arch::Hybrid { block, lstm, head, .. } => {
                block.conv.zero_grads();
                block.bn.zero_grads();
                lstm.zero_grads();
                head.zero_grads();
            }
        }
    }

    /// Train-mode forward pass over a padded batch. Returns probabilities in
    /// (0, 1) and the cache for [`Self::backward`].
    pub fn forward_train(
        &mut self,
        batch: &SeqBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, TrainCache)> {
        if batch.f != self.input_f {
            return Err(ModelError::Shape(format!(
                "batch feature dim {} vs network input {}",
                batch.f, self.input_f
            )));
        }
        let input_t = self.input_t;
        let (probs, detail) = match &mut self.arch {
            Arch::Recurrent { cells, attention, dropout, head } => {
                let mut layer_inputs: Vec<SeqBatch> = Vec::new();
                let mut current = batch.clone();
                let cell_caches = match cells {
                    Cells::Simple(v) => {
                        let mut caches = Vec::new();
                        for cell in v.iter() {
                            layer_inputs.push(current.clone());
                            let (h, c) = cell.forward(&current)?;
                            caches.push(c);
                            current = h;
                        }
                        CellCaches::Simple(caches)
                    }
                    Cells::Lstm(v) => {
                        let mut caches = Vec::new();
                        for cell in v.iter() {
                            layer_inputs.push(current.clone());
                            let (h, c) = cell.forward(&current)?;
                            caches.push(c);
                            current = h;
                        }
                        CellCaches::Lstm(caches)
                    }
                };
                let hidden = current;
                let (context, attn_cache) = match attention {
                    Some(a) => {
                        let (ctx, _w, cache) = a.forward(&hidden)?;
                        (ctx, Some(cache))
                    }
                    None => (last_valid_states(&hidden), None),
                };
                let (dropped, drop_cache) = dropout.forward(context.data(), Mode::Train, rng);
                let ctx_mat = Mat::from_flat(context.rows(), context.cols(), dropped);
                let (z, dense_cache) = head.forward(&ctx_mat)?;
                let probs: Vec<f64> = (0..z.rows()).map(|r| sigmoid(z.get(r, 0))).collect();
                (
                    probs,
                    CacheDetail::Recurrent {
                        layer_inputs,
                        cell_caches,
                        hidden,
                        attention: attn_cache,
                        dropout: drop_cache,
                        dense: dense_cache,
                    },
                )
            }
            Arch::Cnn { block1, block2, dropout, head } => {
                let maps = seq_to_maps(batch, Some(input_t));
                let (x1, b1) = forward_block_train(block1, &maps)?;
                let (x2, b2) = forward_block_train(block2, &x1)?;
                let flat_dims = (x2.c, x2.h, x2.w);
                let flat = Mat::from_flat(x2.b, x2.c * x2.h * x2.w, x2.data);
                let (dropped, drop_cache) = dropout.forward(flat.data(), Mode::Train, rng);
                let flat_d = Mat::from_flat(flat.rows(), flat.cols(), dropped);
                let (z, dense_cache) = head.forward(&flat_d)?;
                let probs: Vec<f64> = (0..z.rows()).map(|r| sigmoid(z.get(r, 0))).collect();
                (
                    probs,
                    CacheDetail::Cnn {
                        b1,
                        b2,
                        flat_dims,
                        dropout: drop_cache,
                        dense: dense_cache,
                    },
                )
            }
            Arch::Hybrid { block, lstm, dropout, head } => {
                let maps = seq_to_maps(batch, None);
                let (x1, b1) = forward_block_train(block, &maps)?;
                let block_out = (x1.b, x1.c, x1.h, x1.w);
                let k = block.conv.kernel.shape()[2];
                let seq = maps_to_seq(&x1, &batch.lengths, k, block.pool.size);
                let (hidden, lstm_cache) = lstm.forward(&seq)?;
                let context = last_valid_states(&hidden);
                let (dropped, drop_cache) = dropout.forward(context.data(), Mode::Train, rng);
                let ctx_mat = Mat::from_flat(context.rows(), context.cols(), dropped);
                let (z, dense_cache) = head.forward(&ctx_mat)?;
                let probs: Vec<f64> = (0..z.rows()).map(|r| sigmoid(z.get(r, 0))).collect();
                (
                    probs,
                    CacheDetail::Hybrid {
                        b1,
                        block_out,
                        seq,
                        lstm: lstm_cache,
                        hidden,
                        dropout: drop_cache,
                        dense: dense_cache,
                    },
                )
            }
        };
        for &p in &probs {
            if !p.is_finite() {
                return Err(ModelError::Nn(NnError::Numeric(format!(
                    "non-finite activation {p} at the head"
                ))));
            }
        }
        Ok((probs.clone(), TrainCache { probs, detail }))
    }

    /// Eval-mode prediction for a single standardized T x F sequence. Pure:
    /// consumes no RNG, mutates no state; dropout is skipped and batch norm
    /// reads its running statistics.
    pub fn predict_one(&self, seq: &Mat) -> Result<f64> {
        if seq.cols() != self.input_f {
            return Err(ModelError::Shape(format!(
                "sample has {} features, network expects {}",
                seq.cols(),
                self.input_f
            )));
        }
        if seq.rows() == 0 {
            return Err(ModelError::Shape("sample has no frames".into()));
        }
        let batch =
            SeqBatch::new(1, seq.rows(), seq.cols(), seq.data().to_vec(), vec![seq.rows()]);
        match &self.arch {
            Arch::Recurrent { cells, attention, head, .. } => {
                let hidden = match cells {
                    Cells::Simple(v) => {
                        let mut current = batch;
                        for cell in v {
                            current = cell.forward(&current)?.0;
                        }
                        current
                    }
                    Cells::Lstm(v) => {
                        let mut current = batch;
                        for cell in v {
                            current = cell.forward(&current)?.0;
                        }
                        current
                    }
                };
                let context = match attention {
                    Some(a) => a.forward(&hidden)?.0,
                    None => last_valid_states(&hidden),
                };
                let (z, _) = head.forward(&context)?;
                finite_prob(sigmoid(z.get(0, 0)))
            }
            Arch::Cnn { block1, block2, head, .. } => {
                let maps = seq_to_maps(&batch, Some(self.input_t));
                let x1 = forward_block_eval(block1, &maps)?;
                let x2 = forward_block_eval(block2, &x1)?;
                let flat = Mat::from_flat(1, x2.c * x2.h * x2.w, x2.data);
                let (z, _) = head.forward(&flat)?;
                finite_prob(sigmoid(z.get(0, 0)))
            }
            Arch::Hybrid { block, lstm, head, .. } => {
                let maps = seq_to_maps(&batch, None);
                let x1 = forward_block_eval(block, &maps)?;
                let k = block.conv.kernel.shape()[2];
                let seq2 = maps_to_seq(&x1, &batch.lengths, k, block.pool.size);
                let (hidden, _) = lstm.forward(&seq2)?;
                let context = last_valid_states(&hidden);
                let (z, _) = head.forward(&context)?;
                finite_prob(sigmoid(z.get(0, 0)))
            }
        }
    }

    /// Accumulates parameter gradients for one batch given dLoss/dProb.
    pub fn backward(&mut self, cache: &TrainCache, dprobs: &[f64]) -> Result<()> {
        let p = &cache.probs;
        if p.len() != dprobs.len() {
            return Err(ModelError::Nn(NnError::Numeric(
                "gradient/prediction length mismatch".into(),
            )));
        }
        let dz = Mat::from_rows(
            p.iter().zip(dprobs).map(|(&pi, &dpi)| vec![dpi * pi * (1.0 - pi)]).collect(),
        );
        match (&mut self.arch, &cache.detail) {
            (
                Arch::Recurrent { cells, attention, dropout, head },
                CacheDetail::Recurrent {
                    layer_inputs,
                    cell_caches,
                    hidden,
                    attention: attn_cache,
                    dropout: drop_cache,
                    dense: dense_cache,
                },
            ) => {
                let dctx_dropped = head.backward(dense_cache, &dz);
                let dctx_vec = dropout.backward(drop_cache, dctx_dropped.data());
                let dctx = Mat::from_flat(dctx_dropped.rows(), dctx_dropped.cols(), dctx_vec);
                let mut dh = match (attention.as_mut(), attn_cache) {
                    (Some(a), Some(ac)) => a.backward(ac, &dctx),
                    _ => last_valid_states_backward(hidden, &dctx),
                };
                match (cells, cell_caches) {
                    (Cells::Simple(v), CellCaches::Simple(caches)) => {
                        for l in (0..v.len()).rev() {
                            dh = v[l].backward(&layer_inputs[l], &caches[l], &dh);
                        }
                    }
                    (Cells::Lstm(v), CellCaches::Lstm(caches)) => {
                        for l in (0..v.len()).rev() {
                            dh = v[l].backward(&layer_inputs[l], &caches[l], &dh);
                        }
                    }
                    _ => {
                        return Err(ModelError::Nn(NnError::Numeric(
                            "cache does not match architecture".into(),
                        )))
                    }
                }
            }
            (
                Arch::Cnn { block1, block2, dropout, head },
                CacheDetail::Cnn { b1, b2, flat_dims, dropout: drop_cache, dense: dense_cache },
            ) => {
                let dflat_dropped = head.backward(dense_cache, &dz);
                let dflat_vec = dropout.backward(drop_cache, dflat_dropped.data());
                let (c, h, w) = *flat_dims;
                let dmaps2 = MapBatch { b: dflat_dropped.rows(), c, h, w, data: dflat_vec };
                let dx1 = backward_block(block2, b2, &dmaps2);
                let _dx0 = backward_block(block1, b1, &dx1);
            }
            (
                Arch::Hybrid { block, lstm, dropout, head },
                CacheDetail::Hybrid {
                    b1,
                    block_out,
                    seq,
                    lstm: lstm_cache,
                    hidden,
                    dropout: drop_cache,
                    dense: dense_cache,
                },
            ) => {
                let dctx_dropped = head.backward(dense_cache, &dz);
                let dctx_vec = dropout.backward(drop_cache, dctx_dropped.data());
                let dctx = Mat::from_flat(dctx_dropped.rows(), dctx_dropped.cols(), dctx_vec);
                let dh_out = last_valid_states_backward(hidden, &dctx);
                let dseq = lstm.backward(seq, lstm_cache, &dh_out);
                let dmaps1 = seq_grad_to_maps(&dseq, *block_out);
                let _dx0 = backward_block(block, b1, &dmaps1);
            }
            _ => {
                return Err(ModelError::Nn(NnError::Numeric(
                    "cache does not match architecture".into(),
                )))
            }
        }
        Ok(())
    }
}

fn finite_prob(p: f64) -> Result<f64> {
    if !p.is_finite() {
        return Err(ModelError::Nn(NnError::Numeric(format!("non-finite prediction {p}"))));
    }
    Ok(p)
}

/// Output (h, w) after `blocks` rounds of valid k-conv followed by p-pool.
fn cnn_output_dims(t: usize, f: usize, k: usize, p: usize, blocks: usize) -> Result<(usize, usize)> {
    let (mut h, mut w) = (t, f);
    for b in 0..blocks {
        if h < k || w < k {
            return Err(ModelError::Shape(format!(
                "conv block {}: map {h}x{w} smaller than {k}x{k} kernel",
                b + 1
            )));
        }
        h = h - k + 1;
        w = w - k + 1;
        if h < p || w < p {
            return Err(ModelError::Shape(format!(
                "conv block {}: map {h}x{w} smaller than {p}x{p} pool",
                b + 1
            )));
        }
        h /= p;
        w /= p;
    }
    Ok((h, w))
}

fn last_valid_states(hidden: &SeqBatch) -> Mat {
    let mut out = Mat::zeros(hidden.b, hidden.f);
    for b in 0..hidden.b {
        let t = hidden.lengths[b] - 1;
        out.row_mut(b).copy_from_slice(hidden.at(b, t));
    }
    out
}

fn last_valid_states_backward(hidden: &SeqBatch, dctx: &Mat) -> SeqBatch {
    let mut data = vec![0.0; hidden.b * hidden.t * hidden.f];
    for b in 0..hidden.b {
        let t = hidden.lengths[b] - 1;
        let at = (b * hidden.t + t) * hidden.f;
        data[at..at + hidden.f].copy_from_slice(dctx.row(b));
    }
    SeqBatch::new(hidden.b, hidden.t, hidden.f, data, hidden.lengths.clone())
}

/// [B, T, F] sequence batch viewed as [B, 1, T0, F] maps; `fixed_t` pads or
/// truncates the time axis (the CNN head needs a fixed size).
fn seq_to_maps(batch: &SeqBatch, fixed_t: Option<usize>) -> MapBatch {
    let t0 = fixed_t.unwrap_or(batch.t);
    let mut maps = MapBatch::zeros(batch.b, 1, t0, batch.f);
    for b in 0..batch.b {
        for t in 0..batch.lengths[b].min(t0) {
            let src = batch.at(b, t);
            let at = maps.idx(b, 0, t, 0);
            maps.data[at..at + batch.f].copy_from_slice(src);
        }
    }
    maps
}

fn forward_block_train(block: &mut ConvBlock, x: &MapBatch) -> Result<(MapBatch, BlockCache)> {
    let (c_out, conv_cache) = block.conv.forward(x)?;
    let (normed, bn_cache) = block.bn.forward_maps_train(&c_out)?;
    let (activated, relu_mask) = relu_maps(&normed);
    let (pooled, pool_cache) = block.pool.forward(&activated)?;
    Ok((pooled, BlockCache { conv: conv_cache, bn: bn_cache, relu_mask, pool: pool_cache }))
}

fn forward_block_eval(block: &ConvBlock, x: &MapBatch) -> Result<MapBatch> {
    let (c_out, _) = block.conv.forward(x)?;
    let normed = block.bn.forward_maps_eval(&c_out)?;
    let (activated, _) = relu_maps(&normed);
    Ok(block.pool.forward(&activated)?.0)
}

fn backward_block(block: &mut ConvBlock, cache: &BlockCache, dy: &MapBatch) -> MapBatch {
    let dact = block.pool.backward(&cache.pool, dy);
    let dnorm = relu_maps_backward(&dact, &cache.relu_mask);
    let dconv = block.bn.backward_maps(&cache.bn, &dnorm);
    block.conv.backward(&cache.conv, &dconv)
}

/// Conv maps [B, C, T', W'] reshaped into a time-major sequence
/// [B, T', C*W'], carrying the shrunken valid lengths along.
fn maps_to_seq(x: &MapBatch, lengths: &[usize], k: usize, p: usize) -> SeqBatch {
    let f = x.c * x.w;
    let mut data = vec![0.0; x.b * x.h * f];
    for b in 0..x.b {
        for t in 0..x.h {
            for c in 0..x.c {
                for w in 0..x.w {
                    data[(b * x.h + t) * f + c * x.w + w] = x.data[x.idx(b, c, t, w)];
                }
            }
        }
    }
    let new_lengths: Vec<usize> = lengths
        .iter()
        .map(|&l| (l.saturating_sub(k - 1).max(1) / p).clamp(1, x.h))
        .collect();
    SeqBatch::new(x.b, x.h, f, data, new_lengths)
}

/// Inverse reshape for the gradient: [B, T', C*W'] back to [B, C, T', W'].
fn seq_grad_to_maps(dseq: &SeqBatch, dims: (usize, usize, usize, usize)) -> MapBatch {
    let (b_n, c_n, h_n, w_n) = dims;
    let mut out = MapBatch::zeros(b_n, c_n, h_n, w_n);
    for b in 0..b_n {
        for t in 0..h_n {
            let row = dseq.at(b, t);
            for c in 0..c_n {
                for w in 0..w_n {
                    let at = out.idx(b, c, t, w);
                    out.data[at] = row[c * w_n + w];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::bce_loss;

    fn random_batch(b: usize, t: usize, f: usize, seed: u64) -> SeqBatch {
        let mut rng = seeded_rng(seed);
        use rand::Rng;
        let data = (0..b * t * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SeqBatch::new(b, t, f, data, vec![t; b])
    }

    fn labels(b: usize) -> Vec<f64> {
        (0..b).map(|i| f64::from(i as u32 % 2)).collect()
    }

    /// Central-difference gradient check through the full loss for every
    /// optimized parameter of a network.
    fn grad_check(kind: ModelKind, t: usize, f: usize) -> f64 {
        let mut config = ModelConfig::new(kind).with_seed(11);
        config.hidden_units = 6;
        config.attention_dim = 4;
        config.conv_filters = (2, 3);
        config.dropout = 0.0; // deterministic loss surface for the check
        let mut net = Network::build(&config, (t, f)).unwrap();
        let batch = random_batch(3, t, f, 99);
        let y = labels(3);

        let mut rng = seeded_rng(1);
        net.zero_grads();
        let (probs, cache) = net.forward_train(&batch, &mut rng).unwrap();
        let (_, dprobs) = bce_loss(&probs, &y).unwrap();
        net.backward(&cache, &dprobs).unwrap();
        let grads = net.grad_tensors();

        // Batch-norm running stats shift every forward call; the loss as a
        // function of parameters is defined by the batch statistics, which
        // the FD probe reproduces because each probe call uses the same batch.
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        let n_tensors = grads.len();
        for ti in 0..n_tensors {
            let n = grads[ti].len();
            // probe a handful of coordinates per tensor
            let stride = (n / 7).max(1);
            for i in (0..n).step_by(stride) {
                let orig = net.param_tensors_mut()[ti].data()[i];
                net.param_tensors_mut()[ti].data_mut()[i] = orig + h;
                let (p_up, _) = net.forward_train(&batch, &mut seeded_rng(1)).unwrap();
                let (l_up, _) = bce_loss(&p_up, &y).unwrap();
                net.param_tensors_mut()[ti].data_mut()[i] = orig - h;
                let (p_dn, _) = net.forward_train(&batch, &mut seeded_rng(1)).unwrap();
                let (l_dn, _) = bce_loss(&p_dn, &y).unwrap();
                net.param_tensors_mut()[ti].data_mut()[i] = orig;
                let fd = (l_up - l_dn) / (2.0 * h);
                let an = grads[ti].data()[i];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                worst = worst.max((fd - an).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn gradcheck_simple_rnn() {
        let worst = grad_check(ModelKind::SimpleRnn, 8, 5);
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn gradcheck_rnn_attention() {
        let worst = grad_check(ModelKind::RnnAttention, 8, 5);
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn gradcheck_lstm() {
        let worst = grad_check(ModelKind::Lstm, 8, 5);
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn gradcheck_lstm_attention() {
        let worst = grad_check(ModelKind::LstmAttention, 8, 5);
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn gradcheck_cnn() {
        let worst = grad_check(ModelKind::Cnn, 16, 16);
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn gradcheck_hybrid() {
        let worst = grad_check(ModelKind::HybridCnnLstm, 10, 9);
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn parameter_count_follows_construction_formula() {
        let mut config = ModelConfig::new(ModelKind::SimpleRnn).with_seed(0);
        config.hidden_units = 64;
        let net = Network::build(&config, (98, 89)).unwrap();
        // H*F + H*H + H + (H + 1)
        let expected = 64 * 89 + 64 * 64 + 64 + 65;
        assert_eq!(net.param_count(), expected);
        assert_eq!(expected, 9_921);

        let mut config = ModelConfig::new(ModelKind::Lstm).with_seed(0);
        config.hidden_units = 64;
        let net = Network::build(&config, (98, 89)).unwrap();
        let expected = 4 * (64 * 89 + 64 * 64 + 64) + 65;
        assert_eq!(net.param_count(), expected);
    }

    #[test]
    fn same_config_and_seed_build_identical_parameters() {
        let config = ModelConfig::new(ModelKind::Lstm).with_seed(21);
        let a = Network::build(&config, (20, 10)).unwrap();
        let b = Network::build(&config, (20, 10)).unwrap();
        for (x, y) in a.state_tensors().into_iter().zip(b.state_tensors()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn zero_weight_head_predicts_half() {
        let mut config = ModelConfig::new(ModelKind::SimpleRnn).with_seed(3);
        config.hidden_units = 4;
        let mut net = Network::build(&config, (6, 3)).unwrap();
        // zero the head
        let n = net.param_tensors_mut().len();
        for idx in [n - 2, n - 1] {
            net.param_tensors_mut()[idx].fill(0.0);
        }
        let seq = Mat::from_rows(vec![vec![0.5, -0.5, 0.2]; 6]);
        let p = net.predict_one(&seq).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn dropout_rate_zero_train_equals_eval() {
        let mut config = ModelConfig::new(ModelKind::SimpleRnn).with_seed(7);
        config.hidden_units = 5;
        config.dropout = 0.0;
        let mut net = Network::build(&config, (6, 3)).unwrap();
        let batch = random_batch(2, 6, 3, 4);
        let (probs, _) = net.forward_train(&batch, &mut seeded_rng(9)).unwrap();
        for b in 0..2 {
            let seq = Mat::from_flat(6, 3, (0..6 * 3).map(|i| batch.at(b, i / 3)[i % 3]).collect());
            let p = net.predict_one(&seq).unwrap();
            // batch norm is absent in this family, so train == eval exactly
            assert!((p - probs[b]).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_stack_too_small_is_shape_error() {
        let config = ModelConfig::new(ModelKind::Cnn).with_seed(0);
        assert!(matches!(Network::build(&config, (5, 5)), Err(ModelError::Shape(_))));
    }

    #[test]
    fn masked_padding_does_not_change_recurrent_outputs() {
        let mut config = ModelConfig::new(ModelKind::LstmAttention).with_seed(13);
        config.hidden_units = 5;
        config.dropout = 0.0;
        let mut net = Network::build(&config, (10, 3)).unwrap();
        // one real sequence of length 6, padded to 10
        let mut rng = seeded_rng(40);
        use rand::Rng;
        let real: Vec<f64> = (0..6 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut padded = real.clone();
        padded.extend(vec![0.0; 4 * 3]);
        let batch2 = SeqBatch::new(
            2,
            10,
            3,
            padded.iter().chain(padded.iter()).copied().collect(),
            vec![6, 6],
        );
        let (p_padded, _) = net.forward_train(&batch2, &mut seeded_rng(5)).unwrap();
        let seq = Mat::from_flat(6, 3, real);
        let p_tight = net.predict_one(&seq).unwrap();
        assert!((p_padded[0] - p_tight).abs() < 1e-9, "{} vs {p_tight}", p_padded[0]);
    }
}
