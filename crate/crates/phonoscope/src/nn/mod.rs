//! Minimal deterministic tensor math with hand-written reverse-mode
//! gradients: the layer set needed by the classifier families, plus Adam,
//! binary cross-entropy, dropout, and batch normalization.
//!
//! Design notes:
//! * everything is f64 — central-difference gradient checks at step 1e-4
//!   need more headroom than single precision offers;
//! * layers own their parameters and expose explicit
//!   `forward`/`backward` pairs with typed caches rather than a tape;
//! * all randomness (init, dropout) flows through caller-provided seeded RNGs,
//!   so a `(config, seed)` pair reproduces training bit for bit.

pub mod layers;
mod linalg;
mod loss;
mod optim;
mod serialize;
mod tensor;

pub use layers::{
    AdditiveAttention, BatchNorm, Conv2d, Dense, Dropout, Lstm, MaxPool2d, Mode, SimpleRnn,
};
pub use linalg::{matmul, matmul_abt, matmul_atb};
pub use loss::bce_loss;
pub use optim::{Adam, AdamConfig};
pub use serialize::{read_tensor, write_tensor, ByteReader};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {layer}: {detail}")]
    Shape { layer: &'static str, detail: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("batch normalization needs a batch of >= 2 in train mode")]
    DegenerateBatch,
    #[error("label {0} outside {{0, 1}}")]
    Label(f64),
    #[error("serialized model: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// A batch of equal-length sequences, row-major `[batch][time][feature]`,
/// with per-sequence valid lengths (padding sits at the tail).
#[derive(Debug, Clone)]
pub struct SeqBatch {
    pub b: usize,
    pub t: usize,
    pub f: usize,
    pub data: Vec<f64>,
    pub lengths: Vec<usize>,
}

impl SeqBatch {
    pub fn new(b: usize, t: usize, f: usize, data: Vec<f64>, lengths: Vec<usize>) -> Self {
        assert_eq!(data.len(), b * t * f);
        assert_eq!(lengths.len(), b);
        assert!(lengths.iter().all(|&l| l >= 1 && l <= t));
        Self { b, t, f, data, lengths }
    }

    pub fn step(&self, t: usize) -> impl Iterator<Item = &[f64]> {
        (0..self.b).map(move |b| {
            let at = (b * self.t + t) * self.f;
            &self.data[at..at + self.f]
        })
    }

    pub fn at(&self, b: usize, t: usize) -> &[f64] {
        let at = (b * self.t + t) * self.f;
        &self.data[at..at + self.f]
    }
}

/// A batch of 1-channel or multi-channel 2-D maps, `[batch][channel][h][w]`.
#[derive(Debug, Clone)]
pub struct MapBatch {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl MapBatch {
    pub fn zeros(b: usize, c: usize, h: usize, w: usize) -> Self {
        Self { b, c, h, w, data: vec![0.0; b * c * h * w] }
    }

    pub fn idx(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.c + c) * self.h + y) * self.w + x
    }
}
