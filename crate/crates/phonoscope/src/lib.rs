//! Voice-nodule screening from sustained phonation recordings.
//!
//! The crate covers the full study pipeline:
//!
//! * [`audio`] — WAV decode/encode, band-limited resampling, manifest-driven
//!   corpus loading, and a controllable phonation synthesizer for desk-scale
//!   experiments.
//! * [`preprocess`] — signal conditioning: high-pass noise filtering, silence
//!   trimming, amplitude normalization, framing, and outlier removal.
//! * [`spectral`] — STFT power spectra, log-mel spectrograms, MFCCs, and
//!   chroma features with a train-split-only standardizer.
//! * [`scaling`] — Hurst exponent via detrended fluctuation analysis and
//!   windowed Hölder exponents via oscillation scaling.
//! * [`augment`] — class-balancing augmentation: pitch shift, time stretch,
//!   and calibrated Gaussian noise.
//! * [`nn`] — a minimal deterministic tensor library with hand-written
//!   reverse-mode gradients, Adam, binary cross-entropy, dropout, and batch
//!   normalization.
//! * [`models`] — the classifier families built on [`nn`] (simple RNN, RNN
//!   with attention, LSTM, LSTM with attention, CNN, hybrid CNN-LSTM) plus an
//!   SMO-trained SVM baseline.
//! * [`experiments`] — stratified splitting, k-fold CV, early-stopped
//!   training, grid search, metrics, repeated-run statistics, and pairwise
//!   model comparison (t-tests, Cohen's d).
//! * [`explain`] — permutation feature importance over trained models.
//! * [`pipeline`] — the batch command surface (config file, run directory,
//!   reproducibility manifest) behind the `phonoscope` binary.
//!
//! Every stochastic step is seeded from a single root seed; see
//! [`util::mix_seed`] for the mixing rule. Identical configuration and seed
//! reproduce every artifact byte for byte.

pub mod audio;
pub mod augment;
pub mod experiments;
pub mod explain;



pub mod models;
pub mod nn;
pub mod pipeline;

pub mod preprocess;
pub mod scaling;
pub mod spectral;
pub mod util;
