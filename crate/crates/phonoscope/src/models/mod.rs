//! The classifier families: simple RNN, RNN with attention, LSTM, LSTM with
//! attention, CNN, hybrid CNN-LSTM — all built on [`crate::nn`] — plus an
//! SMO-trained SVM over time-pooled feature vectors. One uniform
//! train/predict surface covers all of them.

mod container;
mod network;
mod svm;

pub use container::{load_model, save_model};
pub use network::{Network, TrainCache};
pub use svm::{kkt_satisfied, svm_decision, svm_predict, svm_train, SvmModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::Standardizer;
use crate::util::Mat;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error("shape: {0}")]
    Shape(String),
    #[error("pooling needs at least 2 frames, got {0}")]
    InsufficientFrames(usize),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("SMO did not converge within {iterations} iterations (worst KKT violation {violation:.3e})")]
    Convergence { iterations: usize, violation: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("model container: {0}")]
    Container(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// The classifier families under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    SimpleRnn,
    RnnAttention,
    Lstm,
    LstmAttention,
    Cnn,
    HybridCnnLstm,
    Svm,
}

impl ModelKind {
    /// The six families reported in the headline comparison table.
    pub const STUDY_SET: [ModelKind; 6] = [
        ModelKind::SimpleRnn,
        ModelKind::RnnAttention,
        ModelKind::Lstm,
        ModelKind::LstmAttention,
        ModelKind::Svm,
        ModelKind::Cnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SimpleRnn => "simple_rnn",
            ModelKind::RnnAttention => "rnn_attention",
            ModelKind::Lstm => "lstm",
            ModelKind::LstmAttention => "lstm_attention",
            ModelKind::Cnn => "cnn",
            ModelKind::HybridCnnLstm => "hybrid_cnn_lstm",
            ModelKind::Svm => "svm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "simple_rnn" => ModelKind::SimpleRnn,
            "rnn_attention" => ModelKind::RnnAttention,
            "lstm" => ModelKind::Lstm,
            "lstm_attention" => ModelKind::LstmAttention,
            "cnn" => ModelKind::Cnn,
            "hybrid_cnn_lstm" => ModelKind::HybridCnnLstm,
            "svm" => ModelKind::Svm,
            _ => return None,
        })
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvmKernel {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: SvmKernel,
    /// RBF width; `None` defaults to 1/F at train time.
    pub gamma: Option<f64>,
    /// KKT tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, kernel: SvmKernel::Rbf, gamma: None, tol: 1e-3, max_iter: 20_000 }
    }
}

/// Architecture and training hyperparameters. A config plus a seed fully
/// determines the parameter count and the trained weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_units: usize,
    pub n_recurrent_layers: usize,
    pub attention_dim: usize,
    pub conv_filters: (usize, usize),
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub svm: SvmParams,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            hidden_units: 64,
            n_recurrent_layers: 1,
            attention_dim: 32,
            conv_filters: (8, 16),
            kernel_size: 3,
            pool_size: 2,
            dropout: 0.3,
            lr: 2e-3,
            batch_size: 16,
            max_epochs: 24,
            patience: 4,
            min_delta: 1e-4,
            seed: 0,
            svm: SvmParams::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Borrowed views of one sample's features: the per-frame sequence (scaling
/// columns already appended when enabled) and the time-pooled vector.
#[derive(Debug, Clone, Copy)]
pub struct FeatureView<'a> {
    pub sequence: &'a Mat,
    pub pooled: &'a [f64],
}

/// Time-pooling for the stateless SVM: per-column mean and population SD over
/// frames (length 2F), plus the two scaling exponents when present.
pub fn pool_for_svm(features: &Mat, scaling: Option<(f64, f64)>) -> Result<Vec<f64>> {
    let t = features.rows();
    if t < 2 {
        return Err(ModelError::InsufficientFrames(t));
    }
    let f = features.cols();
    let mut out = Vec::with_capacity(2 * f + 2);
    for c in 0..f {
        let mut s = 0.0;
        for r in 0..t {
            s += features.get(r, c);
        }
        out.push(s / t as f64);
    }
    for c in 0..f {
        let m = out[c];
        let mut ss = 0.0;
        for r in 0..t {
            let d = features.get(r, c) - m;
            ss += d * d;
        }
        out.push((ss / t as f64).sqrt());
    }
    if let Some((hurst, holder)) = scaling {
        out.push(hurst);
        out.push(holder);
    }
    Ok(out)
}

/// A trained classifier: the learned parameters plus the train-split
/// standardizer it expects its inputs to pass through.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Neural { network: Network, standardizer: Standardizer },
    Svm { model: SvmModel, standardizer: Standardizer },
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Neural { network, .. } => network.kind,
            TrainedModel::Svm { .. } => ModelKind::Svm,
        }
    }

    /// Probability of the nodule class for one sample.
    pub fn predict_proba(&self, view: FeatureView<'_>) -> Result<f64> {
        match self {
            TrainedModel::Neural { network, standardizer } => {
                let standardized = standardizer.apply(view.sequence);
                network.predict_one(&standardized)
            }
            TrainedModel::Svm { model, standardizer } => {
                let row = Mat::from_rows(vec![view.pooled.to_vec()]);
                let std_row = standardizer.apply(&row);
                let (_, margin) = svm_predict(model, std_row.row(0));
                // squash the margin so the uniform loss accounting applies
                Ok(1.0 / (1.0 + (-margin).exp()))
            }
        }
    }

    /// Hard 0/1 prediction at the 0.5 threshold.
    pub fn predict(&self, view: FeatureView<'_>) -> Result<u8> {
        Ok(u8::from(self.predict_proba(view)? >= 0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_of_constant_column() {
        let m = Mat::from_rows(vec![vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 3.0]]);
        let v = pool_for_svm(&m, None).unwrap();
        assert_eq!(v.len(), 4);
        assert!((v[0] - 3.0).abs() < 1e-12); // mean of constant
        assert!(v[2].abs() < 1e-12); // sd of constant
    }

    #[test]
    fn pooled_length_with_exponents() {
        let m = Mat::zeros(5, 89);
        let v = pool_for_svm(&m, Some((0.9, 1.1))).unwrap();
        assert_eq!(v.len(), 180);
        assert_eq!(v[178], 0.9);
        assert_eq!(v[179], 1.1);
    }

    #[test]
    fn pooling_is_frame_order_invariant() {
        let a = Mat::from_rows(vec![vec![1.0, -2.0], vec![5.0, 0.5], vec![-3.0, 4.0]]);
        let b = Mat::from_rows(vec![vec![5.0, 0.5], vec![-3.0, 4.0], vec![1.0, -2.0]]);
        let va = pool_for_svm(&a, None).unwrap();
        let vb = pool_for_svm(&b, None).unwrap();
        for (x, y) in va.iter().zip(&vb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_frame_rejected() {
        let m = Mat::zeros(1, 4);
        assert!(matches!(pool_for_svm(&m, None), Err(ModelError::InsufficientFrames(1))));
    }
}
