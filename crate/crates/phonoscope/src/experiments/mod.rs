//! The evaluation machinery: stratified splitting, k-fold CV, early-stopped
//! training, grid search, metrics, repeated-run statistics, and pairwise
//! model comparison.

mod metrics;
mod report;
mod runs;
mod split;
pub mod stats;
mod train;

pub use metrics::{evaluate, Metrics};
pub use report::{comparisons_csv, history_csv, runstats_csv};
pub use runs::{compare_all, expand_grid, grid_search, repeat_runs, GridCell, RunArtifacts, RunStats, StatComparison};
pub use split::{kfold_indices, stratified_split, Split, SplitSpec};
pub use stats::{
    cohens_d, cohens_d_summary, confidence_interval, normal_quantile, pooled_t,
    student_t_two_sided_p, welch_t, TTest,
};
pub use train::{train_model, EpochStats, TrainOutcome};

use thiserror::Error;

use crate::audio::{AudioClip, LabeledSample};
use crate::models::pool_for_svm;
use crate::preprocess::{condition_clip, PreprocessConfig};
use crate::scaling::{scaling_summary, ScalingConfig};
use crate::spectral::{extract_all, FeatureParams};
use crate::util::Mat;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("stratification: {0}")]
    Stratification(String),
    #[error("k-fold: {0}")]
    Fold(String),
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("grid search: {0}")]
    Grid(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Feature(#[from] crate::spectral::FeatureError),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
    #[error(transparent)]
    Scaling(#[from] crate::scaling::ScalingError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// The split-relevant facts about one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMeta {
    pub label: u8,
    pub speaker_id: String,
    pub augmented: bool,
}

/// One corpus clip with its extracted feature views.
#[derive(Debug, Clone)]
pub struct StudySample {
    pub audio: LabeledSample,
    /// Per-frame features; scaling-exponent columns appended when enabled.
    pub sequence: Mat,
    /// Time-pooled vector for the stateless SVM.
    pub pooled: Vec<f64>,
}

impl StudySample {
    pub fn meta(&self) -> SampleMeta {
        SampleMeta {
            label: self.audio.label,
            speaker_id: self.audio.speaker_id.clone(),
            augmented: self.audio.augmented,
        }
    }

    pub fn view(&self) -> crate::models::FeatureView<'_> {
        crate::models::FeatureView { sequence: &self.sequence, pooled: &self.pooled }
    }
}

/// The clip-to-features path used everywhere a clip enters the study:
/// conditioning, spectral extraction, optional scaling exponents, pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    pub preprocess: PreprocessConfig,
    pub features: FeatureParams,
    /// `Some` appends hurst/holder columns to sequences and pooled vectors.
    pub scaling: Option<ScalingConfig>,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            features: FeatureParams::default(),
            scaling: Some(ScalingConfig::default()),
        }
    }
}

impl FeatureExtractor {
    /// Extracts `(sequence, pooled)` views from a raw clip.
    pub fn extract(&self, clip: &AudioClip) -> Result<(Mat, Vec<f64>)> {
        let conditioned = condition_clip(clip, &self.preprocess)?;
        let bundle = extract_all(&conditioned, &self.preprocess.framing, &self.features)?;
        let base = bundle.combined.data;
        match &self.scaling {
            Some(cfg) => {
                let summary = scaling_summary(&conditioned, cfg)?;
                let sequence = crate::scaling::append_scaling_columns(&base, &summary);
                let pooled = pool_for_svm(&base, Some((summary.hurst, summary.holder_mean)))?;
                Ok((sequence, pooled))
            }
            None => {
                let pooled = pool_for_svm(&base, None)?;
                Ok((base, pooled))
            }
        }
    }

    pub fn prepare(&self, sample: &LabeledSample) -> Result<StudySample> {
        let (sequence, pooled) = self.extract(&sample.clip)?;
        Ok(StudySample { audio: sample.clone(), sequence, pooled })
    }

    /// Column names of the sequence view.
    pub fn sequence_feature_names(&self) -> Vec<String> {
        crate::spectral::feature_names(
            self.features.n_mels,
            self.features.n_mfcc,
            self.scaling.is_some(),
        )
    }
}
