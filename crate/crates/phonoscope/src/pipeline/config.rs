//! Layered TOML configuration with strict schema checking: unknown keys are
//! rejected with an error naming the key. Every field has a default, so a
//! minimal file (or none at all) runs the reference pipeline.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::augment::{AugmentPolicy, Transform};
use crate::experiments::{FeatureExtractor, SplitSpec};
use crate::models::{ModelConfig, ModelKind, SvmKernel, SvmParams};
use crate::preprocess::{FramingParams, PreprocessConfig, WindowKind};
use crate::scaling::ScalingConfig;
use crate::spectral::FeatureParams;

use super::{PipelineError, Result};

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Root seed; every stage derives its randomness from this.
    pub seed: u64,
    /// Worker-thread cap for intra-stage parallelism; 0 = all cores.
    pub workers: usize,
    pub corpus: CorpusSection,
    pub synth: SynthSection,
    pub preprocess: PreprocessSection,
    pub features: FeaturesSection,
    pub scaling: ScalingSection,
    pub augment: AugmentSection,
    pub model: ModelSection,
    pub experiment: ExperimentSection,
    pub explain: ExplainSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            workers: 0,
            corpus: CorpusSection::default(),
            synth: SynthSection::default(),
            preprocess: PreprocessSection::default(),
            features: FeaturesSection::default(),
            scaling: ScalingSection::default(),
            augment: AugmentSection::default(),
            model: ModelSection::default(),
            experiment: ExperimentSection::default(),
            explain: ExplainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub root: String,
    pub manifest: String,
    pub canonical_rate_hz: u32,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { root: "corpus".into(), manifest: "manifest.csv".into(), canonical_rate_hz: 16_000 }
    }
}

/// Per-class synthesis parameter ranges. Classes overlap on purpose: drawing
/// each clip's jitter/shimmer/noise from a band keeps the corpus from being
/// trivially separable by any single global statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_clips: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub f0_male_hz: (f64, f64),
    pub f0_female_hz: (f64, f64),
    pub normal_jitter_pct: (f64, f64),
    pub normal_shimmer_pct: (f64, f64),
    pub normal_snr_db: (f64, f64),
    pub nodule_jitter_pct: (f64, f64),
    pub nodule_shimmer_pct: (f64, f64),
    pub nodule_snr_db: (f64, f64),
    pub n_harmonics: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n_clips: 200,
            duration_s: 1.0,
            sample_rate: 16_000,
            f0_male_hz: (100.0, 140.0),
            f0_female_hz: (180.0, 240.0),
            normal_jitter_pct: (0.2, 0.9),
            normal_shimmer_pct: (0.5, 2.5),
            normal_snr_db: (22.0, 32.0),
            nodule_jitter_pct: (0.9, 2.5),
            nodule_shimmer_pct: (2.5, 7.0),
            nodule_snr_db: (14.0, 24.0),
            n_harmonics: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub highpass_hz: f64,
    pub silence_threshold_db: f64,
    pub min_silence_ms: f64,
    pub target_peak: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub window: String,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            highpass_hz: 30.0,
            silence_threshold_db: -40.0,
            min_silence_ms: 100.0,
            target_peak: 0.99,
            frame_ms: 25.0,
            hop_ms: 10.0,
            window: "hann".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub floor: f64,
    pub ref_a4_hz: f64,
    pub include_scaling: bool,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        let p = FeatureParams::default();
        Self {
            n_fft: p.n_fft,
            n_mels: p.n_mels,
            n_mfcc: p.n_mfcc,
            fmin_hz: p.fmin_hz,
            fmax_hz: p.fmax_hz,
            floor: p.floor,
            ref_a4_hz: p.ref_a4_hz,
            include_scaling: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub dfa_min_scale: usize,
    pub holder_window_ms: f64,
    pub holder_hop_ms: f64,
}

impl Default for ScalingSection {
    fn default() -> Self {
        let c = ScalingConfig::default();
        Self {
            dfa_min_scale: c.dfa_min_scale,
            holder_window_ms: c.holder_window_ms,
            holder_hop_ms: c.holder_hop_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    /// Whether the training path balances classes after splitting.
    pub enabled: bool,
    pub tolerance: usize,
    pub semitones: Vec<f64>,
    pub stretches: Vec<f64>,
    pub snrs_db: Vec<f64>,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            enabled: true,
            tolerance: 0,
            semitones: vec![-2.0, -1.0, 1.0, 2.0],
            stretches: vec![0.9, 1.1],
            snrs_db: vec![20.0, 25.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: String,
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
    pub svm_c: f64,
    pub svm_kernel: String,
    pub svm_gamma: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::new(ModelKind::SimpleRnn);
        Self {
            kind: "simple_rnn".into(),
            hidden_units: c.hidden_units,
            n_recurrent_layers: c.n_recurrent_layers,
            attention_dim: c.attention_dim,
            conv_filters: c.conv_filters,
            kernel_size: c.kernel_size,
            pool_size: c.pool_size,
            dropout: c.dropout,
            lr: c.lr,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            patience: c.patience,
            min_delta: c.min_delta,
            svm_c: 1.0,
            svm_kernel: "rbf".into(),
            svm_gamma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub n_runs: usize,
    pub group_by_speaker: bool,
    pub kfold_k: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            train_ratio: 0.7,
            val_ratio: 0.15,
            test_ratio: 0.15,
            n_runs: 5,
            group_by_speaker: true,
            kfold_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainSection {
    pub n_repeats: usize,
    pub grouped: bool,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self { n_repeats: 10, grouped: false }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Canonical TOML rendering of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn window_kind(&self) -> Result<WindowKind> {
        match self.preprocess.window.as_str() {
            "hann" => Ok(WindowKind::Hann),
            "rectangular" => Ok(WindowKind::Rectangular),
            other => Err(PipelineError::Config(format!(
                "window `{other}` not in {{hann, rectangular}}"
            ))),
        }
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        Ok(PreprocessConfig {
            highpass_hz: self.preprocess.highpass_hz,
            silence_threshold_db: self.preprocess.silence_threshold_db,
            min_silence_ms: self.preprocess.min_silence_ms,
            target_peak: self.preprocess.target_peak,
            framing: FramingParams::new(
                self.preprocess.frame_ms,
                self.preprocess.hop_ms,
                self.window_kind()?,
            )
            .map_err(|e| PipelineError::Config(e.to_string()))?,
        })
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            n_fft: self.features.n_fft,
            n_mels: self.features.n_mels,
            n_mfcc: self.features.n_mfcc,
            fmin_hz: self.features.fmin_hz,
            fmax_hz: self.features.fmax_hz,
            floor: self.features.floor,
            ref_a4_hz: self.features.ref_a4_hz,
        }
    }

    pub fn scaling_config(&self) -> ScalingConfig {
        ScalingConfig {
            dfa_min_scale: self.scaling.dfa_min_scale,
            holder_window_ms: self.scaling.holder_window_ms,
            holder_hop_ms: self.scaling.holder_hop_ms,
        }
    }

    pub fn extractor(&self) -> Result<FeatureExtractor> {
        Ok(FeatureExtractor {
            preprocess: self.preprocess_config()?,
            features: self.feature_params(),
            scaling: self.features.include_scaling.then(|| self.scaling_config()),
        })
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.model.kind).ok_or_else(|| {
            PipelineError::Config(format!("model kind `{}` unknown", self.model.kind))
        })
    }

    pub fn model_config(&self, kind: ModelKind) -> Result<ModelConfig> {
        let kernel = match self.model.svm_kernel.as_str() {
            "rbf" => SvmKernel::Rbf,
            "linear" => SvmKernel::Linear,
            other => {
                return Err(PipelineError::Config(format!(
                    "svm kernel `{other}` not in {{linear, rbf}}"
                )))
            }
        };
        Ok(ModelConfig {
            kind,
            hidden_units: self.model.hidden_units,
            n_recurrent_layers: self.model.n_recurrent_layers,
            attention_dim: self.model.attention_dim,
            conv_filters: self.model.conv_filters,
            kernel_size: self.model.kernel_size,
            pool_size: self.model.pool_size,
            dropout: self.model.dropout,
            lr: self.model.lr,
            batch_size: self.model.batch_size,
            max_epochs: self.model.max_epochs,
            patience: self.model.patience,
            min_delta: self.model.min_delta,
            seed: 0,
            svm: SvmParams {
                c: self.model.svm_c,
                kernel,
                gamma: self.model.svm_gamma,
                ..SvmParams::default()
            },
        })
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.experiment.train_ratio,
            val: self.experiment.val_ratio,
            test: self.experiment.test_ratio,
            seed: 0,
            stratify: true,
            group_by_speaker: self.experiment.group_by_speaker,
        }
    }

    pub fn augment_policy(&self) -> Option<AugmentPolicy> {
        if !self.augment.enabled {
            return None;
        }
        let mut grid = Vec::new();
        for &s in &self.augment.semitones {
            grid.push(Transform::PitchShift(s));
        }
        for &f in &self.augment.stretches {
            grid.push(Transform::TimeStretch(f));
        }
        for &snr in &self.augment.snrs_db {
            grid.push(Transform::GaussianNoise(snr));
        }
        Some(AugmentPolicy { tolerance: self.augment.tolerance, grid })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_fills_defaults() {
        let cfg: Config = toml::from_str("seed = 3\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.features.n_mels, 64);
        assert_eq!(cfg.experiment.n_runs, 5);
    }

    #[test]
    fn unknown_key_named_in_error() {
        let err = toml::from_str::<Config>("sed = 3\n").unwrap_err().to_string();
        assert!(err.contains("sed"), "{err}");
        let err = toml::from_str::<Config>("[features]\nn_melz = 3\n").unwrap_err().to_string();
        assert!(err.contains("n_melz"), "{err}");
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = Config::default();
        let text = cfg.to_toml();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn kind_and_kernel_validation() {
        let mut cfg = Config::default();
        cfg.model.kind = "transformer".into();
        assert!(cfg.model_kind().is_err());
        cfg.model.kind = "lstm_attention".into();
        assert_eq!(cfg.model_kind().unwrap(), ModelKind::LstmAttention);
        cfg.model.svm_kernel = "poly".into();
        assert!(cfg.model_config(ModelKind::Svm).is_err());
    }
}
