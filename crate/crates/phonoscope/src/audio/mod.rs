//! Audio ingestion: WAV decode/encode, resampling, corpora, and synthesis.

mod corpus;
mod resample;
mod synth;
mod wav;

pub use corpus::{
    class_counts, load_corpus, read_manifest, write_manifest, CorpusManifest, LabeledSample,
    ManifestEntry, Sex,
};
pub use resample::{resample, resample_ratio, MAX_RATE_HZ, MIN_RATE_HZ};
pub use synth::{synthesize_phonation, SynthesisParams};
pub use wav::{decode_wav, encode_wav};

use thiserror::Error;

/// Canonical internal sample rate. Corpora are resampled here before
/// preprocessing; the features in use carry no diagnostic content above 8 kHz.
pub const CANONICAL_RATE_HZ: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    Format(String),
    #[error("unsupported WAV: {field} = {value} ({detail})")]
    Unsupported {
        field: &'static str,
        value: String,
        detail: &'static str,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("corpus manifest: {0}")]
    Manifest(String),
    #[error("missing corpus files: {}", .0.join(", "))]
    MissingFiles(Vec<String>),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// A mono sampled waveform in [-1, 1] with its rate and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    /// Builds a clip, checking the sample invariants: nonempty, finite,
    /// within [-1, 1], positive rate.
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AudioError::Parameter("sample_rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(AudioError::Parameter("clip has no samples".into()));
        }
        for (i, &s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(AudioError::Parameter(format!("non-finite sample at index {i}")));
            }
            if s.abs() > 1.0 + 1e-9 {
                return Err(AudioError::Parameter(format!(
                    "sample {s} at index {i} outside [-1, 1]"
                )));
            }
        }
        Ok(Self { samples, sample_rate, source_id: source_id.into() })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()))
    }

    /// Mean power of the waveform.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}
