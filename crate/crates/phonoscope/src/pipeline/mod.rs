//! Batch pipeline surface: a run directory of versioned artifacts driven by
//! one TOML config and one root seed.
//!
//! Stages write their outputs under the run directory and append to
//! `manifest.txt` (config hash, seeds, input/output checksums), so re-running
//! a stage with the same config and seed reproduces its artifacts byte for
//! byte. Stage order is enforced through the files themselves: a stage whose
//! inputs are missing reports a dependency error naming the artifact.

mod artifacts;
mod commands;
mod config;

pub use artifacts::{load_feature_matrix, load_study_samples, ScalingRow};
pub use commands::{
    init_workers,
    cmd_augment, cmd_compare, cmd_evaluate, cmd_explain, cmd_features, cmd_ingest,
    cmd_preprocess, cmd_report, cmd_synth_corpus, cmd_train, CompareReport, IngestReport,
    TrainReport,
};
pub use config::{Config, SynthSection};

use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: missing required artifact `{missing}` (run the producing stage first)")]
    Dependency { stage: &'static str, missing: String },
    #[error("data: {0}")]
    Data(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
    #[error(transparent)]
    Feature(#[from] crate::spectral::FeatureError),
    #[error(transparent)]
    Scaling(#[from] crate::scaling::ScalingError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Experiment(#[from] crate::experiments::ExperimentError),
    #[error(transparent)]
    Explain(#[from] crate::explain::ExplainError),
}

impl PipelineError {
    /// Categorized exit status for the command-line surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Dependency { .. } => 3,
            PipelineError::Data(_) | PipelineError::Audio(_) => 4,
            PipelineError::Preprocess(_)
            | PipelineError::Feature(_)
            | PipelineError::Scaling(_)
            | PipelineError::Augment(_)
            | PipelineError::Model(_)
            | PipelineError::Experiment(_)
            | PipelineError::Explain(_) => 5,
            PipelineError::Io { .. } => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes)
        .map_err(|e| PipelineError::Io { path: path.display().to_string(), source: e })
}

pub(crate) fn read_file(path: &Path, stage: &'static str) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(PipelineError::Dependency {
            stage,
            missing: path.display().to_string(),
        });
    }
    std::fs::read(path)
        .map_err(|e| PipelineError::Io { path: path.display().to_string(), source: e })
}

pub(crate) fn sha16(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A run directory bound to an effective configuration.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: Config,
    pub run_dir: PathBuf,
    config_hash: String,
}

impl RunContext {
    /// Creates (or reuses) the run directory and dumps the effective config.
    pub fn create(config: Config, run_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(run_dir).map_err(|e| PipelineError::Io {
            path: run_dir.display().to_string(),
            source: e,
        })?;
        let rendered = config.to_toml();
        let config_hash = sha16(rendered.as_bytes());
        write_file(&run_dir.join("config.toml"), rendered.as_bytes())?;
        Ok(Self { config, run_dir: run_dir.to_path_buf(), config_hash })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    /// Provenance comment line stamped at the top of generated CSV artifacts.
    pub fn provenance(&self) -> String {
        format!("# config_hash={} root_seed={}\n", self.config_hash, self.config.seed)
    }

    /// Writes a CSV artifact with the provenance line prepended.
    pub fn write_csv(&self, rel: &str, body: &str) -> Result<()> {
        let mut text = self.provenance();
        text.push_str(body);
        write_file(&self.path(rel), text.as_bytes())
    }

    /// Appends one structured line to the run manifest.
    pub fn append_manifest(
        &self,
        stage: &str,
        stage_seed: u64,
        inputs: &[(String, String)],
        outputs: &[(String, String)],
    ) -> Result<()> {
        let fmt = |pairs: &[(String, String)]| {
            pairs.iter().map(|(p, h)| format!("{p}:{h}")).collect::<Vec<_>>().join(";")
        };
        let line = format!(
            "stage={stage} config_hash={} root_seed={} stage_seed={stage_seed} version={} inputs=[{}] outputs=[{}]\n",
            self.config_hash,
            self.config.seed,
            env!("CARGO_PKG_VERSION"),
            fmt(inputs),
            fmt(outputs),
        );
        let path = self.path("manifest.txt");
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| PipelineError::Io { path: path.display().to_string(), source: e })?;
        f.write_all(line.as_bytes())
            .map_err(|e| PipelineError::Io { path: path.display().to_string(), source: e })
    }

    /// Hash an artifact that was just written, for the manifest record.
    pub fn artifact_entry(&self, rel: &str) -> Result<(String, String)> {
        let bytes = read_file(&self.path(rel), "manifest")?;
        Ok((rel.to_string(), sha16(&bytes)))
    }
}
