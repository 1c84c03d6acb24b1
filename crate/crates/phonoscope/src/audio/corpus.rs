//! Manifest-driven corpus loading.
//!
//! A corpus is a directory of WAV files plus a CSV manifest with the header
//! `path,speaker_id,sex,label,phonation_type`. The manifest is explicit
//! rather than inferred from directory layout; recording collections vary too
//! much for inference to be safe.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use super::{decode_wav, AudioClip, AudioError, Result};

pub const MANIFEST_HEADER: &str = "path,speaker_id,sex,label,phonation_type";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sex {
    Male,
    Female,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Male => "M",
            Sex::Female => "F",
        })
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub relative_path: String,
    pub speaker_id: String,
    pub sex: Sex,
    /// true = nodule, false = normal
    pub label: bool,
    pub phonation_type: String,
}

/// Parsed, validated corpus manifest.
#[derive(Debug, Clone, Default)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    /// Validates the closed label set and path uniqueness.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.relative_path.clone()) {
                return Err(AudioError::Manifest(format!(
                    "duplicate path `{}`",
                    e.relative_path
                )));
            }
        }
        Ok(Self { entries })
    }
}

/// A classification unit: one clip with its label and provenance.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub clip: AudioClip,
    /// 0 = normal, 1 = nodule
    pub label: u8,
    pub speaker_id: String,
    pub augmented: bool,
}

fn parse_label(s: &str) -> Result<bool> {
    match s {
        "normal" => Ok(false),
        "nodule" => Ok(true),
        other => Err(AudioError::Manifest(format!(
            "label `{other}` not in {{normal, nodule}}"
        ))),
    }
}

fn parse_sex(s: &str) -> Result<Sex> {
    match s {
        "M" => Ok(Sex::Male),
        "F" => Ok(Sex::Female),
        other => Err(AudioError::Manifest(format!("sex `{other}` not in {{M, F}}"))),
    }
}

/// Reads a manifest CSV.
pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| AudioError::Manifest(format!("{}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| AudioError::Manifest(e.to_string()))?;
        let got = headers.iter().collect::<Vec<_>>().join(",");
        if got != MANIFEST_HEADER {
            return Err(AudioError::Manifest(format!(
                "header `{got}` does not match `{MANIFEST_HEADER}`"
            )));
        }
    }
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AudioError::Manifest(e.to_string()))?;
        if record.len() != 5 {
            return Err(AudioError::Manifest(format!(
                "row {:?} has {} fields, expected 5",
                record,
                record.len()
            )));
        }
        entries.push(ManifestEntry {
            relative_path: record[0].to_string(),
            speaker_id: record[1].to_string(),
            sex: parse_sex(&record[2])?,
            label: parse_label(&record[3])?,
            phonation_type: record[4].to_string(),
        });
    }
    CorpusManifest::new(entries)
}

/// Writes a manifest CSV.
pub fn write_manifest(path: &Path, manifest: &CorpusManifest) -> Result<()> {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for e in &manifest.entries {
        let label = if e.label { "nodule" } else { "normal" };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.relative_path, e.speaker_id, e.sex, label, e.phonation_type
        ));
    }
    std::fs::write(path, out).map_err(|e| AudioError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// A loaded corpus with its per-class counts.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub samples: Vec<LabeledSample>,
    pub n_normal: usize,
    pub n_nodule: usize,
}

/// Loads every manifest entry from `root`, in manifest order.
///
/// Missing files are not skipped: the error enumerates all of them.
pub fn load_corpus(root: &Path, manifest: &CorpusManifest) -> Result<LoadedCorpus> {
    let missing: Vec<String> = manifest
        .entries
        .iter()
        .filter(|e| !root.join(&e.relative_path).is_file())
        .map(|e| e.relative_path.clone())
        .collect();
    if !missing.is_empty() {
        return Err(AudioError::MissingFiles(missing));
    }

    let mut samples = Vec::with_capacity(manifest.entries.len());
    let (mut n_normal, mut n_nodule) = (0usize, 0usize);
    for e in &manifest.entries {
        let path = root.join(&e.relative_path);
        let bytes = std::fs::read(&path).map_err(|err| AudioError::Io {
            path: path.display().to_string(),
            source: err,
        })?;
        let mut clip = decode_wav(&bytes)?;
        clip.source_id = e.relative_path.clone();
        if e.label {
            n_nodule += 1;
        } else {
            n_normal += 1;
        }
        samples.push(LabeledSample {
            clip,
            label: u8::from(e.label),
            speaker_id: e.speaker_id.clone(),
            augmented: false,
        });
    }
    Ok(LoadedCorpus { samples, n_normal, n_nodule })
}

/// Per-class counts of a sample list: (normal, nodule).
pub fn class_counts(samples: &[LabeledSample]) -> (usize, usize) {
    let nodule = samples.iter().filter(|s| s.label == 1).count();
    (samples.len() - nodule, nodule)
}
