//! File formats for intermediate artifacts: per-clip feature matrices,
//! the scaling summary table, and split records.

use std::collections::HashMap;
use std::path::Path;

use crate::audio::{decode_wav, read_manifest, LabeledSample};
use crate::experiments::StudySample;
use crate::models::pool_for_svm;
use crate::util::Mat;

use super::{read_file, PipelineError, Result, RunContext};

/// One row of `scaling.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub clip_id: String,
    pub hurst: f64,
    pub holder_mean: f64,
    pub fit_r2: f64,
    pub complement: f64,
    pub hurst_valid: bool,
}

pub const SCALING_HEADER: &str = "clip_id,hurst,holder_mean,fit_r2,complement,hurst_valid";

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from(SCALING_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.clip_id, r.hurst, r.holder_mean, r.fit_r2, r.complement, r.hurst_valid
        ));
    }
    out
}

pub fn parse_scaling_csv(text: &str) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() || line == SCALING_HEADER {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(PipelineError::Data(format!("scaling.csv line {}: `{line}`", i + 1)));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| PipelineError::Data(format!("bad number `{s}` in scaling.csv")))
        };
        rows.push(ScalingRow {
            clip_id: parts[0].to_string(),
            hurst: num(parts[1])?,
            holder_mean: num(parts[2])?,
            fit_r2: num(parts[3])?,
            complement: num(parts[4])?,
            hurst_valid: parts[5] == "true",
        });
    }
    Ok(rows)
}

/// Renders a feature matrix as delimited text: named header, one frame per row.
pub fn feature_csv(names: &[String], m: &Mat) -> String {
    assert_eq!(names.len(), m.cols());
    let mut out = names.join(",");
    out.push('\n');
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a feature CSV back into `(names, matrix)`.
pub fn parse_feature_csv(text: &str) -> Result<(Vec<String>, Mat)> {
    let mut names: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        match &names {
            None => names = Some(line.split(',').map(str::to_string).collect()),
            Some(header) => {
                let row: Vec<f64> = line
                    .split(',')
                    .map(|s| {
                        s.parse::<f64>().map_err(|_| {
                            PipelineError::Data(format!("bad number `{s}` in feature csv"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if row.len() != header.len() {
                    return Err(PipelineError::Data(format!(
                        "feature row has {} values, header has {}",
                        row.len(),
                        header.len()
                    )));
                }
                rows.push(row);
            }
        }
    }
    let names = names.ok_or_else(|| PipelineError::Data("empty feature csv".into()))?;
    if rows.is_empty() {
        return Err(PipelineError::Data("feature csv has no frames".into()));
    }
    Ok((names, Mat::from_rows(rows)))
}

pub fn clip_stem(relative_path: &str) -> String {
    Path::new(relative_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| relative_path.replace('/', "_"))
}

/// Loads one feature matrix from the run directory.
pub fn load_feature_matrix(ctx: &RunContext, clip_id: &str) -> Result<(Vec<String>, Mat)> {
    let rel = format!("features/{}.csv", clip_stem(clip_id));
    let bytes = read_file(&ctx.path(&rel), "features")?;
    parse_feature_csv(&String::from_utf8_lossy(&bytes))
}

/// Loads the preprocessed corpus (audio plus labels) from the run directory.
pub fn load_preprocessed(ctx: &RunContext) -> Result<Vec<LabeledSample>> {
    let manifest_path = ctx.path("preprocessed/manifest.csv");
    if !manifest_path.exists() {
        return Err(PipelineError::Dependency {
            stage: "load",
            missing: manifest_path.display().to_string(),
        });
    }
    let manifest = read_manifest(&manifest_path)?;
    let mut samples = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let path = ctx.path(&format!("preprocessed/{}", e.relative_path));
        let bytes = read_file(&path, "load")?;
        let mut clip = decode_wav(&bytes)?;
        clip.source_id = e.relative_path.clone();
        samples.push(LabeledSample {
            clip,
            label: u8::from(e.label),
            speaker_id: e.speaker_id.clone(),
            augmented: false,
        });
    }
    Ok(samples)
}

/// Assembles study samples from preprocessed audio plus the persisted
/// feature and scaling artifacts. The features stage must have run.
pub fn load_study_samples(ctx: &RunContext) -> Result<Vec<StudySample>> {
    let audio = load_preprocessed(ctx)?;
    let scaling_path = ctx.path("scaling.csv");
    let include_scaling = ctx.config.features.include_scaling;
    let scaling: HashMap<String, ScalingRow> = if include_scaling {
        let bytes = read_file(&scaling_path, "features")?;
        parse_scaling_csv(&String::from_utf8_lossy(&bytes))?
            .into_iter()
            .map(|r| (r.clip_id.clone(), r))
            .collect()
    } else {
        HashMap::new()
    };

    let mut out = Vec::with_capacity(audio.len());
    for sample in audio {
        let (_names, sequence) = load_feature_matrix(ctx, &sample.clip.source_id)?;
        let pooled = if include_scaling {
            let row = scaling.get(&sample.clip.source_id).ok_or_else(|| {
                PipelineError::Data(format!("scaling.csv lacks {}", sample.clip.source_id))
            })?;
            // base columns exclude the two appended exponent columns
            let base_cols = sequence.cols() - 2;
            let mut base = Mat::zeros(sequence.rows(), base_cols);
            for r in 0..sequence.rows() {
                base.row_mut(r).copy_from_slice(&sequence.row(r)[..base_cols]);
            }
            pool_for_svm(&base, Some((row.hurst, row.holder_mean)))?
        } else {
            pool_for_svm(&sequence, None)?
        };
        out.push(StudySample { audio: sample, sequence, pooled });
    }
    Ok(out)
}

/// `splits/<kind>.csv` rows: clip_id,subset.
pub fn split_csv(assignments: &[(String, &'static str)]) -> String {
    let mut out = String::from("clip_id,subset\n");
    for (clip, subset) in assignments {
        out.push_str(&format!("{clip},{subset}\n"));
    }
    out
}

pub fn parse_split_csv(text: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() || line == "clip_id,subset" {
            continue;
        }
        let (clip, subset) = line
            .split_once(',')
            .ok_or_else(|| PipelineError::Data(format!("bad split row `{line}`")))?;
        out.insert(clip.to_string(), subset.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_csv_round_trip_is_exact() {
        let names = vec!["mel_00".to_string(), "mel_01".to_string()];
        let m = Mat::from_rows(vec![vec![1.5, -0.25], vec![1e-17, 3.0000000000000004]]);
        let text = feature_csv(&names, &m);
        let (names2, m2) = parse_feature_csv(&text).unwrap();
        assert_eq!(names, names2);
        assert_eq!(m, m2);
    }

    #[test]
    fn scaling_csv_round_trip() {
        let rows = vec![ScalingRow {
            clip_id: "clip_000.wav".into(),
            hurst: 0.9137,
            holder_mean: 0.74,
            fit_r2: 0.995,
            complement: 1.0863,
            hurst_valid: true,
        }];
        let text = scaling_csv(&rows);
        let back = parse_scaling_csv(&text).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn comment_lines_are_skipped() {
        let text = "# config_hash=abc root_seed=1\nmel_00\n0.5\n";
        let (names, m) = parse_feature_csv(text).unwrap();
        assert_eq!(names, vec!["mel_00"]);
        assert_eq!(m.get(0, 0), 0.5);
    }
}
