//! The batch commands behind the `phonoscope` binary.

use std::path::Path;

use rayon::prelude::*;

use crate::audio::{
    class_counts, encode_wav, load_corpus, read_manifest, resample, synthesize_phonation,
    write_manifest, CorpusManifest, ManifestEntry, Sex, SynthesisParams,
};
use crate::augment::augment_dataset;
use crate::experiments::{
    comparisons_csv, compare_all, evaluate, history_csv, repeat_runs, runstats_csv,
    stratified_split, train_model, Metrics, RunStats, StudySample,
};
use crate::explain::{grouped_importance, importance_csv, permutation_importance};
use crate::models::{load_model, save_model, ModelKind};
use crate::preprocess::condition_clip;
use crate::scaling::scaling_summary;
use crate::util::{mix_seed, seeded_rng, Mat};
use rand::Rng;

use super::artifacts::{
    clip_stem, feature_csv, load_preprocessed, load_study_samples, parse_split_csv, scaling_csv,
    split_csv, ScalingRow,
};
use super::{read_file, sha16, write_file, Config, PipelineError, Result, RunContext};

/// Caps rayon's pool at the configured worker count. Safe to call more than
/// once; later calls are ignored by the global pool.
pub fn init_workers(workers: usize) {
    if workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

/// `synth-corpus`: writes a labeled synthetic phonation corpus. Deterministic:
/// the same `(config, n, seed)` produce byte-identical WAVs and manifest.
pub fn cmd_synth_corpus(config: &Config, out_dir: &Path, n: usize, seed: u64) -> Result<(usize, usize)> {
    let s = &config.synth;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError::Io { path: out_dir.display().to_string(), source: e })?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let nodule = i % 2 == 1;
        let male = (i / 2) % 2 == 0;
        let mut rng = seeded_rng(mix_seed(seed, &format!("clip{i}")));
        let (lo, hi) = if male { s.f0_male_hz } else { s.f0_female_hz };
        let f0 = rng.gen_range(lo..hi);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        };
        let params = SynthesisParams {
            f0_hz: f0,
            jitter_pct: draw(&mut rng, if nodule { s.nodule_jitter_pct } else { s.normal_jitter_pct }),
            shimmer_pct: draw(&mut rng, if nodule { s.nodule_shimmer_pct } else { s.normal_shimmer_pct }),
            noise_snr_db: draw(&mut rng, if nodule { s.nodule_snr_db } else { s.normal_snr_db }),
            n_harmonics: s.n_harmonics,
            duration_s: s.duration_s,
            sample_rate: s.sample_rate,
        };
        let clip = synthesize_phonation(&params, mix_seed(seed, &format!("synth{i}")))?;
        let name = format!("clip_{i:04}.wav");
        write_file(&out_dir.join(&name), &encode_wav(&clip))?;
        entries.push(ManifestEntry {
            relative_path: name,
            speaker_id: format!("spk_{i:04}"),
            sex: if male { Sex::Male } else { Sex::Female },
            label: nodule,
            phonation_type: "a_sustained".into(),
        });
    }
    let manifest = CorpusManifest::new(entries)?;
    write_manifest(&out_dir.join("manifest.csv"), &manifest)?;
    let n_nodule = n / 2;
    Ok((n - n_nodule, n_nodule))
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub n_clips: usize,
    pub n_normal: usize,
    pub n_nodule: usize,
}

/// `ingest`: validates the corpus against its manifest and records a listing.
pub fn cmd_ingest(ctx: &RunContext) -> Result<IngestReport> {
    let root = Path::new(&ctx.config.corpus.root);
    let manifest_path = root.join(&ctx.config.corpus.manifest);
    if !manifest_path.exists() {
        return Err(PipelineError::Dependency {
            stage: "ingest",
            missing: manifest_path.display().to_string(),
        });
    }
    let manifest = read_manifest(&manifest_path)?;
    let loaded = load_corpus(root, &manifest)?;

    let mut csv = String::from("clip_id,speaker_id,sex,label,rate_hz,duration_s,n_samples\n");
    for (entry, sample) in manifest.entries.iter().zip(&loaded.samples) {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            entry.relative_path,
            entry.speaker_id,
            entry.sex,
            if entry.label { "nodule" } else { "normal" },
            sample.clip.sample_rate,
            sample.clip.duration_s(),
            sample.clip.samples.len()
        ));
    }
    ctx.write_csv("ingest.csv", &csv)?;
    let manifest_bytes = read_file(&manifest_path, "ingest")?;
    ctx.append_manifest(
        "ingest",
        ctx.config.seed,
        &[(manifest_path.display().to_string(), sha16(&manifest_bytes))],
        &[ctx.artifact_entry("ingest.csv")?],
    )?;
    Ok(IngestReport {
        n_clips: loaded.samples.len(),
        n_normal: loaded.n_normal,
        n_nodule: loaded.n_nodule,
    })
}

/// `preprocess`: resamples to the canonical rate, conditions every clip
/// (noise filter, silence trim, normalization), and writes the conditioned
/// corpus under `preprocessed/`.
pub fn cmd_preprocess(ctx: &RunContext) -> Result<usize> {
    let root = Path::new(&ctx.config.corpus.root);
    let manifest_path = root.join(&ctx.config.corpus.manifest);
    if !manifest_path.exists() {
        return Err(PipelineError::Dependency {
            stage: "preprocess",
            missing: manifest_path.display().to_string(),
        });
    }
    let manifest = read_manifest(&manifest_path)?;
    let loaded = load_corpus(root, &manifest)?;
    let pre_cfg = ctx.config.preprocess_config()?;
    let rate = ctx.config.corpus.canonical_rate_hz;

    let conditioned: Vec<(String, Vec<u8>)> = loaded
        .samples
        .par_iter()
        .map(|sample| -> Result<(String, Vec<u8>)> {
            let at_rate = resample(&sample.clip, rate)?;
            let clean = condition_clip(&at_rate, &pre_cfg)?;
            Ok((sample.clip.source_id.clone(), encode_wav(&clean)))
        })
        .collect::<Result<Vec<_>>>()?;

    for (name, bytes) in &conditioned {
        write_file(&ctx.path(&format!("preprocessed/{name}")), bytes)?;
    }
    write_manifest(&ctx.path("preprocessed/manifest.csv"), &manifest)?;
    let outputs = vec![ctx.artifact_entry("preprocessed/manifest.csv")?];
    ctx.append_manifest("preprocess", ctx.config.seed, &[], &outputs)?;
    Ok(conditioned.len())
}

/// `features`: extracts per-clip feature matrices (and the scaling summary
/// table plus per-window exponent series when enabled).
pub fn cmd_features(ctx: &RunContext) -> Result<usize> {
    let samples = load_preprocessed(ctx).map_err(|e| match e {
        PipelineError::Dependency { missing, .. } =>
            PipelineError::Dependency { stage: "features", missing },
        other => other,
    })?;
    let extractor = ctx.config.extractor()?;
    let names = extractor.sequence_feature_names();

    let results: Vec<(String, Mat, Option<ScalingRow>, Option<String>)> = samples
        .par_iter()
        .map(|sample| -> Result<_> {
            let (sequence, _pooled) = extractor.extract(&sample.clip)?;
            let (scaling_row, holder_csv) = match &extractor.scaling {
                Some(cfg) => {
                    let conditioned = condition_clip(&sample.clip, &extractor.preprocess)?;
                    let summary = scaling_summary(&conditioned, cfg)?;
                    let mut h = String::from("window_index,holder_exponent\n");
                    for (idx, e) in &summary.holder_series {
                        match e {
                            Some(v) => h.push_str(&format!("{idx},{v}\n")),
                            None => h.push_str(&format!("{idx},flat\n")),
                        }
                    }
                    (
                        Some(ScalingRow {
                            clip_id: sample.clip.source_id.clone(),
                            hurst: summary.hurst,
                            holder_mean: summary.holder_mean,
                            fit_r2: summary.fit_r2,
                            complement: summary.complement,
                            hurst_valid: summary.hurst_valid,
                        }),
                        Some(h),
                    )
                }
                None => (None, None),
            };
            Ok((sample.clip.source_id.clone(), sequence, scaling_row, holder_csv))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scaling_rows = Vec::new();
    for (clip_id, sequence, scaling_row, holder) in &results {
        let stem = clip_stem(clip_id);
        ctx.write_csv(&format!("features/{stem}.csv"), &feature_csv(&names, sequence))?;
        if let Some(h) = holder {
            ctx.write_csv(&format!("holder/{stem}.csv"), h)?;
        }
        if let Some(row) = scaling_row {
            scaling_rows.push(row.clone());
        }
    }
    let mut outputs = Vec::new();
    if !scaling_rows.is_empty() {
        ctx.write_csv("scaling.csv", &scaling_csv(&scaling_rows))?;
        outputs.push(ctx.artifact_entry("scaling.csv")?);
    }
    ctx.append_manifest("features", ctx.config.seed, &[], &outputs)?;
    Ok(results.len())
}

/// `augment`: materializes a balanced-corpus preview next to the run
/// (the training path itself re-augments in memory, after splitting).
pub fn cmd_augment(ctx: &RunContext) -> Result<(usize, usize)> {
    let samples = load_preprocessed(ctx).map_err(|e| match e {
        PipelineError::Dependency { missing, .. } =>
            PipelineError::Dependency { stage: "augment", missing },
        other => other,
    })?;
    let policy = ctx.config.augment_policy().ok_or_else(|| {
        PipelineError::Config("augmentation disabled in [augment]".into())
    })?;
    let before = class_counts(&samples);
    let balanced = augment_dataset(&samples, &policy, mix_seed(ctx.config.seed, "augment"))?;
    let new = &balanced[samples.len()..];
    let mut entries = Vec::new();
    for sample in new {
        let name = format!("{}.wav", clip_stem(&sample.clip.source_id).replace('#', "_"));
        write_file(&ctx.path(&format!("augmented/{name}")), &encode_wav(&sample.clip))?;
        entries.push(ManifestEntry {
            relative_path: name,
            speaker_id: sample.speaker_id.clone(),
            sex: Sex::Female,
            label: sample.label == 1,
            phonation_type: "augmented".into(),
        });
    }
    write_manifest(&ctx.path("augmented/manifest.csv"), &CorpusManifest::new(entries)?)?;
    let after = class_counts(&balanced);
    let report = format!(
        "subset,normal,nodule\nbefore,{},{}\nafter,{},{}\n",
        before.0, before.1, after.0, after.1
    );
    ctx.write_csv("augment_report.csv", &report)?;
    ctx.append_manifest(
        "augment",
        mix_seed(ctx.config.seed, "augment"),
        &[],
        &[ctx.artifact_entry("augment_report.csv")?],
    )?;
    Ok((new.len(), balanced.len()))
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub kind: ModelKind,
    pub epochs: usize,
    pub final_val_acc: f64,
    pub model_path: String,
}

fn resolve_kind(ctx: &RunContext, kind_flag: Option<&str>) -> Result<ModelKind> {
    match kind_flag {
        Some(s) => ModelKind::parse(s)
            .ok_or_else(|| PipelineError::Config(format!("model kind `{s}` unknown"))),
        None => ctx.config.model_kind(),
    }
}

/// `train`: one seeded split, optional train-split augmentation, one model.
pub fn cmd_train(ctx: &RunContext, kind_flag: Option<&str>) -> Result<TrainReport> {
    let kind = resolve_kind(ctx, kind_flag)?;
    let samples = load_study_samples(ctx).map_err(|e| match e {
        PipelineError::Dependency { missing, .. } =>
            PipelineError::Dependency { stage: "train", missing },
        other => other,
    })?;
    let split_seed = mix_seed(ctx.config.seed, "train-split");
    let meta: Vec<_> = samples.iter().map(StudySample::meta).collect();
    let split = stratified_split(&meta, &ctx.config.split_spec().with_seed(split_seed))?;

    let mut train_ref: Vec<&StudySample> = split.train.iter().map(|&i| &samples[i]).collect();
    let val_ref: Vec<&StudySample> = split.val.iter().map(|&i| &samples[i]).collect();

    let augmented_storage: Vec<StudySample>;
    if let Some(policy) = ctx.config.augment_policy() {
        let train_audio: Vec<_> = train_ref.iter().map(|s| s.audio.clone()).collect();
        let balanced =
            augment_dataset(&train_audio, &policy, mix_seed(ctx.config.seed, "train-augment"))?;
        let extractor = ctx.config.extractor()?;
        augmented_storage = balanced[train_audio.len()..]
            .iter()
            .map(|s| extractor.prepare(s))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        train_ref.extend(augmented_storage.iter());
    }

    let config = ctx
        .config
        .model_config(kind)?
        .with_seed(mix_seed(ctx.config.seed, "train-init"));
    let outcome = train_model(&config, &train_ref, &val_ref, mix_seed(ctx.config.seed, "train"))?;

    let model_rel = format!("models/{kind}.bin");
    let model_path = ctx.path(&model_rel);
    if let Some(parent) = model_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    save_model(&model_path, &outcome.model)?;
    ctx.write_csv(&format!("history/{kind}.csv"), &history_csv(&outcome.history))?;

    let mut assignments: Vec<(String, &'static str)> = Vec::new();
    for (subset, indices) in
        [("train", &split.train), ("val", &split.val), ("test", &split.test)]
    {
        for &i in indices {
            assignments.push((samples[i].audio.clip.source_id.clone(), subset));
        }
    }
    ctx.write_csv(&format!("splits/{kind}.csv"), &split_csv(&assignments))?;

    let final_val_acc = outcome.history.last().map_or(f64::NAN, |h| h.val_acc);
    ctx.append_manifest(
        "train",
        split_seed,
        &[],
        &[
            ctx.artifact_entry(&model_rel)?,
            ctx.artifact_entry(&format!("history/{kind}.csv"))?,
            ctx.artifact_entry(&format!("splits/{kind}.csv"))?,
        ],
    )?;
    Ok(TrainReport {
        kind,
        epochs: outcome.history.len(),
        final_val_acc,
        model_path: model_rel,
    })
}

/// `evaluate`: metrics for the trained model on its recorded test split.
pub fn cmd_evaluate(ctx: &RunContext, kind_flag: Option<&str>) -> Result<Metrics> {
    let kind = resolve_kind(ctx, kind_flag)?;
    let model_rel = format!("models/{kind}.bin");
    let split_rel = format!("splits/{kind}.csv");
    for rel in [&model_rel, &split_rel] {
        if !ctx.path(rel).exists() {
            return Err(PipelineError::Dependency {
                stage: "evaluate",
                missing: ctx.path(rel).display().to_string(),
            });
        }
    }
    let model = load_model(&ctx.path(&model_rel))?;
    let split = parse_split_csv(&String::from_utf8_lossy(&read_file(
        &ctx.path(&split_rel),
        "evaluate",
    )?))?;
    let samples = load_study_samples(ctx)?;
    let test: Vec<&StudySample> = samples
        .iter()
        .filter(|s| split.get(&s.audio.clip.source_id).map(String::as_str) == Some("test"))
        .collect();
    let metrics = evaluate(&model, &test)?;

    // idempotent rewrite: one row per evaluated kind, sorted by kind
    let eval_rel = "evaluation.csv";
    let mut rows: std::collections::BTreeMap<String, String> = std::collections::BTreeMap::new();
    if ctx.path(eval_rel).exists() {
        let text = String::from_utf8_lossy(&read_file(&ctx.path(eval_rel), "evaluate")?).into_owned();
        for line in text.lines() {
            if line.starts_with('#') || line.is_empty() || line.starts_with("model,") {
                continue;
            }
            if let Some((k, _)) = line.split_once(',') {
                rows.insert(k.to_string(), line.to_string());
            }
        }
    }
    rows.insert(
        kind.to_string(),
        format!(
            "{kind},{},{},{},{},{},{},{},{},{}",
            metrics.accuracy,
            metrics.precision,
            metrics.recall,
            metrics.f1,
            metrics.tp,
            metrics.fp,
            metrics.fn_,
            metrics.tn,
            metrics.loss
        ),
    );
    let mut body = String::from("model,accuracy,precision,recall,f1,tp,fp,fn,tn,loss\n");
    for row in rows.values() {
        body.push_str(row);
        body.push('\n');
    }
    ctx.write_csv(eval_rel, &body)?;
    ctx.append_manifest("evaluate", ctx.config.seed, &[], &[ctx.artifact_entry(eval_rel)?])?;
    Ok(metrics)
}

#[derive(Debug)]
pub struct CompareReport {
    pub stats: Vec<RunStats>,
    pub n_pairs: usize,
}

/// `compare`: the repeated-seed study over the six headline families, plus
/// the pairwise comparison table. The best run's model per kind is kept for
/// downstream explanation.
pub fn cmd_compare(ctx: &RunContext) -> Result<CompareReport> {
    let samples = load_study_samples(ctx).map_err(|e| match e {
        PipelineError::Dependency { missing, .. } =>
            PipelineError::Dependency { stage: "compare", missing },
        other => other,
    })?;
    let extractor = ctx.config.extractor()?;
    let split_spec = ctx.config.split_spec();
    let policy = ctx.config.augment_policy();
    let base_seed = mix_seed(ctx.config.seed, "compare-runs");
    let n_runs = ctx.config.experiment.n_runs;

    let mut stats = Vec::new();
    for kind in ModelKind::STUDY_SET {
        let config = ctx.config.model_config(kind)?;
        let artifacts = repeat_runs(
            &config,
            &samples,
            &extractor,
            &split_spec,
            policy.as_ref(),
            n_runs,
            base_seed,
        )?;
        for (i, history) in artifacts.histories.iter().enumerate() {
            if !history.is_empty() {
                ctx.write_csv(&format!("history/{kind}_run{i}.csv"), &history_csv(history))?;
            }
        }
        // keep the strongest run's model (ties -> earliest run)
        let best = artifacts
            .stats
            .accuracies
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.total_cmp(b).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let model_rel = format!("models/{kind}.bin");
        let model_path = ctx.path(&model_rel);
        if let Some(parent) = model_path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| PipelineError::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
        save_model(&model_path, &artifacts.models[best])?;
        // record that run's split so explain/evaluate see the right test set
        let run_seed = artifacts.seeds[best];
        let meta: Vec<_> = samples.iter().map(StudySample::meta).collect();
        let split = stratified_split(&meta, &split_spec.with_seed(run_seed))?;
        let mut assignments: Vec<(String, &'static str)> = Vec::new();
        for (subset, indices) in
            [("train", &split.train), ("val", &split.val), ("test", &split.test)]
        {
            for &i in indices {
                assignments.push((samples[i].audio.clip.source_id.clone(), subset));
            }
        }
        ctx.write_csv(&format!("splits/{kind}.csv"), &split_csv(&assignments))?;
        stats.push(artifacts.stats);
    }

    // persist the per-kind table before pairwise statistics so a degenerate
    // comparison still leaves the run stats on disk
    ctx.write_csv("runstats.csv", &runstats_csv(&stats))?;
    let pairs = compare_all(&stats)?;
    ctx.write_csv("comparisons.csv", &comparisons_csv(&pairs))?;
    ctx.append_manifest(
        "compare",
        base_seed,
        &[],
        &[ctx.artifact_entry("runstats.csv")?, ctx.artifact_entry("comparisons.csv")?],
    )?;
    Ok(CompareReport { stats, n_pairs: pairs.len() })
}

/// `explain`: permutation importance for the trained model on its test split.
pub fn cmd_explain(ctx: &RunContext, kind_flag: Option<&str>) -> Result<usize> {
    let kind = resolve_kind(ctx, kind_flag)?;
    let model_rel = format!("models/{kind}.bin");
    let split_rel = format!("splits/{kind}.csv");
    for rel in [&model_rel, &split_rel] {
        if !ctx.path(rel).exists() {
            return Err(PipelineError::Dependency {
                stage: "explain",
                missing: ctx.path(rel).display().to_string(),
            });
        }
    }
    let model = load_model(&ctx.path(&model_rel))?;
    let split = parse_split_csv(&String::from_utf8_lossy(&read_file(
        &ctx.path(&split_rel),
        "explain",
    )?))?;
    let samples = load_study_samples(ctx)?;
    let test: Vec<&StudySample> = samples
        .iter()
        .filter(|s| split.get(&s.audio.clip.source_id).map(String::as_str) == Some("test"))
        .collect();
    let extractor = ctx.config.extractor()?;
    let names = extractor.sequence_feature_names();
    let seed = mix_seed(ctx.config.seed, "explain");
    let ranked =
        permutation_importance(&model, &test, &names, ctx.config.explain.n_repeats, seed)?;
    ctx.write_csv("importance.csv", &importance_csv(&ranked))?;
    let mut outputs = vec![ctx.artifact_entry("importance.csv")?];
    if ctx.config.explain.grouped {
        let grouped =
            grouped_importance(&model, &test, &names, ctx.config.explain.n_repeats, seed)?;
        ctx.write_csv("importance_grouped.csv", &importance_csv(&grouped))?;
        outputs.push(ctx.artifact_entry("importance_grouped.csv")?);
    }
    ctx.append_manifest("explain", seed, &[], &outputs)?;
    Ok(ranked.len())
}

/// `report`: one human-readable summary of whatever the run produced.
pub fn cmd_report(ctx: &RunContext) -> Result<String> {
    let runstats_path = ctx.path("runstats.csv");
    let comparisons_path = ctx.path("comparisons.csv");
    for p in [&runstats_path, &comparisons_path] {
        if !p.exists() {
            return Err(PipelineError::Dependency {
                stage: "report",
                missing: p.display().to_string(),
            });
        }
    }
    let runstats = String::from_utf8_lossy(&read_file(&runstats_path, "report")?).into_owned();
    let comparisons =
        String::from_utf8_lossy(&read_file(&comparisons_path, "report")?).into_owned();

    let mut text = String::new();
    text.push_str(&format!(
        "Voice-nodule screening study report\nconfig_hash: {}\nroot_seed: {}\n\n",
        ctx.config_hash(),
        ctx.config.seed
    ));
    text.push_str("== Repeated-run accuracy (mean, sd, 95% CI) ==\n");
    for line in runstats.lines().filter(|l| !l.starts_with('#')) {
        text.push_str(line);
        text.push('\n');
    }
    text.push_str("\n== Pairwise comparisons (Welch t, two-sided p, Cohen's d) ==\n");
    for line in comparisons.lines().filter(|l| !l.starts_with('#')) {
        text.push_str(line);
        text.push('\n');
    }
    for (title, rel) in [
        ("Held-out evaluation", "evaluation.csv"),
        ("Permutation importance (top 10)", "importance.csv"),
    ] {
        let p = ctx.path(rel);
        if p.exists() {
            let body = String::from_utf8_lossy(&read_file(&p, "report")?).into_owned();
            text.push_str(&format!("\n== {title} ==\n"));
            for line in body.lines().filter(|l| !l.starts_with('#')).take(11) {
                text.push_str(line);
                text.push('\n');
            }
        }
    }
    text.push_str(
        "\nReference exponents for sustained phonation (published clinical values):\n",
    );
    text.push_str(&format!(
        "  normal: H = {}, holder = {}; nodule: H = {}, holder = {} (0-based mel indexing in importance names)\n",
        crate::scaling::REFERENCE_HURST_NORMAL,
        crate::scaling::REFERENCE_HOLDER_NORMAL,
        crate::scaling::REFERENCE_HURST_NODULE,
        crate::scaling::REFERENCE_HOLDER_NODULE,
    ));
    write_file(&ctx.path("report.txt"), text.as_bytes())?;
    ctx.append_manifest("report", ctx.config.seed, &[], &[ctx.artifact_entry("report.txt")?])?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Config;

    fn tiny_config(root: &Path) -> Config {
        let mut config = Config::default();
        config.corpus.root = root.display().to_string();
        config.synth.n_clips = 16;
        config.synth.duration_s = 0.6;
        config.model.hidden_units = 8;
        config.model.max_epochs = 4;
        config.model.patience = 2;
        config.experiment.n_runs = 2;
        config.experiment.group_by_speaker = false;
        config.augment.enabled = false;
        config.explain.n_repeats = 3;
        config
    }

    #[test]
    fn synth_corpus_is_byte_identical_per_seed() {
        let dir = tempfile::tempdir().unwrap();
        let config = Config::default();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        cmd_synth_corpus(&config, &out_a, 6, 7).unwrap();
        cmd_synth_corpus(&config, &out_b, 6, 7).unwrap();
        for entry in std::fs::read_dir(&out_a).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(out_a.join(&name)).unwrap();
            let b = std::fs::read(out_b.join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs");
        }
        let out_c = dir.path().join("c");
        cmd_synth_corpus(&config, &out_c, 6, 8).unwrap();
        let a = std::fs::read(out_a.join("clip_0000.wav")).unwrap();
        let c = std::fs::read(out_c.join("clip_0000.wav")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn train_before_features_is_a_dependency_error() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let config = tiny_config(&corpus);
        cmd_synth_corpus(&config, &corpus, 16, config.seed).unwrap();
        let ctx = RunContext::create(config, &dir.path().join("run")).unwrap();
        let err = cmd_train(&ctx, None).unwrap_err();
        match err {
            PipelineError::Dependency { stage, missing } => {
                assert_eq!(stage, "train");
                assert!(missing.contains("preprocessed"), "missing: {missing}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn stagewise_pipeline_runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let config = tiny_config(&corpus);
        cmd_synth_corpus(&config, &corpus, config.synth.n_clips, config.seed).unwrap();
        let ctx = RunContext::create(config, &dir.path().join("run")).unwrap();

        let ingest = cmd_ingest(&ctx).unwrap();
        assert_eq!(ingest.n_clips, 16);
        assert_eq!((ingest.n_normal, ingest.n_nodule), (8, 8));

        assert_eq!(cmd_preprocess(&ctx).unwrap(), 16);
        assert_eq!(cmd_features(&ctx).unwrap(), 16);
        assert!(ctx.path("scaling.csv").exists());

        let report = cmd_train(&ctx, Some("svm")).unwrap();
        assert!(ctx.path(&report.model_path).exists());
        let metrics = cmd_evaluate(&ctx, Some("svm")).unwrap();
        assert!(metrics.total() >= 2);
        assert!(ctx.path("manifest.txt").exists());
    }
}
