//! Repeated-run statistics, grid search, and the pairwise comparison table.

use rayon::prelude::*;

use crate::augment::{augment_dataset, AugmentPolicy};
use crate::models::{ModelConfig, ModelKind, TrainedModel};
use crate::util::{mean, mix_seed, sample_sd};

use super::{
    cohens_d_summary, confidence_interval, evaluate, stratified_split, train_model, welch_t,
    EpochStats, ExperimentError, FeatureExtractor, Result, SampleMeta, SplitSpec, StudySample,
};

/// Repeated-run summary for one model kind.
#[derive(Debug, Clone)]
pub struct RunStats {
    pub kind: ModelKind,
    /// Completed (non-diverged) runs.
    pub n_runs: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub ci95: (f64, f64),
    pub failures: Vec<String>,
}

/// Everything a repeated study produces for one kind.
#[derive(Debug)]
pub struct RunArtifacts {
    pub stats: RunStats,
    pub histories: Vec<Vec<EpochStats>>,
    pub models: Vec<TrainedModel>,
    /// Per-run seeds aligned with `stats.accuracies`.
    pub seeds: Vec<u64>,
}

/// Runs `n_runs` independent train/evaluate cycles with seeds
/// `base_seed .. base_seed + n_runs`, drawing a fresh split per run.
///
/// When an augmentation policy is given, the training split's audio is
/// balanced after splitting and features are extracted for the new clips.
/// Runs are independent and execute in parallel; results merge by run index.
pub fn repeat_runs(
    config: &ModelConfig,
    samples: &[StudySample],
    extractor: &FeatureExtractor,
    split_spec: &SplitSpec,
    augment: Option<&AugmentPolicy>,
    n_runs: usize,
    base_seed: u64,
) -> Result<RunArtifacts> {
    if n_runs < 2 {
        return Err(ExperimentError::Parameter(format!("n_runs {n_runs} < 2")));
    }
    let meta: Vec<SampleMeta> = samples.iter().map(StudySample::meta).collect();

    let outcomes: Vec<(u64, Result<(f64, Vec<EpochStats>, TrainedModel)>)> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let run_seed = base_seed + i as u64;
            let outcome = single_run(config, samples, &meta, extractor, split_spec, augment, run_seed);
            (run_seed, outcome)
        })
        .collect();

    let mut accuracies = Vec::new();
    let mut histories = Vec::new();
    let mut models = Vec::new();
    let mut seeds = Vec::new();
    let mut failures = Vec::new();
    for (run_seed, outcome) in outcomes {
        match outcome {
            Ok((acc, history, model)) => {
                accuracies.push(acc);
                histories.push(history);
                models.push(model);
                seeds.push(run_seed);
            }
            Err(e @ ExperimentError::Divergence { .. }) => {
                failures.push(format!("seed {run_seed}: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    if accuracies.len() < 2 {
        return Err(ExperimentError::Parameter(format!(
            "only {} of {n_runs} runs completed: {failures:?}",
            accuracies.len()
        )));
    }
    let m = mean(&accuracies);
    let sd = sample_sd(&accuracies);
    let ci95 = confidence_interval(m, sd, accuracies.len(), 0.95)?;
    Ok(RunArtifacts {
        stats: RunStats {
            kind: config.kind,
            n_runs: accuracies.len(),
            accuracies,
            mean: m,
            sd,
            ci95,
            failures,
        },
        histories,
        models,
        seeds,
    })
}

fn single_run(
    config: &ModelConfig,
    samples: &[StudySample],
    meta: &[SampleMeta],
    extractor: &FeatureExtractor,
    split_spec: &SplitSpec,
    augment: Option<&AugmentPolicy>,
    run_seed: u64,
) -> Result<(f64, Vec<EpochStats>, TrainedModel)> {
    let split = stratified_split(meta, &split_spec.with_seed(run_seed))?;

    let mut train_ref: Vec<&StudySample> = split.train.iter().map(|&i| &samples[i]).collect();
    let val_ref: Vec<&StudySample> = split.val.iter().map(|&i| &samples[i]).collect();
    let test_ref: Vec<&StudySample> = split.test.iter().map(|&i| &samples[i]).collect();

    // augmentation applies strictly after splitting, to the train split only
    let augmented_storage: Vec<StudySample>;
    if let Some(policy) = augment {
        let train_audio: Vec<crate::audio::LabeledSample> =
            train_ref.iter().map(|s| s.audio.clone()).collect();
        let balanced = augment_dataset(&train_audio, policy, mix_seed(run_seed, "augment"))?;
        let new_clips = &balanced[train_audio.len()..];
        augmented_storage = new_clips
            .iter()
            .map(|s| extractor.prepare(s))
            .collect::<Result<Vec<_>>>()?;
        train_ref.extend(augmented_storage.iter());
    }

    let run_config = config.clone().with_seed(mix_seed(run_seed, "init"));
    let outcome = train_model(&run_config, &train_ref, &val_ref, run_seed)?;
    let metrics = evaluate(&outcome.model, &test_ref)?;
    Ok((metrics.accuracy, outcome.history, outcome.model))
}

/// One pairwise comparison row: Welch's t on the per-run accuracy lists plus
/// Cohen's d. `t`/`p` are absent when only summary statistics exist.
#[derive(Debug, Clone)]
pub struct StatComparison {
    pub a: ModelKind,
    pub b: ModelKind,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub cohens_d: f64,
}

/// All unordered kind pairs, in input order.
pub fn compare_all(stats: &[RunStats]) -> Result<Vec<StatComparison>> {
    if stats.len() < 2 {
        return Err(ExperimentError::Parameter("need at least two model kinds".into()));
    }
    let mut out = Vec::with_capacity(stats.len() * (stats.len() - 1) / 2);
    for i in 0..stats.len() {
        for j in i + 1..stats.len() {
            let (a, b) = (&stats[i], &stats[j]);
            let (t_stat, p_value) = if a.accuracies.len() >= 2 && b.accuracies.len() >= 2 {
                match welch_t(&a.accuracies, &b.accuracies) {
                    Ok(t) => (Some(t.t), Some(t.p)),
                    Err(ExperimentError::UndefinedStatistic(_)) => (None, None),
                    Err(e) => return Err(e),
                }
            } else {
                (None, None)
            };
            let d = cohens_d_summary(a.mean, a.sd, b.mean, b.sd)?;
            out.push(StatComparison { a: a.kind, b: b.kind, t_stat, p_value, cohens_d: d });
        }
    }
    Ok(out)
}

/// One grid-search cell: the config, its stable lattice index, and the
/// validation outcome (failures are recorded, not fatal).
#[derive(Debug)]
pub struct GridCell {
    pub index: usize,
    pub config: ModelConfig,
    pub outcome: std::result::Result<CellScore, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScore {
    pub val_accuracy: f64,
    pub val_loss: f64,
}

/// Expands a hyperparameter lattice in lexicographic order
/// (lr, then batch size, then hidden units).
pub fn expand_grid(
    base: &ModelConfig,
    lrs: &[f64],
    batch_sizes: &[usize],
    hidden_units: &[usize],
) -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for &lr in lrs {
        for &bs in batch_sizes {
            for &h in hidden_units {
                let mut c = base.clone();
                c.lr = lr;
                c.batch_size = bs;
                c.hidden_units = h;
                out.push(c);
            }
        }
    }
    out
}

/// Exhaustive grid evaluation on a fixed train/validation split.
///
/// Returns the winning cell index and the full leaderboard. Best = highest
/// validation accuracy, ties broken by lower validation loss, then by
/// lattice order.
pub fn grid_search(
    grid: &[ModelConfig],
    train: &[&StudySample],
    val: &[&StudySample],
    run_seed: u64,
) -> Result<(usize, Vec<GridCell>)> {
    if grid.is_empty() {
        return Err(ExperimentError::Grid("empty grid".into()));
    }
    let cells: Vec<GridCell> = grid
        .par_iter()
        .enumerate()
        .map(|(index, config)| {
            let outcome = train_model(config, train, val, run_seed)
                .and_then(|o| {
                    let m = evaluate(&o.model, val)?;
                    Ok(CellScore { val_accuracy: m.accuracy, val_loss: m.loss })
                })
                .map_err(|e| e.to_string());
            GridCell { index, config: config.clone(), outcome }
        })
        .collect();

    let best = cells
        .iter()
        .filter_map(|c| c.outcome.as_ref().ok().map(|s| (c.index, *s)))
        .min_by(|(ia, sa), (ib, sb)| {
            sb.val_accuracy
                .total_cmp(&sa.val_accuracy)
                .then(sa.val_loss.total_cmp(&sb.val_loss))
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| ExperimentError::Grid("every grid cell failed".into()))?;
    Ok((best, cells))
}
