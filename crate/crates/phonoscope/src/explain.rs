//! Permutation feature importance: the accuracy drop when one feature column
//! is shuffled across clips.
//!
//! The permutation is frame-consistent — clip i receives clip j's whole
//! column as a time series — so within-clip temporal structure survives and
//! only the association between the feature and the label breaks. Donor
//! columns are tiled or truncated when clip lengths differ.
//!
//! Importances are not additive: permuting everything at once is not the sum
//! of single-column drops.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::experiments::{evaluate, StudySample};
use crate::models::TrainedModel;
use crate::util::{mean, mix_seed, population_sd, seeded_rng};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("permutation needs at least 2 test samples")]
    Degenerate,
    #[error(transparent)]
    Experiment(#[from] crate::experiments::ExperimentError),
}

pub type Result<T> = std::result::Result<T, ExplainError>;

/// One feature's importance: mean and SD of the accuracy drop across repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub feature: String,
    pub importance_mean: f64,
    pub importance_sd: f64,
}

/// Feature families for the grouped mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFamily {
    Mel,
    Mfcc,
    Chroma,
    Scaling,
}

impl FeatureFamily {
    pub fn of(name: &str) -> Option<Self> {
        if name.starts_with("mel_") {
            Some(Self::Mel)
        } else if name.starts_with("mfcc_") {
            Some(Self::Mfcc)
        } else if name.starts_with("chroma_") {
            Some(Self::Chroma)
        } else if name == "hurst" || name == "holder_mean" {
            Some(Self::Scaling)
        } else {
            None
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Mel => "mel",
            Self::Mfcc => "mfcc",
            Self::Chroma => "chroma",
            Self::Scaling => "scaling",
        }
    }
}

fn permuted_accuracy(
    model: &TrainedModel,
    test: &[&StudySample],
    columns: &[usize],
    seed: u64,
) -> Result<f64> {
    let n = test.len();
    let mut assignment: Vec<usize> = (0..n).collect();
    assignment.shuffle(&mut seeded_rng(seed));

    let mut permuted: Vec<StudySample> = Vec::with_capacity(n);
    for (i, sample) in test.iter().enumerate() {
        let donor = test[assignment[i]];
        let mut seq = sample.sequence.clone();
        for &col in columns {
            for t in 0..seq.rows() {
                // tile the donor column when lengths differ
                let src_t = t % donor.sequence.rows();
                seq.set(t, col, donor.sequence.get(src_t, col));
            }
        }
        let pooled = permute_pooled(&sample.pooled, &donor.pooled, columns, sample.sequence.cols());
        permuted.push(StudySample { audio: sample.audio.clone(), sequence: seq, pooled });
    }
    let refs: Vec<&StudySample> = permuted.iter().collect();
    let metrics = evaluate(model, &refs)?;
    Ok(metrics.accuracy)
}

/// The pooled vector holds [means.. | sds.. | hurst holder]; swap the slots
/// that derive from the permuted sequence columns.
fn permute_pooled(own: &[f64], donor: &[f64], columns: &[usize], f_seq: usize) -> Vec<f64> {
    let mut out = own.to_vec();
    // pooled base width excludes any scaling tail
    let f_base = (own.len() - own.len() % 2) / 2;
    for &col in columns {
        if col < f_base && col < f_seq {
            out[col] = donor[col];
            out[f_base + col] = donor[f_base + col];
        }
        // scaling columns sit beyond the sequence's base block and map to the
        // pooled tail in order
        if col >= f_base {
            let tail = 2 * f_base + (col - f_base);
            if tail < out.len() && tail < donor.len() {
                out[tail] = donor[tail];
            }
        }
    }
    out
}

/// Ranks features by mean accuracy drop over `n_repeats` permutations.
///
/// `feature_names` must match the sequence columns. Deterministic per seed;
/// repeats run in parallel with derived sub-seeds. Output is sorted by
/// descending importance.
pub fn permutation_importance(
    model: &TrainedModel,
    test: &[&StudySample],
    feature_names: &[String],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    if n_repeats < 3 {
        return Err(ExplainError::Parameter(format!("n_repeats {n_repeats} < 3")));
    }
    if test.len() < 2 {
        return Err(ExplainError::Degenerate);
    }
    let f = test[0].sequence.cols();
    if feature_names.len() != f {
        return Err(ExplainError::Parameter(format!(
            "{} feature names for {f} columns",
            feature_names.len()
        )));
    }
    let baseline = evaluate(model, test)?.accuracy;

    let results: Vec<FeatureImportance> = (0..f)
        .into_par_iter()
        .map(|col| -> Result<FeatureImportance> {
            let drops: Vec<f64> = (0..n_repeats)
                .map(|rep| -> Result<f64> {
                    let sub_seed = mix_seed(seed, &format!("col{col}rep{rep}"));
                    Ok(baseline - permuted_accuracy(model, test, &[col], sub_seed)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(FeatureImportance {
                feature: feature_names[col].clone(),
                importance_mean: mean(&drops),
                importance_sd: population_sd(&drops),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = results;
    out.sort_by(|a, b| {
        b.importance_mean.total_cmp(&a.importance_mean).then(a.feature.cmp(&b.feature))
    });
    Ok(out)
}

/// Grouped mode: permutes whole feature families together.
pub fn grouped_importance(
    model: &TrainedModel,
    test: &[&StudySample],
    feature_names: &[String],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    if n_repeats < 3 {
        return Err(ExplainError::Parameter(format!("n_repeats {n_repeats} < 3")));
    }
    if test.len() < 2 {
        return Err(ExplainError::Degenerate);
    }
    let baseline = evaluate(model, test)?.accuracy;
    let families = [
        FeatureFamily::Mel,
        FeatureFamily::Mfcc,
        FeatureFamily::Chroma,
        FeatureFamily::Scaling,
    ];
    let mut out = Vec::new();
    for family in families {
        let columns: Vec<usize> = feature_names
            .iter()
            .enumerate()
            .filter(|(_, n)| FeatureFamily::of(n) == Some(family))
            .map(|(i, _)| i)
            .collect();
        if columns.is_empty() {
            continue;
        }
        let drops: Vec<f64> = (0..n_repeats)
            .map(|rep| -> Result<f64> {
                let sub_seed = mix_seed(seed, &format!("fam{}rep{rep}", family.label()));
                Ok(baseline - permuted_accuracy(model, test, &columns, sub_seed)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(FeatureImportance {
            feature: family.label().to_string(),
            importance_mean: mean(&drops),
            importance_sd: population_sd(&drops),
        });
    }
    out.sort_by(|a, b| {
        b.importance_mean.total_cmp(&a.importance_mean).then(a.feature.cmp(&b.feature))
    });
    Ok(out)
}

/// Permutes every column at once; the resulting accuracy should fall to the
/// majority-class rate since all feature-label association is severed.
pub fn permute_all_columns_accuracy(
    model: &TrainedModel,
    test: &[&StudySample],
    seed: u64,
) -> Result<f64> {
    if test.len() < 2 {
        return Err(ExplainError::Degenerate);
    }
    let f = test[0].sequence.cols();
    let columns: Vec<usize> = (0..f).collect();
    permuted_accuracy(model, test, &columns, seed)
}

/// `importance.csv`: feature,rank,importance_mean,importance_sd
pub fn importance_csv(ranked: &[FeatureImportance]) -> String {
    let mut out = String::from("feature,rank,importance_mean,importance_sd\n");
    for (rank, fi) in ranked.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fi.feature,
            rank + 1,
            fi.importance_mean,
            fi.importance_sd
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{AudioClip, LabeledSample};
    use crate::experiments::train_model;
    use crate::models::{pool_for_svm, ModelConfig, ModelKind};

    /// Feature corpus where only column `signal_col` carries the label.
    fn signal_corpus(n: usize, t: usize, f: usize, signal_col: usize, seed: u64) -> Vec<StudySample> {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|i| {
                let label = u8::from(i % 2 == 1);
                let rows: Vec<Vec<f64>> = (0..t)
                    .map(|_| {
                        (0..f)
                            .map(|c| {
                                if c == signal_col {
                                    (if label == 1 { 1.5 } else { -1.5 })
                                        + rng.gen_range(-0.5..0.5)
                                } else {
                                    rng.gen_range(-1.0..1.0)
                                }
                            })
                            .collect()
                    })
                    .collect();
                let sequence = Mat::from_rows(rows);
                let pooled = pool_for_svm(&sequence, None).unwrap();
                StudySample {
                    audio: LabeledSample {
                        clip: AudioClip {
                            samples: vec![0.1; 64],
                            sample_rate: 16_000,
                            source_id: format!("sig_{i}"),
                        },
                        label,
                        speaker_id: format!("spk_{i}"),
                        augmented: false,
                    },
                    sequence,
                    pooled,
                }
            })
            .collect()
    }

    fn names(f: usize) -> Vec<String> {
        (0..f).map(|i| format!("mel_{i:02}")).collect()
    }

    fn trained_on(samples: &[StudySample]) -> TrainedModel {
        let refs: Vec<&StudySample> = samples.iter().collect();
        let n_train = samples.len() * 7 / 10;
        let n_val = samples.len() * 15 / 100;
        let (train, rest) = refs.split_at(n_train);
        let (val, _) = rest.split_at(n_val);
        let mut config = ModelConfig::new(ModelKind::SimpleRnn).with_seed(17);
        config.hidden_units = 8;
        config.max_epochs = 25;
        config.patience = 6;
        train_model(&config, train, val, 23).unwrap().model
    }

    #[test]
    fn signal_column_ranks_first_and_noise_is_flat() {
        let f = 8;
        let samples = signal_corpus(60, 10, f, 5, 31);
        let model = trained_on(&samples);
        let test: Vec<&StudySample> = samples[48..].iter().collect();
        let ranked =
            permutation_importance(&model, &test, &names(f), 10, 77).unwrap();
        assert_eq!(ranked[0].feature, "mel_05", "ranking: {ranked:?}");
        assert!(ranked[0].importance_mean > 0.2, "{:?}", ranked[0]);
        // a column the model cannot rely on shows ~zero importance
        let noise = ranked.iter().find(|r| r.feature == "mel_01").unwrap();
        assert!(
            noise.importance_mean.abs() <= 2.0 * noise.importance_sd.max(0.05),
            "noise column importance {noise:?}"
        );
    }

    #[test]
    fn deterministic_per_seed_and_stable_across_seeds() {
        let f = 6;
        let samples = signal_corpus(50, 8, f, 2, 13);
        let model = trained_on(&samples);
        let test: Vec<&StudySample> = samples[40..].iter().collect();
        let a = permutation_importance(&model, &test, &names(f), 10, 5).unwrap();
        let b = permutation_importance(&model, &test, &names(f), 10, 5).unwrap();
        assert_eq!(a, b);
        let c = permutation_importance(&model, &test, &names(f), 10, 6).unwrap();
        // different seed: each feature's value moves by less than 2 SDs
        for fa in &a {
            let fc = c.iter().find(|x| x.feature == fa.feature).unwrap();
            let band = 2.0 * fa.importance_sd.max(fc.importance_sd).max(0.02);
            assert!(
                (fa.importance_mean - fc.importance_mean).abs() <= band,
                "{} moved {} vs band {band}",
                fa.feature,
                (fa.importance_mean - fc.importance_mean).abs()
            );
        }
    }

    #[test]
    fn permuting_everything_collapses_to_majority_rate() {
        let f = 6;
        let samples = signal_corpus(60, 8, f, 2, 19);
        let model = trained_on(&samples);
        let test: Vec<&StudySample> = samples[48..].iter().collect();
        let baseline = evaluate(&model, &test).unwrap().accuracy;
        assert!(baseline >= 0.9, "baseline {baseline}");
        let mut accs = Vec::new();
        for seed in 0..10 {
            accs.push(permute_all_columns_accuracy(&model, &test, seed).unwrap());
        }
        let m = mean(&accs);
        // majority-class rate for the balanced corpus is 0.5
        assert!(m < baseline - 0.2, "mean permuted accuracy {m} vs baseline {baseline}");
        assert!((m - 0.5).abs() < 0.25, "mean permuted accuracy {m}");
    }

    #[test]
    fn grouped_mode_reports_families() {
        let f = 6;
        let samples = signal_corpus(40, 8, f, 2, 23);
        let model = trained_on(&samples);
        let test: Vec<&StudySample> = samples[32..].iter().collect();
        let mut names: Vec<String> = (0..4).map(|i| format!("mel_{i:02}")).collect();
        names.push("chroma_00".into());
        names.push("hurst".into());
        let ranked = grouped_importance(&model, &test, &names, 5, 3).unwrap();
        let labels: Vec<&str> = ranked.iter().map(|r| r.feature.as_str()).collect();
        assert!(labels.contains(&"mel"));
        assert!(labels.contains(&"chroma"));
        assert!(labels.contains(&"scaling"));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let f = 4;
        let samples = signal_corpus(20, 6, f, 1, 3);
        let model = trained_on(&samples);
        let single: Vec<&StudySample> = samples[..1].iter().collect();
        assert!(matches!(
            permutation_importance(&model, &single, &names(f), 5, 0),
            Err(ExplainError::Degenerate)
        ));
        let test: Vec<&StudySample> = samples[16..].iter().collect();
        assert!(permutation_importance(&model, &test, &names(f), 2, 0).is_err());
    }

    #[test]
    fn csv_contract() {
        let ranked = vec![FeatureImportance {
            feature: "mel_06".into(),
            importance_mean: 0.25,
            importance_sd: 0.02,
        }];
        let csv = importance_csv(&ranked);
        assert!(csv.starts_with("feature,rank,importance_mean,importance_sd\n"));
        assert!(csv.contains("mel_06,1,0.25,0.02\n"));
    }
}
