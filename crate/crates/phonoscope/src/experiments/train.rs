//! The training loop: seeded mini-batches, Adam updates, early stopping on
//! validation loss with best-parameter restore.

use crate::models::{
    svm_train, ModelConfig, ModelKind, Network, TrainedModel,
};
use crate::nn::{bce_loss, Adam, AdamConfig, SeqBatch, Tensor};
use crate::spectral::Standardizer;
use crate::util::{mix_seed, seeded_rng, Mat};
use rand::seq::SliceRandom;

use super::{ExperimentError, Result, StudySample};

/// One epoch's record in the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
}

/// Trains one model of `config.kind` and returns it with its history.
///
/// Neural families run seeded shuffled mini-batches with Adam and stop when
/// validation loss fails to improve by `min_delta` for `patience` epochs,
/// restoring the best-validation parameters. The SVM has no epochs; its
/// history is empty.
pub fn train_model(
    config: &ModelConfig,
    train: &[&StudySample],
    val: &[&StudySample],
    run_seed: u64,
) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(ExperimentError::Parameter("empty train or validation split".into()));
    }
    match config.kind {
        ModelKind::Svm => train_svm(config, train),
        _ => train_neural(config, train, val, run_seed),
    }
}

fn train_svm(config: &ModelConfig, train: &[&StudySample]) -> Result<TrainOutcome> {
    let rows: Vec<Vec<f64>> = train.iter().map(|s| s.pooled.clone()).collect();
    let mat = Mat::from_rows(rows);
    let refs = [&mat];
    let standardizer = Standardizer::fit(&refs)?;
    let standardized = standardizer.apply(&mat);
    let labels: Vec<u8> = train.iter().map(|s| s.audio.label).collect();
    let model = svm_train(&standardized, &labels, &config.svm)?;
    Ok(TrainOutcome {
        model: TrainedModel::Svm { model, standardizer },
        history: Vec::new(),
        stopped_early: false,
    })
}

fn train_neural(
    config: &ModelConfig,
    train: &[&StudySample],
    val: &[&StudySample],
    run_seed: u64,
) -> Result<TrainOutcome> {
    let seq_refs: Vec<&Mat> = train.iter().map(|s| &s.sequence).collect();
    let standardizer = Standardizer::fit(&seq_refs)?;
    let standardized: Vec<Mat> = train.iter().map(|s| standardizer.apply(&s.sequence)).collect();
    let labels: Vec<f64> = train.iter().map(|s| f64::from(s.audio.label)).collect();

    // typical frame count anchors the CNN's fixed input length
    let t_build = median_frames(&standardized);
    let f = standardized[0].cols();
    let mut network = Network::build(config, (t_build, f))?;
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() });

    let val_standardized: Vec<Mat> = val.iter().map(|s| standardizer.apply(&s.sequence)).collect();
    let val_labels: Vec<f64> = val.iter().map(|s| f64::from(s.audio.label)).collect();

    let mut history = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_state: Option<Vec<Tensor>> = None;
    let mut epochs_without_improvement = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let epoch_seed = mix_seed(run_seed, &format!("epoch{epoch}"));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seeded_rng(epoch_seed));

        let mut batches: Vec<Vec<usize>> =
            order.chunks(config.batch_size.max(2)).map(<[usize]>::to_vec).collect();
        // batch norm cannot standardize a single example; fold a trailing
        // singleton into the previous batch
        if let Some(last) = batches.last() {
            if last.len() == 1 && batches.len() > 1 {
                let orphan = batches.pop().unwrap()[0];
                batches.last_mut().unwrap().push(orphan);
            }
        }

        let mut dropout_rng = seeded_rng(mix_seed(epoch_seed, "dropout"));
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch_indices in &batches {
            let batch = pad_batch(&standardized, batch_indices);
            let y: Vec<f64> = batch_indices.iter().map(|&i| labels[i]).collect();
            let (probs, cache) = network.forward_train(&batch, &mut dropout_rng)?;
            let (loss, dprobs) = bce_loss(&probs, &y).map_err(crate::models::ModelError::from)?;
            if !loss.is_finite() {
                return Err(ExperimentError::Divergence {
                    epoch,
                    detail: format!("train loss {loss}"),
                });
            }
            network.zero_grads();
            network.backward(&cache, &dprobs)?;
            let mut pairs = network.adam_pairs();
            adam.step(&mut pairs).map_err(crate::models::ModelError::from)?;
            epoch_loss += loss * batch_indices.len() as f64;
            seen += batch_indices.len();
        }
        let train_loss = epoch_loss / seen as f64;

        let (val_loss, val_acc) = validate(&network, &val_standardized, &val_labels)?;
        if !val_loss.is_finite() {
            return Err(ExperimentError::Divergence { epoch, detail: format!("val loss {val_loss}") });
        }
        history.push(EpochStats { epoch, train_loss, val_loss, val_acc });

        if val_loss < best_val - config.min_delta {
            best_val = val_loss;
            best_state = Some(network.state_tensors().into_iter().cloned().collect());
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    if let Some(state) = best_state {
        for (slot, t) in network.state_tensors_mut().into_iter().zip(state) {
            *slot = t;
        }
    }
    Ok(TrainOutcome {
        model: TrainedModel::Neural { network, standardizer },
        history,
        stopped_early,
    })
}

fn median_frames(mats: &[Mat]) -> usize {
    let mut ts: Vec<usize> = mats.iter().map(Mat::rows).collect();
    ts.sort_unstable();
    ts[ts.len() / 2]
}

fn pad_batch(standardized: &[Mat], indices: &[usize]) -> SeqBatch {
    let t_max = indices.iter().map(|&i| standardized[i].rows()).max().unwrap();
    let f = standardized[indices[0]].cols();
    let mut data = vec![0.0; indices.len() * t_max * f];
    let mut lengths = Vec::with_capacity(indices.len());
    for (bi, &i) in indices.iter().enumerate() {
        let m = &standardized[i];
        for t in 0..m.rows() {
            let at = (bi * t_max + t) * f;
            data[at..at + f].copy_from_slice(m.row(t));
        }
        lengths.push(m.rows());
    }
    SeqBatch::new(indices.len(), t_max, f, data, lengths)
}

fn validate(network: &Network, sequences: &[Mat], labels: &[f64]) -> Result<(f64, f64)> {
    let mut probs = Vec::with_capacity(sequences.len());
    for m in sequences {
        probs.push(network.predict_one(m)?);
    }
    let (loss, _) = bce_loss(&probs, labels).map_err(crate::models::ModelError::from)?;
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| f64::from(u8::from(p >= 0.5)) == y)
        .count();
    Ok((loss, correct as f64 / labels.len() as f64))
}
