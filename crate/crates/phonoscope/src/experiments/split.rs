//! Stratified train/validation/test splitting and stratified k-fold indices.

use rand::seq::SliceRandom;

use crate::util::seeded_rng;

use super::{ExperimentError, Result, SampleMeta};

/// Split ratios and behavior. Speaker grouping is on by default so no voice
/// appears on both sides of a split boundary.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    pub stratify: bool,
    pub group_by_speaker: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.7, val: 0.15, test: 0.15, seed: 0, stratify: true, group_by_speaker: true }
    }
}

impl SplitSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.train <= 0.0 || self.val <= 0.0 || self.test <= 0.0 {
            return Err(ExperimentError::Parameter("all split ratios must be positive".into()));
        }
        if (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(ExperimentError::Parameter(format!(
                "ratios sum to {}, expected 1",
                self.train + self.val + self.test
            )));
        }
        Ok(())
    }
}

/// Index partition into train/validation/test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder allocation of `n` items across the three ratios.
fn allocate(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> =
        exact.iter().enumerate().map(|(i, e)| (i, e - e.floor())).collect();
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for k in 0..n - assigned {
        counts[remainders[k % 3].0] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

/// Stratified split of the sample set.
///
/// Per-class counts in each split match the ratios to within one sample.
/// Augmented samples are routed straight to train (they must never reach
/// validation or test). With `group_by_speaker`, whole speakers are assigned
/// to one split by greedy deficit-filling; exact per-class proportionality
/// then depends on how finely speakers partition the data.
pub fn stratified_split(meta: &[SampleMeta], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let originals: Vec<usize> = (0..meta.len()).filter(|&i| !meta[i].augmented).collect();
    let mut split = Split { train: Vec::new(), val: Vec::new(), test: Vec::new() };

    // route augmented material to train unconditionally
    for i in 0..meta.len() {
        if meta[i].augmented {
            split.train.push(i);
        }
    }

    for class in [0u8, 1u8] {
        let class_n = originals.iter().filter(|&&i| meta[i].label == class).count();
        if class_n < 3 {
            return Err(ExperimentError::Stratification(format!(
                "class {class} has {class_n} samples; cannot populate three splits"
            )));
        }
    }

    let ratios = [spec.train, spec.val, spec.test];
    if spec.group_by_speaker {
        // group originals by speaker, shuffle deterministically, then fill the
        // split with the largest remaining per-class deficit
        let mut speakers: Vec<String> = Vec::new();
        let mut by_speaker: std::collections::HashMap<String, Vec<usize>> =
            std::collections::HashMap::new();
        for &i in &originals {
            let entry = by_speaker.entry(meta[i].speaker_id.clone()).or_default();
            if entry.is_empty() {
                speakers.push(meta[i].speaker_id.clone());
            }
            entry.push(i);
        }
        let mut rng = seeded_rng(spec.seed);
        speakers.shuffle(&mut rng);

        // per-class targets per split
        let mut targets = [[0.0f64; 2]; 3];
        for class in [0usize, 1usize] {
            let class_n =
                originals.iter().filter(|&&i| meta[i].label == class as u8).count() as f64;
            for s in 0..3 {
                targets[s][class] = ratios[s] * class_n;
            }
        }
        let mut filled = [[0.0f64; 2]; 3];
        for sp in &speakers {
            let members = &by_speaker[sp];
            let counts = [
                members.iter().filter(|&&i| meta[i].label == 0).count() as f64,
                members.iter().filter(|&&i| meta[i].label == 1).count() as f64,
            ];
            // deficit score: how far below target each split still is
            let mut best = 0usize;
            let mut best_score = f64::MIN;
            for s in 0..3 {
                let score: f64 = (0..2)
                    .map(|c| {
                        let deficit = targets[s][c] - filled[s][c];
                        // normalize by the target so small splits compete
                        let rel = if targets[s][c] > 0.0 { deficit / targets[s][c] } else { 0.0 };
                        rel * counts[c]
                    })
                    .sum();
                if score > best_score {
                    best_score = score;
                    best = s;
                }
            }
            for c in 0..2 {
                filled[best][c] += counts[c];
            }
            let dest = match best {
                0 => &mut split.train,
                1 => &mut split.val,
                _ => &mut split.test,
            };
            dest.extend(members.iter().copied());
        }
    } else {
        let mut rng = seeded_rng(spec.seed);
        for class in [0u8, 1u8] {
            let mut members: Vec<usize> =
                originals.iter().filter(|&&i| meta[i].label == class).copied().collect();
            members.shuffle(&mut rng);
            let [n_train, n_val, _n_test] = allocate(members.len(), ratios);
            for (pos, idx) in members.into_iter().enumerate() {
                if pos < n_train {
                    split.train.push(idx);
                } else if pos < n_train + n_val {
                    split.val.push(idx);
                } else {
                    split.test.push(idx);
                }
            }
        }
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    if split.val.is_empty() || split.test.is_empty() {
        return Err(ExperimentError::Stratification(
            "a split ended up empty; corpus too small for the ratios".into(),
        ));
    }
    Ok(split)
}

/// Stratified k-fold validation indices: folds partition `0..n`, per-fold
/// class counts are within one of proportional.
pub fn kfold_indices(n: usize, k: usize, labels: &[u8], seed: u64) -> Result<Vec<Vec<usize>>> {
    if labels.len() != n {
        return Err(ExperimentError::Parameter(format!(
            "{n} samples but {} labels",
            labels.len()
        )));
    }
    if k < 2 {
        return Err(ExperimentError::Parameter(format!("k {k} < 2")));
    }
    for class in [0u8, 1u8] {
        let class_n = labels.iter().filter(|&&l| l == class).count();
        if class_n > 0 && class_n < k {
            return Err(ExperimentError::Fold(format!(
                "class {class} has {class_n} members, fewer than k = {k}"
            )));
        }
    }
    let mut rng = seeded_rng(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            folds[pos % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn meta(label: u8, speaker: &str) -> SampleMeta {
        SampleMeta { label, speaker_id: speaker.to_string(), augmented: false }
    }

    fn corpus(n_normal: usize, n_nodule: usize) -> Vec<SampleMeta> {
        let mut v = Vec::new();
        for i in 0..n_normal {
            v.push(meta(0, &format!("spk_n{i}")));
        }
        for i in 0..n_nodule {
            v.push(meta(1, &format!("spk_p{i}")));
        }
        v
    }

    #[test]
    fn proportional_counts_on_balanced_corpus() {
        let samples = corpus(60, 40);
        let spec = SplitSpec { group_by_speaker: false, ..SplitSpec::default() };
        let split = stratified_split(&samples, &spec).unwrap();
        assert_eq!(split.train.len(), 70);
        assert_eq!(split.val.len(), 15);
        assert_eq!(split.test.len(), 15);
        let count = |idx: &[usize], label: u8| idx.iter().filter(|&&i| samples[i].label == label).count();
        assert_eq!((count(&split.train, 0), count(&split.train, 1)), (42, 28));
        assert_eq!((count(&split.val, 0), count(&split.val, 1)), (9, 6));
        assert_eq!((count(&split.test, 0), count(&split.test, 1)), (9, 6));
    }

    #[test]
    fn split_is_deterministic_per_seed_and_partitions() {
        let samples = corpus(30, 20);
        let spec = SplitSpec::default().with_seed(5);
        let a = stratified_split(&samples, &spec).unwrap();
        let b = stratified_split(&samples, &spec).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&samples, &SplitSpec::default().with_seed(6)).unwrap();
        assert_ne!(a, c);

        let mut all: Vec<usize> =
            a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn heavy_speaker_stays_in_one_split() {
        let mut samples = Vec::new();
        for i in 0..40 {
            let speaker = if i < 16 { "spk_big".to_string() } else { format!("spk_{i}") };
            samples.push(SampleMeta { label: u8::from(i % 2 == 0), speaker_id: speaker, augmented: false });
        }
        let split = stratified_split(&samples, &SplitSpec::default().with_seed(3)).unwrap();
        let locate = |i: usize| -> usize {
            if split.train.contains(&i) {
                0
            } else if split.val.contains(&i) {
                1
            } else {
                2
            }
        };
        let home = locate(0);
        for i in 0..16 {
            assert_eq!(locate(i), home, "sample {i} of the heavy speaker strayed");
        }
    }

    #[test]
    fn augmented_samples_forced_into_train() {
        let mut samples = corpus(10, 10);
        samples.push(SampleMeta { label: 1, speaker_id: "spk_p0".into(), augmented: true });
        let split = stratified_split(&samples, &SplitSpec::default()).unwrap();
        assert!(split.train.contains(&20));
    }

    #[test]
    fn tiny_class_is_a_stratification_error() {
        let samples = corpus(10, 2);
        assert!(matches!(
            stratified_split(&samples, &SplitSpec::default()),
            Err(ExperimentError::Stratification(_))
        ));
    }

    #[test]
    fn kfold_balanced_and_exhaustive() {
        let labels = [0u8, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let folds = kfold_indices(10, 5, &labels, 7).unwrap();
        assert_eq!(folds.len(), 5);
        for fold in &folds {
            assert_eq!(fold.len(), 2);
            let ones = fold.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(ones, 1);
        }
        let mut all: Vec<usize> = folds.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        // determinism
        assert_eq!(kfold_indices(10, 5, &labels, 7).unwrap(), kfold_indices(10, 5, &labels, 7).unwrap());
        assert!(kfold_indices(10, 8, &labels, 7).is_err());
    }

    #[test]
    fn random_corpora_respect_contracts() {
        let mut rng = crate::util::seeded_rng(123);
        for trial in 0..100 {
            let n_normal = rng.gen_range(6..60);
            let n_nodule = rng.gen_range(6..60);
            let samples = corpus(n_normal, n_nodule);
            let spec = SplitSpec { group_by_speaker: false, seed: trial, ..SplitSpec::default() };
            let split = stratified_split(&samples, &spec).unwrap();
            // partition
            let mut all: Vec<usize> =
                split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..samples.len()).collect::<Vec<_>>());
            // per-class proportionality within one sample
            for class in [0u8, 1] {
                let class_n = samples.iter().filter(|m| m.label == class).count() as f64;
                for (idx, ratio) in
                    [(&split.train, 0.7), (&split.val, 0.15), (&split.test, 0.15)]
                {
                    let got = idx.iter().filter(|&&i| samples[i].label == class).count() as f64;
                    assert!(
                        (got - ratio * class_n).abs() <= 1.0 + 1e-9,
                        "trial {trial}: class {class} got {got} vs target {}",
                        ratio * class_n
                    );
                }
            }
        }
    }
}
