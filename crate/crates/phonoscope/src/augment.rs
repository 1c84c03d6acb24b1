//! Class-balancing data augmentation: calibrated Gaussian noise, phase-vocoder
//! time stretching, and pitch shifting.
//!
//! Augmentation belongs to the training split only. Applying it before
//! splitting would leak near-duplicates of training material into validation
//! and test; the experiment harness enforces that ordering.

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::{resample_ratio, AudioClip, LabeledSample};
use crate::util::{seeded_rng, splitmix64};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("silent clip cannot be augmented")]
    DegenerateInput,
    #[error("augmentation policy unreachable: need {needed} new samples but the grid supports at most {capacity}")]
    PolicyUnreachable { needed: usize, capacity: usize },
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// Adds white Gaussian noise at `snr_db` (signal-to-noise ratio in dB).
///
/// The noise buffer is rescaled to hit the requested SNR exactly before the
/// final clamp to [-1, 1]. Returns the noisy clip and the fraction of samples
/// the clamp touched. `snr_db = +inf` is the no-op sentinel.
pub fn add_gaussian_noise(clip: &AudioClip, snr_db: f64, seed: u64) -> Result<(AudioClip, f64)> {
    if snr_db.is_nan() {
        return Err(AugmentError::Parameter("snr_db is NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok((clip.clone(), 0.0));
    }
    let sig_power = clip.power();
    if sig_power <= 0.0 {
        return Err(AugmentError::DegenerateInput);
    }
    let mut rng = seeded_rng(seed);
    let n = clip.samples.len();
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    let noise_power = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let target_power = sig_power / 10f64.powf(snr_db / 10.0);
    let gain = (target_power / noise_power).sqrt();

    let mut clipped = 0usize;
    let samples: Vec<f64> = clip
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, &w)| {
            let v = s + gain * w;
            if v.abs() > 1.0 {
                clipped += 1;
            }
            v.clamp(-1.0, 1.0)
        })
        .collect();
    let out = AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    };
    Ok((out, clipped as f64 / n as f64))
}

const PV_FRAME: usize = 1024;
const PV_HOP: usize = PV_FRAME / 4;

/// Synthesis hop of the phase vocoder, in samples. Duration guarantees in
/// stretching operations are stated to within this hop.
pub const STRETCH_HOP: usize = PV_HOP;

/// Phase-vocoder time stretch by `factor`: output duration is
/// `original / factor` to within one hop, frequencies unchanged.
pub fn time_stretch(clip: &AudioClip, factor: f64) -> Result<AudioClip> {
    if !(0.8..=1.25).contains(&factor) {
        return Err(AugmentError::Parameter(format!(
            "stretch factor {factor} outside [0.8, 1.25]"
        )));
    }
    stretch_unchecked(clip, factor)
}

/// The vocoder itself, without the public range check; pitch shifting needs
/// factors down to 0.5 and up to 2.
fn stretch_unchecked(clip: &AudioClip, factor: f64) -> Result<AudioClip> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AugmentError::Parameter("stretch factor must be positive".into()));
    }
    let x = &clip.samples;
    if x.len() < PV_FRAME * 2 {
        return Err(AugmentError::Parameter(format!(
            "clip too short for the vocoder ({} samples < {})",
            x.len(),
            PV_FRAME * 2
        )));
    }
    let window: Vec<f64> = (0..PV_FRAME)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / PV_FRAME as f64).cos()))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(PV_FRAME);
    let ifft = planner.plan_fft_inverse(PV_FRAME);

    let analyze = |center: usize, buf: &mut Vec<Complex<f64>>| {
        buf.clear();
        for (i, w) in window.iter().enumerate() {
            let idx = center + i;
            let v = if idx < x.len() { x[idx] } else { 0.0 };
            buf.push(Complex::new(v * w, 0.0));
        }
        fft.process(buf);
    };

    let n_out_frames = (x.len() as f64 / factor / PV_HOP as f64).ceil() as usize;
    let out_len = ((x.len() as f64) / factor).round() as usize;
    let mut out = vec![0.0f64; n_out_frames * PV_HOP + PV_FRAME];
    let mut norm = vec![0.0f64; out.len()];

    let bins = PV_FRAME / 2 + 1;
    let omega: Vec<f64> = (0..bins)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / PV_FRAME as f64)
        .collect();

    let mut prev_spec = vec![Complex::new(0.0, 0.0); PV_FRAME];
    let mut prev_center = 0usize;
    let mut syn_phase = vec![0.0f64; bins];
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(PV_FRAME);
    let mut frame = vec![Complex::new(0.0, 0.0); PV_FRAME];

    for j in 0..n_out_frames {
        let center = ((j * PV_HOP) as f64 * factor).round() as usize;
        analyze(center, &mut buf);

        if j == 0 {
            for k in 0..bins {
                syn_phase[k] = buf[k].arg();
            }
        } else {
            let delta = (center - prev_center).max(1) as f64;
            for k in 0..bins {
                let raw = buf[k].arg() - prev_spec[k].arg() - omega[k] * delta;
                let wrapped = raw
                    - 2.0 * std::f64::consts::PI * (raw / (2.0 * std::f64::consts::PI)).round();
                let inst_freq = omega[k] + wrapped / delta;
                syn_phase[k] += inst_freq * PV_HOP as f64;
            }
        }
        prev_spec.copy_from_slice(&buf);
        prev_center = center;

        for k in 0..bins {
            let mag = buf[k].norm();
            frame[k] = Complex::from_polar(mag, syn_phase[k]);
        }
        for k in 1..PV_FRAME / 2 {
            frame[PV_FRAME - k] = frame[k].conj();
        }
        ifft.process(&mut frame);
        let at = j * PV_HOP;
        for (i, w) in window.iter().enumerate() {
            out[at + i] += frame[i].re / PV_FRAME as f64 * w;
            norm[at + i] += w * w;
        }
        for v in frame.iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
    }

    let mut samples: Vec<f64> = out[..out_len]
        .iter()
        .zip(&norm[..out_len])
        .map(|(&v, &n)| if n > 1e-9 { v / n } else { 0.0 })
        .collect();
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    })
}

/// Pitch shift by `semitones` (up to an octave either way), preserving
/// duration to within one hop.
///
/// Implemented as a vocoder stretch to `1/r` of the original speed followed by
/// resampling the time axis back down by `r`, with `r = 2^(semitones/12)`;
/// frequencies end up multiplied by `r`.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> Result<AudioClip> {
    if !(semitones.is_finite() && semitones.abs() <= 12.0) {
        return Err(AugmentError::Parameter(format!(
            "semitones {semitones} outside [-12, 12]"
        )));
    }
    if semitones == 0.0 {
        return Ok(clip.clone());
    }
    let r = 2f64.powf(semitones / 12.0);
    let slowed = stretch_unchecked(clip, 1.0 / r)?;
    let mut samples = resample_ratio(&slowed.samples, 1.0 / r);
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    })
}

/// One augmentation transform drawn from the policy grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    PitchShift(f64),
    TimeStretch(f64),
    GaussianNoise(f64),
}

impl Transform {
    pub fn apply(&self, clip: &AudioClip, seed: u64) -> Result<AudioClip> {
        match *self {
            Transform::PitchShift(s) => pitch_shift(clip, s),
            Transform::TimeStretch(f) => time_stretch(clip, f),
            Transform::GaussianNoise(snr) => Ok(add_gaussian_noise(clip, snr, seed)?.0),
        }
    }
}

/// Balancing policy: augment the minority class toward a 1:1 ratio using
/// transforms drawn deterministically from the grid.
#[derive(Debug, Clone)]
pub struct AugmentPolicy {
    /// Acceptable class-count gap after balancing.
    pub tolerance: usize,
    pub grid: Vec<Transform>,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            tolerance: 0,
            grid: vec![
                Transform::PitchShift(-2.0),
                Transform::PitchShift(-1.0),
                Transform::PitchShift(1.0),
                Transform::PitchShift(2.0),
                Transform::TimeStretch(0.9),
                Transform::TimeStretch(1.1),
                Transform::GaussianNoise(20.0),
                Transform::GaussianNoise(25.0),
                Transform::GaussianNoise(30.0),
            ],
        }
    }
}

/// Balances classes by augmenting minority samples.
///
/// Originals are returned unchanged as a prefix of the output; each appended
/// sample keeps its source's label and speaker and carries `augmented = true`.
/// Deterministic for a fixed seed.
pub fn augment_dataset(
    samples: &[LabeledSample],
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    if policy.grid.is_empty() {
        return Err(AugmentError::Parameter("empty transform grid".into()));
    }
    let n_nodule = samples.iter().filter(|s| s.label == 1).count();
    let n_normal = samples.len() - n_nodule;
    let (minority, minority_count, majority_count) = if n_nodule < n_normal {
        (1u8, n_nodule, n_normal)
    } else {
        (0u8, n_normal, n_nodule)
    };
    let gap = majority_count - minority_count;
    if gap <= policy.tolerance {
        return Ok(samples.to_vec());
    }
    let needed = gap - policy.tolerance;
    let pool: Vec<&LabeledSample> =
        samples.iter().filter(|s| s.label == minority && !s.augmented).collect();
    let capacity = pool.len() * policy.grid.len();
    if pool.is_empty() || needed > capacity {
        return Err(AugmentError::PolicyUnreachable { needed, capacity });
    }

    let mut rng = seeded_rng(seed);
    let mut out = samples.to_vec();
    let mut used = std::collections::HashSet::new();
    for i in 0..needed {
        let source = pool[i % pool.len()];
        // deterministic draw of an unused (source, transform) pair
        let mut t_idx = rng.gen_range(0..policy.grid.len());
        while !used.insert((i % pool.len(), t_idx)) {
            t_idx = (t_idx + 1) % policy.grid.len();
        }
        let transform = policy.grid[t_idx];
        let sub_seed = splitmix64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9));
        let mut clip = transform.apply(&source.clip, sub_seed)?;
        clip.source_id = format!("{}#aug{}", source.clip.source_id, i);
        out.push(LabeledSample {
            clip,
            label: source.label,
            speaker_id: source.speaker_id.clone(),
            augmented: true,
        });
    }
    Ok(out)
}
