//! Band-limited sample-rate conversion with a windowed-sinc kernel.

use super::{AudioClip, AudioError, Result};

pub const MIN_RATE_HZ: u32 = 4_000;
pub const MAX_RATE_HZ: u32 = 96_000;

/// Half-width of the interpolation kernel at the lower of the two rates.
const HALF_TAPS: f64 = 32.0;

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let t = std::f64::consts::PI * (x + 1.0);
    0.42 - 0.5 * t.cos() + 0.08 * (2.0 * t).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Resamples raw samples by `ratio` (output length = round(len * ratio)),
/// low-passing at the narrower of the two Nyquist bands.
///
/// Each output sample is a windowed-sinc interpolation of the input at time
/// `n / ratio`; the kernel weights are renormalized per output position so a
/// constant signal stays constant.
pub fn resample_ratio(samples: &[f64], ratio: f64) -> Vec<f64> {
    assert!(ratio.is_finite() && ratio > 0.0);
    let n_in = samples.len();
    let n_out = ((n_in as f64) * ratio).round() as usize;
    if n_out == 0 {
        return Vec::new();
    }
    if (ratio - 1.0).abs() < 1e-15 {
        return samples.to_vec();
    }

    // cutoff in cycles per input sample; widen the kernel when downsampling
    let cutoff = 0.5 * ratio.min(1.0) * 0.98;
    let half_width = HALF_TAPS * (1.0 / ratio).max(1.0);

    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let t = n as f64 / ratio;
        let lo = ((t - half_width).ceil() as isize).max(0);
        let hi = ((t + half_width).floor() as isize).min(n_in as isize - 1);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in lo..=hi {
            let x = t - k as f64;
            let w = 2.0 * cutoff * sinc(2.0 * cutoff * x) * blackman(x / half_width);
            acc += samples[k as usize] * w;
            norm += w;
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    out
}

/// Resamples a clip to `target_rate`.
///
/// Output length is `round(len * target / source)`; a pure tone below the new
/// Nyquist keeps its frequency within 0.1%.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if !(MIN_RATE_HZ..=MAX_RATE_HZ).contains(&target_rate) {
        return Err(AudioError::Parameter(format!(
            "target rate {target_rate} Hz outside {MIN_RATE_HZ}-{MAX_RATE_HZ} Hz"
        )));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let ratio = f64::from(target_rate) / f64::from(clip.sample_rate);
    let mut samples = resample_ratio(&clip.samples, ratio);
    // interpolation overshoot can poke past full scale; clamp to the clip domain
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    AudioClip::new(samples, target_rate, clip.source_id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dominant_frequency;

    fn tone(freq: f64, rate: u32, secs: f64, amp: f64) -> AudioClip {
        let n = (secs * f64::from(rate)).round() as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin())
            .collect();
        AudioClip::new(samples, rate, "tone").unwrap()
    }

    #[test]
    fn identity_when_rates_match() {
        let clip = tone(440.0, 16_000, 0.5, 0.8);
        let out = resample(&clip, 16_000).unwrap();
        assert_eq!(out.samples, clip.samples);
    }

    #[test]
    fn output_length_follows_ratio() {
        let clip = tone(440.0, 50_000, 1.0, 0.8);
        let out = resample(&clip, 16_000).unwrap();
        assert!((out.samples.len() as i64 - 16_000).abs() <= 1);
    }

    #[test]
    fn tone_frequency_preserved_downsampling() {
        let clip = tone(440.0, 50_000, 1.0, 0.8);
        let out = resample(&clip, 16_000).unwrap();
        let f = dominant_frequency(&out.samples, out.sample_rate);
        assert!((f - 440.0).abs() / 440.0 < 1e-3, "got {f}");
    }

    #[test]
    fn round_trip_preserves_tone_within_two_permille() {
        for (r1, r2) in [(16_000u32, 44_100u32), (50_000, 16_000), (44_100, 50_000)] {
            let clip = tone(440.0, r1, 1.0, 0.8);
            let there = resample(&clip, r2).unwrap();
            let back = resample(&there, r1).unwrap();
            let f = dominant_frequency(&back.samples, back.sample_rate);
            assert!((f - 440.0).abs() / 440.0 < 2e-3, "{r1}->{r2}: got {f}");
        }
    }

    #[test]
    fn rejects_out_of_band_targets() {
        let clip = tone(440.0, 16_000, 0.2, 0.8);
        assert!(resample(&clip, 3_000).is_err());
        assert!(resample(&clip, 100_000).is_err());
    }
}
