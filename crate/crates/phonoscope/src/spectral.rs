//! STFT power spectra, log-mel spectrograms, MFCCs, and chroma features.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::AudioClip;
use crate::preprocess::{frame_signal, FrameSequence, FramingParams};
use crate::util::Mat;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("mel resolution: filter {filter} spans no FFT bin (n_fft {n_fft}, n_mels {n_mels})")]
    MelResolution { filter: usize, n_fft: usize, n_mels: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Mel,
    Mfcc,
    Chroma,
    Combined,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Mel => "mel",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Chroma => "chroma",
            FeatureKind::Combined => "combined",
        }
    }
}

/// Extraction parameters. The defaults (512-point FFT, 64 mel bands,
/// 13 MFCCs, 50 Hz - 8 kHz) keep the combined vector small enough for
/// desk-scale training.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureParams {
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Power floor applied before the log.
    pub floor: f64,
    pub ref_a4_hz: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            n_fft: 512,
            n_mels: 64,
            n_mfcc: 13,
            fmin_hz: 50.0,
            fmax_hz: 8_000.0,
            floor: 1e-10,
            ref_a4_hz: 440.0,
        }
    }
}

/// Time-major matrix of per-frame feature vectors.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub data: Mat,
    pub kind: FeatureKind,
    pub clip_id: String,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.data.rows()
    }

    pub fn n_features(&self) -> usize {
        self.data.cols()
    }
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// One-sided power spectrogram: each row is |DFT(zero-padded frame)|^2 over
/// the non-negative-frequency half (n_fft/2 + 1 bins).
pub fn power_spectrogram(frames: &FrameSequence, n_fft: usize) -> Result<Mat> {
    if n_fft < frames.frame_len() {
        return Err(FeatureError::Parameter(format!(
            "n_fft {n_fft} smaller than frame length {}",
            frames.frame_len()
        )));
    }
    if !n_fft.is_power_of_two() {
        return Err(FeatureError::Parameter(format!("n_fft {n_fft} is not a power of two")));
    }
    let n_bins = n_fft / 2 + 1;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut out = Mat::zeros(frames.n_frames(), n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..frames.n_frames() {
        for v in buf.iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        for (i, &s) in frames.frames.row(t).iter().enumerate() {
            buf[i] = Complex::new(s, 0.0);
        }
        fft.process(&mut buf);
        let row = out.row_mut(t);
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = buf[k].norm_sqr();
        }
    }
    Ok(out)
}

/// Triangular mel filter bank: `n_mels` filters with centers equally spaced
/// on the mel scale between `fmin` and `fmax`, returned as an
/// n_mels x (n_fft/2 + 1) weight matrix (peak weight 1 per filter).
pub fn mel_filterbank(
    n_fft: usize,
    n_mels: usize,
    rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<Mat> {
    let nyquist = f64::from(rate) / 2.0;
    if !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
        return Err(FeatureError::Parameter(format!(
            "need 0 <= fmin < fmax <= rate/2, got fmin {fmin}, fmax {fmax}, nyquist {nyquist}"
        )));
    }
    if n_mels < 2 {
        return Err(FeatureError::Parameter("n_mels must be >= 2".into()));
    }
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(fmin);
    let mel_hi = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let bin_hz = f64::from(rate) / n_fft as f64;
    let mut fb = Mat::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut any = false;
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            if w > 0.0 {
                any = true;
            }
            fb.set(m, k, w);
        }
        if !any {
            return Err(FeatureError::MelResolution { filter: m, n_fft, n_mels });
        }
    }
    Ok(fb)
}

/// Log-mel spectrogram in dB: `10 * log10(max(power * fb', floor))`.
pub fn mel_spectrogram(power: &Mat, fb: &Mat, floor: f64, clip_id: &str) -> Result<FeatureMatrix> {
    if power.cols() != fb.cols() {
        return Err(FeatureError::Dimension(format!(
            "power has {} bins, filter bank expects {}",
            power.cols(),
            fb.cols()
        )));
    }
    if !(floor > 0.0) {
        return Err(FeatureError::Parameter("floor must be positive".into()));
    }
    let (t_frames, n_mels) = (power.rows(), fb.rows());
    let mut out = Mat::zeros(t_frames, n_mels);
    for t in 0..t_frames {
        let p = power.row(t);
        let row = out.row_mut(t);
        for (m, slot) in row.iter_mut().enumerate() {
            let e: f64 = fb.row(m).iter().zip(p).map(|(w, x)| w * x).sum();
            *slot = 10.0 * e.max(floor).log10();
        }
    }
    Ok(FeatureMatrix { data: out, kind: FeatureKind::Mel, clip_id: clip_id.to_string() })
}

/// Orthonormal type-II DCT applied per frame to the log-mel energies,
/// keeping coefficients 0 .. n_mfcc-1.
pub fn mfcc(mel: &FeatureMatrix, n_mfcc: usize) -> Result<FeatureMatrix> {
    let n_mels = mel.n_features();
    if n_mfcc > n_mels {
        return Err(FeatureError::Parameter(format!(
            "n_mfcc {n_mfcc} exceeds n_mels {n_mels}"
        )));
    }
    let mut out = Mat::zeros(mel.n_frames(), n_mfcc);
    let norm0 = (1.0 / n_mels as f64).sqrt();
    let norm = (2.0 / n_mels as f64).sqrt();
    for t in 0..mel.n_frames() {
        let x = mel.data.row(t);
        let row = out.row_mut(t);
        for (k, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (n, &v) in x.iter().enumerate() {
                acc += v
                    * (std::f64::consts::PI * (n as f64 + 0.5) * k as f64 / n_mels as f64).cos();
            }
            *slot = acc * if k == 0 { norm0 } else { norm };
        }
    }
    Ok(FeatureMatrix { data: out, kind: FeatureKind::Mfcc, clip_id: mel.clip_id.clone() })
}

const CHROMA_MIN_HZ: f64 = 30.0;

/// Pitch-class energy distribution. Each FFT bin at or above 30 Hz maps to
/// class `(round(12 * log2(f / ref_a4)) + 9) mod 12` (class 0 = C); bin powers
/// accumulate per class and each non-silent frame is max-normalized.
pub fn chroma(power: &Mat, rate: u32, n_fft: usize, ref_a4: f64, clip_id: &str) -> Result<FeatureMatrix> {
    if !(400.0..=480.0).contains(&ref_a4) {
        return Err(FeatureError::Parameter(format!("ref_a4 {ref_a4} outside [400, 480]")));
    }
    let bin_hz = f64::from(rate) / n_fft as f64;
    let mut class_of = vec![None; power.cols()];
    for (k, slot) in class_of.iter_mut().enumerate() {
        let f = k as f64 * bin_hz;
        if f >= CHROMA_MIN_HZ {
            let semis = (12.0 * (f / ref_a4).log2()).round() as i64;
            *slot = Some(((semis + 9).rem_euclid(12)) as usize);
        }
    }
    let mut out = Mat::zeros(power.rows(), 12);
    for t in 0..power.rows() {
        let p = power.row(t);
        let row = out.row_mut(t);
        for (k, &cls) in class_of.iter().enumerate() {
            if let Some(c) = cls {
                row[c] += p[k];
            }
        }
        let max = row.iter().fold(0.0f64, |m, &v| m.max(v));
        if max > 0.0 {
            for v in row.iter_mut() {
                *v /= max;
            }
        }
    }
    Ok(FeatureMatrix { data: out, kind: FeatureKind::Chroma, clip_id: clip_id.to_string() })
}

/// The mel + mfcc + chroma triple and their frame-aligned concatenation.
#[derive(Debug, Clone)]
pub struct FeatureBundle {
    pub mel: FeatureMatrix,
    pub mfcc: FeatureMatrix,
    pub chroma: FeatureMatrix,
    pub combined: FeatureMatrix,
}

/// Runs the full extractor on a preprocessed clip: framing, power spectrum,
/// then mel / MFCC / chroma, plus the combined `[mel | mfcc | chroma]` matrix.
pub fn extract_all(
    clip: &AudioClip,
    framing: &FramingParams,
    params: &FeatureParams,
) -> Result<FeatureBundle> {
    let frames = frame_signal(clip, framing)?;
    let power = power_spectrogram(&frames, params.n_fft)?;
    let fb = mel_filterbank(params.n_fft, params.n_mels, clip.sample_rate, params.fmin_hz, params.fmax_hz)?;
    let mel = mel_spectrogram(&power, &fb, params.floor, &clip.source_id)?;
    let mfcc_m = mfcc(&mel, params.n_mfcc)?;
    let chroma_m = chroma(&power, clip.sample_rate, params.n_fft, params.ref_a4_hz, &clip.source_id)?;
    let combined = Mat::hconcat(&[&mel.data, &mfcc_m.data, &chroma_m.data]);
    Ok(FeatureBundle {
        combined: FeatureMatrix {
            data: combined,
            kind: FeatureKind::Combined,
            clip_id: clip.source_id.clone(),
        },
        mel,
        mfcc: mfcc_m,
        chroma: chroma_m,
    })
}

/// Column names for the combined matrix: `mel_00..`, `mfcc_00..`,
/// `chroma_00..`, optionally followed by `hurst` and `holder_mean`.
/// These names are the contract for exports and importance reports;
/// indices are 0-based.
pub fn feature_names(n_mels: usize, n_mfcc: usize, with_scaling: bool) -> Vec<String> {
    let mut names = Vec::with_capacity(n_mels + n_mfcc + 12 + 2);
    for i in 0..n_mels {
        names.push(format!("mel_{i:02}"));
    }
    for i in 0..n_mfcc {
        names.push(format!("mfcc_{i:02}"));
    }
    for i in 0..12 {
        names.push(format!("chroma_{i:02}"));
    }
    if with_scaling {
        names.push("hurst".into());
        names.push("holder_mean".into());
    }
    names
}

/// Per-column z-score statistics, fit on training data only and then frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Fits pooled per-column statistics over all frames of all matrices.
    /// Columns with zero spread standardize to zero (centered, unscaled).
    pub fn fit(matrices: &[&Mat]) -> Result<Self> {
        let cols = matrices
            .first()
            .map(|m| m.cols())
            .ok_or_else(|| FeatureError::Parameter("no matrices to fit".into()))?;
        let mut n = 0usize;
        let mut sum = vec![0.0; cols];
        let mut sumsq = vec![0.0; cols];
        for m in matrices {
            if m.cols() != cols {
                return Err(FeatureError::Dimension("column count varies across matrices".into()));
            }
            for r in 0..m.rows() {
                for (c, &v) in m.row(r).iter().enumerate() {
                    sum[c] += v;
                    sumsq[c] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(FeatureError::Parameter("no frames to fit".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let sd: Vec<f64> = sumsq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| ((sq / n as f64 - m * m).max(0.0)).sqrt())
            .collect();
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, m: &Mat) -> Mat {
        assert_eq!(m.cols(), self.mean.len());
        let mut out = m.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for c in 0..row.len() {
                let centered = row[c] - self.mean[c];
                row[c] = if self.sd[c] > 0.0 { centered / self.sd[c] } else { centered };
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Small spectral oracles shared by tests and examples.
// ---------------------------------------------------------------------------

/// Power of the DTFT of `x` evaluated exactly at `freq`, normalized by N^2.
pub fn goertzel_power(x: &[f64], freq: f64, rate: u32) -> f64 {
    let n = x.len() as f64;
    let w = 2.0 * std::f64::consts::PI * freq / f64::from(rate);
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for (i, &v) in x.iter().enumerate() {
        let t = w * i as f64;
        re += v * t.cos();
        im -= v * t.sin();
    }
    (re * re + im * im) / (n * n)
}

/// Frequency of the strongest spectral peak, via a zero-padded DFT and
/// parabolic interpolation on log magnitude. Intended for clean test tones.
pub fn dominant_frequency(x: &[f64], rate: u32) -> f64 {
    let n_fft = (x.len() * 4).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for (i, &v) in x.iter().enumerate() {
        // hann window keeps leakage from biasing the peak pick
        let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / x.len() as f64).cos());
        buf[i] = Complex::new(v * w, 0.0);
    }
    fft.process(&mut buf);
    let half = n_fft / 2;
    let mags: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();
    let mut k_max = 1usize;
    for k in 1..half {
        if mags[k] > mags[k_max] {
            k_max = k;
        }
    }
    let bin_hz = f64::from(rate) / n_fft as f64;
    if k_max == 0 || k_max >= half {
        return k_max as f64 * bin_hz;
    }
    let (a, b, c) = (
        mags[k_max - 1].max(1e-300).ln(),
        mags[k_max].max(1e-300).ln(),
        mags[k_max + 1].max(1e-300).ln(),
    );
    let denom = a - 2.0 * b + c;
    let delta = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
    (k_max as f64 + delta) * bin_hz
}

/// Spectral flatness of one power spectrum row: geometric mean over
/// arithmetic mean of the positive-frequency bins.
pub fn spectral_flatness(power_row: &[f64]) -> f64 {
    let bins = &power_row[1..];
    let eps = 1e-20;
    let log_mean = bins.iter().map(|&p| (p + eps).ln()).sum::<f64>() / bins.len() as f64;
    let mean = bins.iter().sum::<f64>() / bins.len() as f64 + eps;
    log_mean.exp() / mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::WindowKind;

    fn tone_clip(freq: f64, rate: u32, secs: f64, amp: f64) -> AudioClip {
        let n = (secs * f64::from(rate)).round() as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin())
            .collect();
        AudioClip { samples, sample_rate: rate, source_id: "tone".into() }
    }

    fn default_frames(clip: &AudioClip) -> FrameSequence {
        let params = FramingParams::new(25.0, 10.0, WindowKind::Hann).unwrap();
        frame_signal(clip, &params).unwrap()
    }

    #[test]
    fn zero_frame_gives_zero_row_and_identical_frames_identical_rows() {
        let mut clip = tone_clip(1000.0, 16_000, 0.5, 0.5);
        for s in clip.samples.iter_mut().take(400) {
            *s = 0.0;
        }
        let params = FramingParams::new(25.0, 25.0, WindowKind::Rectangular).unwrap();
        let frames = frame_signal(&clip, &params).unwrap();
        let spec = power_spectrogram(&frames, 512).unwrap();
        assert!(spec.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_peaks_at_expected_bin() {
        let clip = tone_clip(1000.0, 16_000, 0.5, 0.5);
        let frames = default_frames(&clip);
        let spec = power_spectrogram(&frames, 512).unwrap();
        // bin = round(1000 * 512 / 16000) = 32
        for t in 0..spec.rows() {
            let row = spec.row(t);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, 32);
        }
    }

    #[test]
    fn parseval_holds_per_frame() {
        let clip = tone_clip(997.0, 16_000, 0.3, 0.7);
        let frames = default_frames(&clip);
        let n_fft = 512usize;
        let spec = power_spectrogram(&frames, n_fft).unwrap();
        for t in 0..frames.n_frames() {
            let time_energy: f64 = frames.frames.row(t).iter().map(|v| v * v).sum();
            let row = spec.row(t);
            // one-sided fold: interior bins count twice
            let mut freq_energy = row[0] + row[n_fft / 2];
            for &v in &row[1..n_fft / 2] {
                freq_energy += 2.0 * v;
            }
            freq_energy /= n_fft as f64;
            let rel = (time_energy - freq_energy).abs() / time_energy.max(1e-30);
            assert!(rel < 1e-6, "frame {t}: rel {rel}");
        }
    }

    #[test]
    fn n_fft_validation() {
        let clip = tone_clip(440.0, 16_000, 0.3, 0.5);
        let frames = default_frames(&clip);
        assert!(power_spectrogram(&frames, 256).is_err()); // < frame len 400
        assert!(power_spectrogram(&frames, 500).is_err()); // not a power of two
    }

    #[test]
    fn mel_scale_closed_form() {
        assert!((hz_to_mel(700.0) - 781.177).abs() < 1e-2);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn two_filter_bank_meets_at_mel_midpoint() {
        let fb = mel_filterbank(512, 2, 16_000, 0.0, 8_000.0).unwrap();
        assert_eq!(fb.rows(), 2);
        // centers at 1/3 and 2/3 of the mel range
        let m_hi = hz_to_mel(8_000.0);
        let c0 = mel_to_hz(m_hi / 3.0);
        let c1 = mel_to_hz(2.0 * m_hi / 3.0);
        let bin_hz = 16_000.0 / 512.0;
        // the weight at each filter's center bin should be near this triangle's peak
        let k0 = (c0 / bin_hz).round() as usize;
        let k1 = (c1 / bin_hz).round() as usize;
        assert!(fb.get(0, k0) > 0.9);
        assert!(fb.get(1, k1) > 0.9);
        // triangles overlap: filter 0 falls while filter 1 rises between centers
        let mid = (k0 + k1) / 2;
        assert!(fb.get(0, mid) > 0.0 && fb.get(1, mid) > 0.0);
    }

    #[test]
    fn default_bank_rows_strictly_positive() {
        let fb = mel_filterbank(512, 64, 16_000, 50.0, 8_000.0).unwrap();
        for m in 0..fb.rows() {
            let s: f64 = fb.row(m).iter().sum();
            assert!(s > 0.0, "filter {m} sums to {s}");
        }
    }

    #[test]
    fn too_many_mels_is_a_resolution_error() {
        let err = mel_filterbank(64, 60, 16_000, 50.0, 8_000.0).unwrap_err();
        assert!(matches!(err, FeatureError::MelResolution { .. }));
    }

    #[test]
    fn zero_power_hits_floor_and_doubling_adds_six_db() {
        let fb = mel_filterbank(512, 8, 16_000, 50.0, 8_000.0).unwrap();
        let zeros = Mat::zeros(3, 257);
        let mel = mel_spectrogram(&zeros, &fb, 1e-10, "z").unwrap();
        for t in 0..3 {
            for &v in mel.data.row(t) {
                assert!((v - 10.0 * (1e-10f64).log10()).abs() < 1e-9);
            }
        }

        let clip1 = tone_clip(1000.0, 16_000, 0.3, 0.4);
        let clip2 = tone_clip(1000.0, 16_000, 0.3, 0.8);
        let spec1 = power_spectrogram(&default_frames(&clip1), 512).unwrap();
        let spec2 = power_spectrogram(&default_frames(&clip2), 512).unwrap();
        let m1 = mel_spectrogram(&spec1, &fb, 1e-10, "a").unwrap();
        let m2 = mel_spectrogram(&spec2, &fb, 1e-10, "b").unwrap();
        let shift = 10.0 * 4.0f64.log10();
        for t in 0..m1.n_frames() {
            for (a, b) in m1.data.row(t).iter().zip(m2.data.row(t)) {
                if *a > 10.0 * (1e-10f64).log10() + 20.0 {
                    assert!((b - a - shift).abs() < 1e-6, "{a} -> {b}");
                }
            }
        }
    }

    #[test]
    fn tone_at_filter_center_is_band_argmax() {
        let fb = mel_filterbank(512, 16, 16_000, 50.0, 8_000.0).unwrap();
        // center of filter 8
        let m_lo = hz_to_mel(50.0);
        let m_hi = hz_to_mel(8_000.0);
        let center = mel_to_hz(m_lo + (m_hi - m_lo) * 9.0 / 17.0);
        let clip = tone_clip(center, 16_000, 0.3, 0.6);
        let spec = power_spectrogram(&default_frames(&clip), 512).unwrap();
        let mel = mel_spectrogram(&spec, &fb, 1e-10, "c").unwrap();
        for t in 0..mel.n_frames() {
            let row = mel.data.row(t);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, 8, "frame {t}");
        }
    }

    #[test]
    fn dct_of_constant_loads_coefficient_zero() {
        let n_mels = 64;
        let c = 3.25;
        let mel = FeatureMatrix {
            data: Mat::from_rows(vec![vec![c; n_mels]]),
            kind: FeatureKind::Mel,
            clip_id: "k".into(),
        };
        let m = mfcc(&mel, 13).unwrap();
        assert!((m.data.get(0, 0) - c * (n_mels as f64).sqrt()).abs() < 1e-9);
        for k in 1..13 {
            assert!(m.data.get(0, k).abs() < 1e-9);
        }
    }

    #[test]
    fn full_dct_is_invertible() {
        let n_mels = 16;
        let vals: Vec<f64> = (0..n_mels).map(|i| ((i * 7919) % 83) as f64 / 10.0 - 4.0).collect();
        let mel = FeatureMatrix {
            data: Mat::from_rows(vec![vals.clone()]),
            kind: FeatureKind::Mel,
            clip_id: "inv".into(),
        };
        let coefs = mfcc(&mel, n_mels).unwrap();
        // inverse orthonormal DCT-II
        let norm0 = (1.0 / n_mels as f64).sqrt();
        let norm = (2.0 / n_mels as f64).sqrt();
        for (n, expected) in vals.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..n_mels {
                let basis =
                    (std::f64::consts::PI * (n as f64 + 0.5) * k as f64 / n_mels as f64).cos();
                acc += coefs.data.get(0, k) * basis * if k == 0 { norm0 } else { norm };
            }
            assert!((acc - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn chroma_finds_a440_and_octave_equivalence() {
        let clip = tone_clip(440.0, 16_000, 0.3, 0.6);
        let spec = power_spectrogram(&default_frames(&clip), 512).unwrap();
        let ch = chroma(&spec, 16_000, 512, 440.0, "a4").unwrap();
        for t in 0..ch.n_frames() {
            let row = ch.data.row(t);
            let argmax = (0..12).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, 9, "frame {t}");
            assert!((row[9] - 1.0).abs() < 1e-12);
        }
        let clip8 = tone_clip(880.0, 16_000, 0.3, 0.6);
        let spec8 = power_spectrogram(&default_frames(&clip8), 512).unwrap();
        let ch8 = chroma(&spec8, 16_000, 512, 440.0, "a5").unwrap();
        let row = ch8.data.row(0);
        let argmax = (0..12).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, 9);
    }

    #[test]
    fn chroma_silence_rows_are_zero() {
        let spec = Mat::zeros(4, 257);
        let ch = chroma(&spec, 16_000, 512, 440.0, "sil").unwrap();
        assert!(ch.data.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chroma_is_amplitude_invariant() {
        for scale in [0.1, 0.5, 2.0, 10.0] {
            let a = tone_clip(523.25, 16_000, 0.25, 0.08);
            let mut b = a.clone();
            for s in &mut b.samples {
                *s = (*s * scale).clamp(-1.0, 1.0);
            }
            let sa = power_spectrogram(&default_frames(&a), 512).unwrap();
            let sb = power_spectrogram(&default_frames(&b), 512).unwrap();
            let ca = chroma(&sa, 16_000, 512, 440.0, "a").unwrap();
            let cb = chroma(&sb, 16_000, 512, 440.0, "b").unwrap();
            for (x, y) in ca.data.data().iter().zip(cb.data.data()) {
                assert!((x - y).abs() < 1e-9, "scale {scale}");
            }
        }
    }

    #[test]
    fn combined_width_and_determinism() {
        let params = crate::audio::SynthesisParams::normal(150.0);
        let clip = crate::audio::synthesize_phonation(&params, 5).unwrap();
        let framing = FramingParams::new(25.0, 10.0, WindowKind::Hann).unwrap();
        let fparams = FeatureParams::default();
        let a = extract_all(&clip, &framing, &fparams).unwrap();
        let b = extract_all(&clip, &framing, &fparams).unwrap();
        assert_eq!(a.combined.n_features(), 64 + 13 + 12);
        assert_eq!(a.combined.data, b.combined.data);
        assert_eq!(a.mel.data, b.mel.data);
    }

    #[test]
    fn mel_is_polarity_invariant() {
        let params = crate::audio::SynthesisParams::normal(180.0);
        let clip = crate::audio::synthesize_phonation(&params, 9).unwrap();
        let mut flipped = clip.clone();
        for s in &mut flipped.samples {
            *s = -*s;
        }
        let framing = FramingParams::new(25.0, 10.0, WindowKind::Hann).unwrap();
        let fparams = FeatureParams::default();
        let a = extract_all(&clip, &framing, &fparams).unwrap();
        let b = extract_all(&flipped, &framing, &fparams).unwrap();
        for (x, y) in a.mel.data.data().iter().zip(b.mel.data.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn mfcc_energy_compaction_on_vowel_like_frames() {
        let params = crate::audio::SynthesisParams::normal(140.0);
        let clip = crate::audio::synthesize_phonation(&params, 21).unwrap();
        let framing = FramingParams::new(25.0, 10.0, WindowKind::Hann).unwrap();
        let fparams = FeatureParams::default();
        let bundle = extract_all(&clip, &framing, &fparams).unwrap();
        let full = mfcc(&bundle.mel, 64).unwrap();
        // first 13 coefficients carry >= 95% of the DCT energy
        let mut lead = 0.0;
        let mut total = 0.0;
        for t in 0..full.n_frames() {
            for (k, &v) in full.data.row(t).iter().enumerate() {
                total += v * v;
                if k < 13 {
                    lead += v * v;
                }
            }
        }
        assert!(lead / total >= 0.95, "compaction {}", lead / total);
    }

    #[test]
    fn standardizer_zero_mean_unit_sd() {
        let params = crate::audio::SynthesisParams::nodule(150.0);
        let framing = FramingParams::new(25.0, 10.0, WindowKind::Hann).unwrap();
        let fparams = FeatureParams::default();
        let mats: Vec<Mat> = (0..4)
            .map(|s| {
                let clip = crate::audio::synthesize_phonation(&params, s).unwrap();
                extract_all(&clip, &framing, &fparams).unwrap().combined.data
            })
            .collect();
        let refs: Vec<&Mat> = mats.iter().collect();
        let std = Standardizer::fit(&refs).unwrap();
        let transformed: Vec<Mat> = mats.iter().map(|m| std.apply(m)).collect();
        let cols = transformed[0].cols();
        for c in 0..cols {
            let vals: Vec<f64> = transformed
                .iter()
                .flat_map(|m| (0..m.rows()).map(move |r| m.get(r, c)))
                .collect();
            let mu = crate::util::mean(&vals);
            let sd = crate::util::population_sd(&vals);
            assert!(mu.abs() < 1e-9, "col {c} mean {mu}");
            // constant columns (chroma argmax pins at 1.0) stay centered, unscaled
            if std.sd[c] > 0.0 {
                assert!((sd - 1.0).abs() < 1e-6, "col {c} sd {sd}");
            } else {
                assert!(sd.abs() < 1e-12, "col {c} sd {sd}");
            }
        }
    }

    #[test]
    fn feature_name_contract() {
        let names = feature_names(64, 13, true);
        assert_eq!(names.len(), 91);
        assert_eq!(names[0], "mel_00");
        assert_eq!(names[63], "mel_63");
        assert_eq!(names[64], "mfcc_00");
        assert_eq!(names[77], "chroma_00");
        assert_eq!(names[89], "hurst");
        assert_eq!(names[90], "holder_mean");
    }
}
