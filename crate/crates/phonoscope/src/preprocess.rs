//! Signal conditioning ahead of feature extraction.
//!
//! The clip-level stages run in a fixed order — noise filter, silence trim,
//! amplitude normalization — followed by framing and invalid-frame removal.
//! Re-running the clip-level stages on their own output is a no-op to within
//! 1e-6, which is why the noise filter is a zero-phase spectral projection
//! (bins below the cutoff zeroed) rather than an IIR section: a projection
//! applied twice equals itself exactly, and it meets the attenuation contract
//! (>= 20 dB below cutoff, < 1 dB at and above twice the cutoff) at every
//! frequency.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::AudioClip;
use crate::util::Mat;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("clip is entirely below the silence threshold")]
    AllSilent,
    #[error("silent clip: peak amplitude is zero")]
    DegenerateInput,
    #[error("clip shorter than one frame ({samples} samples < {frame_len})")]
    TooShort { samples: usize, frame_len: usize },
    #[error("all {0} frames were invalid")]
    AllFramesInvalid(usize),
}

pub type Result<T> = std::result::Result<T, PreprocessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    Hann,
}

impl WindowKind {
    /// Window weights for a frame of `len` samples (periodic form).
    pub fn weights(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Hann => (0..len)
                .map(|n| {
                    0.5 * (1.0
                        - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
                })
                .collect(),
        }
    }
}

/// Framing geometry. `new` enforces the 20-40 ms analysis band used for
/// spectral features; `unrestricted` skips that check for other windowed
/// estimators (e.g. scaling exponents at 250 ms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramingParams {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub window: WindowKind,
}

impl FramingParams {
    pub fn new(frame_ms: f64, hop_ms: f64, window: WindowKind) -> Result<Self> {
        if !(20.0..=40.0).contains(&frame_ms) {
            return Err(PreprocessError::Parameter(format!(
                "frame_ms {frame_ms} outside [20, 40]; use `unrestricted` to override"
            )));
        }
        Self::unrestricted(frame_ms, hop_ms, window)
    }

    pub fn unrestricted(frame_ms: f64, hop_ms: f64, window: WindowKind) -> Result<Self> {
        if !(frame_ms > 0.0) {
            return Err(PreprocessError::Parameter("frame_ms must be positive".into()));
        }
        if !(hop_ms > 0.0 && hop_ms <= frame_ms) {
            return Err(PreprocessError::Parameter(format!(
                "hop_ms {hop_ms} must satisfy 0 < hop <= frame ({frame_ms})"
            )));
        }
        Ok(Self { frame_ms, hop_ms, window })
    }

    pub fn frame_len(&self, rate: u32) -> usize {
        (self.frame_ms * f64::from(rate) / 1000.0).round() as usize
    }

    pub fn hop_len(&self, rate: u32) -> usize {
        (self.hop_ms * f64::from(rate) / 1000.0).round().max(1.0) as usize
    }
}

/// Frame count for a signal of `n` samples: 1 + floor((n - len) / hop).
pub fn frame_count(n: usize, frame_len: usize, hop_len: usize) -> usize {
    if n < frame_len {
        0
    } else {
        1 + (n - frame_len) / hop_len
    }
}

/// Windowed frames of one clip.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Mat,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub window: WindowKind,
    pub origin_rate: u32,
}

impl FrameSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn frame_len(&self) -> usize {
        self.frames.cols()
    }
}

/// Zero-phase high-pass "noise filter": DFT bins strictly below `cutoff_hz`
/// (including DC) are zeroed, everything else passes untouched.
pub fn noise_filter(clip: &AudioClip, cutoff_hz: f64) -> Result<AudioClip> {
    let rate = f64::from(clip.sample_rate);
    if !(cutoff_hz > 0.0 && cutoff_hz < rate / 2.0) {
        return Err(PreprocessError::Parameter(format!(
            "cutoff {cutoff_hz} Hz outside (0, {})", rate / 2.0
        )));
    }
    let n = clip.samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> =
        clip.samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
    fft.process(&mut buf);
    let bin_hz = rate / n as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        let f = if k <= n / 2 { k as f64 * bin_hz } else { (n - k) as f64 * bin_hz };
        if f < cutoff_hz {
            *v = Complex::new(0.0, 0.0);
        }
    }
    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    let samples: Vec<f64> = buf.iter().map(|c| (c.re * scale).clamp(-1.0, 1.0)).collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    })
}

/// Removes prolonged leading/trailing silence.
///
/// Silence is judged block-wise (10 ms blocks) by RMS against
/// `peak * 10^(threshold_db/20)`; only edge runs at least `min_silence_ms`
/// long are cut, so the output is always a contiguous slice of the input.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64, min_silence_ms: f64) -> Result<AudioClip> {
    if !(threshold_db < 0.0) {
        return Err(PreprocessError::Parameter("threshold_db must be negative".into()));
    }
    if !(min_silence_ms > 0.0) {
        return Err(PreprocessError::Parameter("min_silence_ms must be positive".into()));
    }
    let rate = f64::from(clip.sample_rate);
    let block = ((rate * 0.010).round() as usize).max(1);
    let peak = clip.peak();
    if peak <= 0.0 {
        return Err(PreprocessError::AllSilent);
    }
    let threshold = peak * 10f64.powf(threshold_db / 20.0);

    let n = clip.samples.len();
    let n_blocks = n.div_ceil(block);
    let silent: Vec<bool> = (0..n_blocks)
        .map(|b| {
            let s = &clip.samples[b * block..((b + 1) * block).min(n)];
            let rms = (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt();
            rms < threshold
        })
        .collect();

    let lead_blocks = silent.iter().take_while(|&&s| s).count();
    if lead_blocks == n_blocks {
        return Err(PreprocessError::AllSilent);
    }
    let trail_blocks = silent.iter().rev().take_while(|&&s| s).count();

    let min_run = (min_silence_ms / 1000.0 * rate).round() as usize;
    let lead = lead_blocks * block;
    let trail = trail_blocks * block;
    let start = if lead >= min_run { lead } else { 0 };
    let end = if trail >= min_run { n - trail.min(n) } else { n };
    if start >= end {
        return Err(PreprocessError::AllSilent);
    }
    Ok(AudioClip {
        samples: clip.samples[start..end].to_vec(),
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    })
}

/// Scales the clip so its peak is exactly `target_peak`.
pub fn normalize_amplitude(clip: &AudioClip, target_peak: f64) -> Result<AudioClip> {
    if !(target_peak > 0.0 && target_peak <= 1.0) {
        return Err(PreprocessError::Parameter(format!(
            "target_peak {target_peak} outside (0, 1]"
        )));
    }
    let peak = clip.peak();
    if peak <= 0.0 {
        return Err(PreprocessError::DegenerateInput);
    }
    let gain = target_peak / peak;
    Ok(AudioClip {
        samples: clip.samples.iter().map(|s| s * gain).collect(),
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    })
}

/// Segments a clip into windowed frames. Frame t covers samples
/// `[t*hop, t*hop + len)` and the window is applied multiplicatively.
pub fn frame_signal(clip: &AudioClip, params: &FramingParams) -> Result<FrameSequence> {
    let len = params.frame_len(clip.sample_rate);
    let hop = params.hop_len(clip.sample_rate);
    let n = clip.samples.len();
    if n < len {
        return Err(PreprocessError::TooShort { samples: n, frame_len: len });
    }
    let t_frames = frame_count(n, len, hop);
    let weights = params.window.weights(len);
    let mut frames = Mat::zeros(t_frames, len);
    for t in 0..t_frames {
        let start = t * hop;
        let row = frames.row_mut(t);
        for (i, w) in weights.iter().enumerate() {
            row[i] = clip.samples[start + i] * w;
        }
    }
    Ok(FrameSequence {
        frames,
        frame_ms: params.frame_ms,
        hop_ms: params.hop_ms,
        window: params.window,
        origin_rate: clip.sample_rate,
    })
}

/// Drops frames containing non-finite values or samples beyond full scale.
/// Returns the surviving frames and the number removed, preserving order.
pub fn drop_invalid_frames(seq: &FrameSequence) -> Result<(FrameSequence, usize)> {
    let valid: Vec<usize> = (0..seq.n_frames())
        .filter(|&t| {
            seq.frames
                .row(t)
                .iter()
                .all(|v| v.is_finite() && v.abs() <= 1.0 + 1e-6)
        })
        .collect();
    let removed = seq.n_frames() - valid.len();
    if valid.is_empty() {
        return Err(PreprocessError::AllFramesInvalid(seq.n_frames()));
    }
    let mut frames = Mat::zeros(valid.len(), seq.frame_len());
    for (r, &t) in valid.iter().enumerate() {
        frames.row_mut(r).copy_from_slice(seq.frames.row(t));
    }
    Ok((
        FrameSequence {
            frames,
            frame_ms: seq.frame_ms,
            hop_ms: seq.hop_ms,
            window: seq.window,
            origin_rate: seq.origin_rate,
        },
        removed,
    ))
}

/// Centered moving average across frequency bins with edge replication.
/// `width` must be odd and no larger than the spectrum.
pub fn smooth_spectrum(spectrum: &[f64], width: usize) -> Result<Vec<f64>> {
    if width % 2 == 0 || width == 0 {
        return Err(PreprocessError::Parameter(format!("width {width} must be odd")));
    }
    if width > spectrum.len() {
        return Err(PreprocessError::Parameter(format!(
            "width {width} exceeds {} bins",
            spectrum.len()
        )));
    }
    if width == 1 {
        return Ok(spectrum.to_vec());
    }
    let half = width as isize / 2;
    let n = spectrum.len() as isize;
    let out = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for d in -half..=half {
                let j = (i + d).clamp(0, n - 1);
                acc += spectrum[j as usize];
            }
            acc / width as f64
        })
        .collect();
    Ok(out)
}

/// Clip-level conditioning parameters with the project defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub highpass_hz: f64,
    pub silence_threshold_db: f64,
    pub min_silence_ms: f64,
    pub target_peak: f64,
    pub framing: FramingParams,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            highpass_hz: 30.0,
            silence_threshold_db: -40.0,
            min_silence_ms: 100.0,
            target_peak: 0.99,
            framing: FramingParams { frame_ms: 25.0, hop_ms: 10.0, window: WindowKind::Hann },
        }
    }
}

/// Clip-level stages only: noise filter -> silence trim -> normalization.
/// Idempotent at fixed parameters.
pub fn condition_clip(clip: &AudioClip, cfg: &PreprocessConfig) -> Result<AudioClip> {
    let filtered = noise_filter(clip, cfg.highpass_hz)?;
    let trimmed = trim_silence(&filtered, cfg.silence_threshold_db, cfg.min_silence_ms)?;
    normalize_amplitude(&trimmed, cfg.target_peak)
}

/// Full preprocessing: conditioning, framing, invalid-frame removal.
pub fn preprocess_pipeline(clip: &AudioClip, cfg: &PreprocessConfig) -> Result<FrameSequence> {
    let conditioned = condition_clip(clip, cfg)?;
    let framed = frame_signal(&conditioned, &cfg.framing)?;
    let (kept, _removed) = drop_invalid_frames(&framed)?;
    Ok(kept)
}
