//! Scaling-exponent features: global Hurst exponent and windowed local
//! Hölder exponents.
//!
//! The Hurst exponent comes from order-1 detrended fluctuation analysis
//! (DFA): integrate the centered signal, measure the RMS residual of a linear
//! fit in non-overlapping boxes at each scale, and read H off the slope of
//! log F(s) against log s. DFA behaves better than rescaled-range analysis on
//! nonstationary phonation.
//!
//! The Hölder exponent is estimated per window from oscillation scaling: for
//! dyadic spans tau the oscillation is the largest max-min over the tiling
//! sub-intervals of span tau, and the local exponent is the slope of
//! log oscillation against log tau. Taking the largest oscillation rather
//! than the tile average keeps the estimate anchored to the roughest point in
//! the window; averaging telescopes to the window's total variation and
//! reports slope 1 regardless of the true local regularity.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::AudioClip;
use crate::preprocess::frame_count;
use crate::util::{linear_fit, mean, seeded_rng, Mat};
use rand::Rng;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("constant signal: variance is zero")]
    ZeroVariance,
    #[error("signal too short: {len} samples < {needed} required")]
    TooShort { len: usize, needed: usize },
    #[error("every window was flat; no exponent defined")]
    AllFlat,
}

pub type Result<T> = std::result::Result<T, ScalingError>;

/// Reference exponents for sustained phonation reported in published
/// clinical-corpus analyses. Documented for comparison columns; synthetic
/// corpora are not expected to hit them.
pub const REFERENCE_HURST_NORMAL: f64 = 0.9137;
pub const REFERENCE_HURST_NODULE: f64 = 0.9156;
pub const REFERENCE_HOLDER_NORMAL: f64 = 1.0863;
pub const REFERENCE_HOLDER_NODULE: f64 = 1.0844;

/// Dyadic DFA scales from `min_scale` up to `len / 8`.
pub fn default_dfa_scales(len: usize, min_scale: usize) -> Vec<usize> {
    let mut scales = Vec::new();
    let mut s = min_scale.max(4);
    while s <= len / 8 {
        scales.push(s);
        s *= 2;
    }
    scales
}

/// Order-1 detrended fluctuation analysis. Returns `(H, fit_r2)`.
///
/// Requires at least 4 scales spanning a decade and a signal at least four
/// times the largest scale.
pub fn hurst_dfa(signal: &[f64], scales: &[usize]) -> Result<(f64, f64)> {
    if scales.len() < 4 {
        return Err(ScalingError::Parameter(format!(
            "{} scales given, need at least 4",
            scales.len()
        )));
    }
    let min_s = *scales.iter().min().unwrap();
    let max_s = *scales.iter().max().unwrap();
    if min_s < 4 {
        return Err(ScalingError::Parameter("scales must be >= 4 samples".into()));
    }
    if (max_s as f64) < 10.0 * min_s as f64 {
        return Err(ScalingError::Parameter(format!(
            "scales {min_s}..{max_s} span less than one decade"
        )));
    }
    if signal.len() < 4 * max_s {
        return Err(ScalingError::TooShort { len: signal.len(), needed: 4 * max_s });
    }

    let m = mean(signal);
    if signal.iter().all(|&x| (x - m).abs() < 1e-300) {
        return Err(ScalingError::ZeroVariance);
    }

    // cumulative-sum profile of the centered signal
    let mut profile = Vec::with_capacity(signal.len());
    let mut acc = 0.0;
    for &x in signal {
        acc += x - m;
        profile.push(acc);
    }

    let mut log_s = Vec::with_capacity(scales.len());
    let mut log_f = Vec::with_capacity(scales.len());
    for &s in scales {
        let n_boxes = profile.len() / s;
        let mut ss_total = 0.0;
        for b in 0..n_boxes {
            let seg = &profile[b * s..(b + 1) * s];
            ss_total += linear_detrend_ss(seg);
        }
        let f = (ss_total / (n_boxes * s) as f64).sqrt();
        if f <= 0.0 {
            return Err(ScalingError::ZeroVariance);
        }
        log_s.push((s as f64).ln());
        log_f.push(f.ln());
    }
    let (slope, _icpt, r2) = linear_fit(&log_s, &log_f);
    Ok((slope, r2))
}

/// Residual sum of squares of an order-1 (linear) fit over `seg`.
fn linear_detrend_ss(seg: &[f64]) -> f64 {
    let n = seg.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = mean(seg);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, &y) in seg.iter().enumerate() {
        let dx = i as f64 - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mut ss = 0.0;
    for (i, &y) in seg.iter().enumerate() {
        let fit = my + slope * (i as f64 - mx);
        ss += (y - fit) * (y - fit);
    }
    ss
}

/// One window's local-exponent estimate; `None` marks a flat window.
pub type HolderSeries = Vec<(usize, Option<f64>)>;

/// Windowed Hölder-exponent series.
///
/// Window count follows the framing formula `1 + floor((N - W) / H)`. Flat
/// windows (zero oscillation at some span) yield `None` and are excluded from
/// downstream means.
pub fn holder_windowed(
    signal: &[f64],
    rate: u32,
    window_ms: f64,
    hop_ms: f64,
) -> Result<HolderSeries> {
    if window_ms < 20.0 {
        return Err(ScalingError::Parameter(format!("window_ms {window_ms} < 20")));
    }
    if !(hop_ms > 0.0 && hop_ms <= window_ms) {
        return Err(ScalingError::Parameter("need 0 < hop_ms <= window_ms".into()));
    }
    let w = (window_ms * f64::from(rate) / 1000.0).round() as usize;
    let h = (hop_ms * f64::from(rate) / 1000.0).round().max(1.0) as usize;
    if frame_count(signal.len(), w, h) < 2 {
        return Err(ScalingError::TooShort { len: signal.len(), needed: w + h });
    }
    let n_windows = frame_count(signal.len(), w, h);
    let mut series = Vec::with_capacity(n_windows);
    for t in 0..n_windows {
        let seg = &signal[t * h..t * h + w];
        series.push((t, window_holder_exponent(seg)));
    }
    Ok(series)
}

/// Local exponent of one window, or `None` when flat.
fn window_holder_exponent(seg: &[f64]) -> Option<f64> {
    let w = seg.len();
    let mut log_tau = Vec::new();
    let mut log_osc = Vec::new();
    let mut tau = 2usize;
    while tau <= w / 4 {
        // largest oscillation over the tiling of spans [i*tau, i*tau + tau]
        let mut max_osc = 0.0f64;
        let mut start = 0;
        while start + tau < w {
            let sub = &seg[start..=start + tau];
            let (mut lo, mut hi) = (sub[0], sub[0]);
            for &v in sub {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            max_osc = max_osc.max(hi - lo);
            start += tau;
        }
        if max_osc <= 1e-15 {
            return None;
        }
        log_tau.push((tau as f64).ln());
        log_osc.push(max_osc.ln());
        tau *= 2;
    }
    if log_tau.len() < 3 {
        return None;
    }
    let (slope, _icpt, _r2) = linear_fit(&log_tau, &log_osc);
    Some(slope)
}

/// Scaling configuration with the project defaults (dyadic DFA scales from
/// 16 samples, 250 ms Hölder windows with 125 ms hop).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalingConfig {
    pub dfa_min_scale: usize,
    pub holder_window_ms: f64,
    pub holder_hop_ms: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { dfa_min_scale: 16, holder_window_ms: 250.0, holder_hop_ms: 125.0 }
    }
}

/// Per-clip scaling summary used as model features and report columns.
#[derive(Debug, Clone)]
pub struct ScalingSummary {
    pub hurst: f64,
    pub fit_r2: f64,
    pub holder_series: HolderSeries,
    pub holder_mean: f64,
    /// `2 - hurst`, the graph-dimension complement of H.
    pub complement: f64,
    /// False when the Hurst estimate falls outside (0, 1.5).
    pub hurst_valid: bool,
}

/// Runs both estimators over a preprocessed clip.
pub fn scaling_summary(clip: &AudioClip, config: &ScalingConfig) -> Result<ScalingSummary> {
    let scales = default_dfa_scales(clip.samples.len(), config.dfa_min_scale);
    let (hurst, fit_r2) = hurst_dfa(&clip.samples, &scales)?;
    let holder_series = holder_windowed(
        &clip.samples,
        clip.sample_rate,
        config.holder_window_ms,
        config.holder_hop_ms,
    )?;
    let defined: Vec<f64> = holder_series.iter().filter_map(|(_, e)| *e).collect();
    if defined.is_empty() {
        return Err(ScalingError::AllFlat);
    }
    let holder_mean = mean(&defined);
    Ok(ScalingSummary {
        hurst,
        fit_r2,
        holder_series,
        holder_mean,
        complement: 2.0 - hurst,
        hurst_valid: hurst > 0.0 && hurst < 1.5,
    })
}

/// Broadcasts `(hurst, holder_mean)` as two constant columns appended to a
/// feature matrix.
pub fn append_scaling_columns(features: &Mat, summary: &ScalingSummary) -> Mat {
    let mut out = Mat::zeros(features.rows(), features.cols() + 2);
    for r in 0..features.rows() {
        let row = out.row_mut(r);
        row[..features.cols()].copy_from_slice(features.row(r));
        row[features.cols()] = summary.hurst;
        row[features.cols() + 1] = summary.holder_mean;
    }
    out
}

/// Exact fractional Gaussian noise by circulant embedding (Davies-Harte).
///
/// Returns `n` samples with unit variance and Hurst exponent `h`. Used as the
/// synthetic reference process for estimator recovery tests; the generator
/// shares no code path with the DFA estimator.
pub fn fractional_gaussian_noise(h: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(0.0 < h && h < 1.0) {
        return Err(ScalingError::Parameter(format!("H {h} outside (0, 1)")));
    }
    if n < 2 {
        return Err(ScalingError::Parameter("need n >= 2".into()));
    }
    let m = 2 * n;
    // fGn autocovariance gamma(k) = (|k+1|^2H - 2|k|^2H + |k-1|^2H) / 2
    let gamma = |k: f64| -> f64 {
        0.5 * ((k + 1.0).abs().powf(2.0 * h) - 2.0 * k.abs().powf(2.0 * h)
            + (k - 1.0).abs().powf(2.0 * h))
    };
    let mut c = vec![Complex::new(0.0, 0.0); m];
    for (j, slot) in c.iter_mut().enumerate() {
        let k = if j <= n { j as f64 } else { (m - j) as f64 };
        *slot = Complex::new(gamma(k), 0.0);
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);
    // eigenvalues of the circulant; tiny negatives are numerical noise
    let lambda: Vec<f64> = c.iter().map(|v| v.re.max(0.0)).collect();

    let mut rng = seeded_rng(seed);
    let mut normal = || -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };

    let mut w = vec![Complex::new(0.0, 0.0); m];
    w[0] = Complex::new((lambda[0] / m as f64).sqrt() * normal(), 0.0);
    w[n] = Complex::new((lambda[n] / m as f64).sqrt() * normal(), 0.0);
    for j in 1..n {
        let scale = (lambda[j] / (2 * m) as f64).sqrt();
        let (a, b) = (normal(), normal());
        w[j] = Complex::new(scale * a, scale * b);
        w[m - j] = Complex::new(scale * a, -scale * b);
    }
    fft.process(&mut w);
    Ok(w[..n].iter().map(|v| v.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_estimates_h_half() {
        let mut estimates = Vec::new();
        for seed in 0..20u64 {
            let mut rng = seeded_rng(seed);
            let x: Vec<f64> = (0..1 << 14)
                .map(|_| {
                    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            let scales = default_dfa_scales(x.len(), 16);
            let (h, r2) = hurst_dfa(&x, &scales).unwrap();
            assert!(r2 > 0.95);
            estimates.push(h);
        }
        let m = mean(&estimates);
        assert!((m - 0.5).abs() < 0.05, "mean H {m}");
    }

    #[test]
    fn fgn_h08_recovered() {
        let mut estimates = Vec::new();
        for seed in 0..20u64 {
            let x = fractional_gaussian_noise(0.8, 1 << 14, seed).unwrap();
            let scales = default_dfa_scales(x.len(), 16);
            let (h, _) = hurst_dfa(&x, &scales).unwrap();
            estimates.push(h);
        }
        let m = mean(&estimates);
        assert!((m - 0.8).abs() < 0.05, "mean H {m}");
    }

    #[test]
    fn fgn_has_unit_variance_and_expected_lag_one_autocorrelation() {
        let h = 0.8;
        let x = fractional_gaussian_noise(h, 1 << 15, 7).unwrap();
        let var = crate::util::population_sd(&x).powi(2);
        assert!((var - 1.0).abs() < 0.1, "var {var}");
        let m = mean(&x);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..x.len() - 1 {
            num += (x[i] - m) * (x[i + 1] - m);
        }
        for &v in &x {
            den += (v - m) * (v - m);
        }
        let rho1 = num / den;
        let expected = 2f64.powf(2.0 * h - 1.0) - 1.0; // 0.5157 at H = 0.8
        assert!((rho1 - expected).abs() < 0.05, "rho1 {rho1} vs {expected}");
    }

    #[test]
    fn dfa_is_gain_and_sign_invariant() {
        let x = fractional_gaussian_noise(0.6, 1 << 13, 3).unwrap();
        let scales = default_dfa_scales(x.len(), 16);
        let (h0, _) = hurst_dfa(&x, &scales).unwrap();
        let x5: Vec<f64> = x.iter().map(|v| 5.0 * v).collect();
        let (h5, _) = hurst_dfa(&x5, &scales).unwrap();
        assert!((h0 - h5).abs() < 1e-9);
        let xn: Vec<f64> = x.iter().map(|v| -v).collect();
        let (hn, _) = hurst_dfa(&xn, &scales).unwrap();
        assert!((h0 - hn).abs() < 1e-9);
    }

    #[test]
    fn dfa_errors() {
        assert!(matches!(
            hurst_dfa(&vec![1.0; 1 << 14], &[16, 32, 64, 128, 256]),
            Err(ScalingError::ZeroVariance)
        ));
        let x = fractional_gaussian_noise(0.5, 256, 1).unwrap();
        assert!(matches!(
            hurst_dfa(&x, &[16, 32, 64, 128, 256]),
            Err(ScalingError::TooShort { .. })
        ));
        assert!(hurst_dfa(&x, &[16, 32]).is_err());
        assert!(hurst_dfa(&x, &[16, 20, 24, 32]).is_err()); // < 1 decade
    }

    fn cusp_signal(alpha: f64, n: usize, center: usize) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 - center as f64).abs() / n as f64).powf(alpha)).collect()
    }

    #[test]
    fn cusp_exponent_recovered_at_the_cusp_window() {
        for alpha in [0.3, 0.5, 0.8] {
            let n = 16_000;
            let x = cusp_signal(alpha, n, 8_000);
            let series = holder_windowed(&x, 16_000, 250.0, 125.0).unwrap();
            // the window whose center lies nearest the cusp
            let w = 4_000usize;
            let h = 2_000usize;
            let best = series
                .iter()
                .filter(|(t, _)| (t * h) <= 8_000 && 8_000 < t * h + w)
                .min_by_key(|(t, _)| ((t * h + w / 2) as i64 - 8_000).unsigned_abs())
                .unwrap();
            let est = best.1.expect("cusp window should not be flat");
            assert!((est - alpha).abs() < 0.1, "alpha {alpha}: estimate {est}");
        }
    }

    #[test]
    fn straight_line_estimates_slope_one() {
        let x: Vec<f64> = (0..8_000).map(|i| 1e-3 * i as f64).collect();
        let series = holder_windowed(&x, 16_000, 250.0, 125.0).unwrap();
        for (t, e) in &series {
            let e = e.expect("line is not flat");
            assert!(e >= 0.95 && e < 1.05, "window {t}: {e}");
        }
    }

    #[test]
    fn holder_gain_invariance_and_flat_sentinel() {
        let x = cusp_signal(0.5, 16_000, 9_000);
        let x10: Vec<f64> = x.iter().map(|v| 10.0 * v).collect();
        let a = holder_windowed(&x, 16_000, 250.0, 125.0).unwrap();
        let b = holder_windowed(&x10, 16_000, 250.0, 125.0).unwrap();
        for ((_, ea), (_, eb)) in a.iter().zip(&b) {
            match (ea, eb) {
                (Some(u), Some(v)) => assert!((u - v).abs() < 1e-9),
                (None, None) => {}
                _ => panic!("flat markers disagree"),
            }
        }

        let flat = vec![0.25; 16_000];
        let series = holder_windowed(&flat, 16_000, 250.0, 125.0).unwrap();
        assert!(series.iter().all(|(_, e)| e.is_none()));
    }

    #[test]
    fn holder_series_length_matches_frame_formula() {
        let x = cusp_signal(0.5, 12_345, 6_000);
        let series = holder_windowed(&x, 16_000, 250.0, 125.0).unwrap();
        let w = 4_000;
        let h = 2_000;
        assert_eq!(series.len(), frame_count(12_345, w, h));
    }

    #[test]
    fn summary_complement_and_reference_values() {
        // the published reference values complement each other exactly
        assert!((2.0 - REFERENCE_HURST_NORMAL - REFERENCE_HOLDER_NORMAL).abs() < 1e-12);
        assert!((2.0 - REFERENCE_HURST_NODULE - REFERENCE_HOLDER_NODULE).abs() < 1e-12);

        let params = crate::audio::SynthesisParams::normal(150.0);
        let clip = crate::audio::synthesize_phonation(&params, 17).unwrap();
        let s = scaling_summary(&clip, &ScalingConfig::default()).unwrap();
        assert_eq!(s.complement, 2.0 - s.hurst);
        assert!(s.holder_series.iter().any(|(_, e)| e.is_some()));
    }

    #[test]
    fn nodule_preset_has_lower_mean_holder() {
        let cfg = ScalingConfig::default();
        let mut normal_vals = Vec::new();
        let mut nodule_vals = Vec::new();
        for seed in 0..20u64 {
            let n = crate::audio::synthesize_phonation(
                &crate::audio::SynthesisParams::normal(150.0),
                seed,
            )
            .unwrap();
            let p = crate::audio::synthesize_phonation(
                &crate::audio::SynthesisParams::nodule(150.0),
                seed,
            )
            .unwrap();
            normal_vals.push(scaling_summary(&n, &cfg).unwrap().holder_mean);
            nodule_vals.push(scaling_summary(&p, &cfg).unwrap().holder_mean);
        }
        assert!(
            mean(&nodule_vals) < mean(&normal_vals),
            "nodule {} vs normal {}",
            mean(&nodule_vals),
            mean(&normal_vals)
        );
    }

    #[test]
    fn dfa_monotone_in_target_h() {
        let targets = [0.3, 0.5, 0.7, 0.9];
        let mut means = Vec::new();
        for &h in &targets {
            let mut est = Vec::new();
            for seed in 0..10u64 {
                let x = fractional_gaussian_noise(h, 1 << 13, 1000 + seed).unwrap();
                let scales = default_dfa_scales(x.len(), 16);
                est.push(hurst_dfa(&x, &scales).unwrap().0);
            }
            means.push(mean(&est));
        }
        for pair in means.windows(2) {
            assert!(pair[0] < pair[1], "means not monotone: {means:?}");
        }
    }

    #[test]
    fn append_scaling_broadcasts_constants() {
        let m = Mat::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let summary = ScalingSummary {
            hurst: 0.7,
            fit_r2: 0.99,
            holder_series: vec![(0, Some(0.9))],
            holder_mean: 0.9,
            complement: 1.3,
            hurst_valid: true,
        };
        let out = append_scaling_columns(&m, &summary);
        assert_eq!(out.cols(), 4);
        for r in 0..2 {
            assert_eq!(out.get(r, 2), 0.7);
            assert_eq!(out.get(r, 3), 0.9);
        }
    }
}
