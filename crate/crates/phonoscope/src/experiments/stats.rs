//! Run statistics: normal-approximation confidence intervals, Welch and
//! pooled two-sample t-tests with exact Student-t tail probabilities, and
//! Cohen's d effect sizes.

use crate::util::{mean, sample_sd};

use super::{ExperimentError, Result};

/// ln Γ(x) by the Lanczos approximation (g = 7, 9 terms).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_93;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the regularized incomplete beta (Lentz's method).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return f64::NAN;
    }
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x)
}

/// Standard-normal quantile (Acklam's rational approximation, |rel err| < 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p outside (0, 1)");
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Normal-approximation confidence interval: `mean ± z * sd / sqrt(n)`.
/// At the default 0.95 level, z = 1.959964.
pub fn confidence_interval(mean: f64, sd: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(ExperimentError::Parameter(format!("n {n} < 2")));
    }
    if sd < 0.0 {
        return Err(ExperimentError::Parameter(format!("sd {sd} negative")));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(ExperimentError::Parameter(format!("level {level} outside (0, 1)")));
    }
    let z = normal_quantile(0.5 + level / 2.0);
    let hw = z * sd / (n as f64).sqrt();
    Ok((mean - hw, mean + hw))
}

/// A two-sample t-test result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn check_samples(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(ExperimentError::Parameter(format!(
            "t-test needs >= 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Welch's unequal-variance t-test with the Welch-Satterthwaite df.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    check_samples(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_sd(a).powi(2), sample_sd(b).powi(2));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return Err(ExperimentError::UndefinedStatistic(
            "both samples have zero variance".into(),
        ));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    Ok(TTest { t, df, p: student_t_two_sided_p(t, df) })
}

/// Pooled-variance (Student) two-sample t-test.
pub fn pooled_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    check_samples(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_sd(a).powi(2), sample_sd(b).powi(2));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    if sp2 == 0.0 {
        return Err(ExperimentError::UndefinedStatistic(
            "both samples have zero variance".into(),
        ));
    }
    let t = (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTest { t, df, p: student_t_two_sided_p(t, df) })
}

/// Cohen's d from summary statistics, pooled-SD form for equal group sizes:
/// `(mean_a - mean_b) / sqrt((sd_a^2 + sd_b^2) / 2)`.
pub fn cohens_d_summary(mean_a: f64, sd_a: f64, mean_b: f64, sd_b: f64) -> Result<f64> {
    if sd_a < 0.0 || sd_b < 0.0 {
        return Err(ExperimentError::Parameter("negative sd".into()));
    }
    let denom = ((sd_a * sd_a + sd_b * sd_b) / 2.0).sqrt();
    if denom == 0.0 {
        if mean_a == mean_b {
            return Err(ExperimentError::UndefinedStatistic(
                "both SDs zero with equal means".into(),
            ));
        }
        return Err(ExperimentError::UndefinedStatistic("both SDs zero".into()));
    }
    Ok((mean_a - mean_b) / denom)
}

/// Cohen's d from sample lists (sample SDs).
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    check_samples(a, b)?;
    cohens_d_summary(mean(a), sample_sd(a), mean(b), sample_sd(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-sided Student-t p-values computed independently at 30-digit
    /// precision (regularized incomplete beta, frozen as fixtures).
    const T_CDF_FIXTURES: [(f64, f64, f64); 11] = [
        (-1.224744871391589, 4.0, 0.2878641347266907),
        (2.5, 10.0, 0.031446844236608804),
        (0.5, 1.0, 0.70483276469913345),
        (3.0, 26.0, 0.0058854538503989921),
        (1.959964, 200.0, 0.051389080212712203),
        (-0.82, 43.7, 0.41666638775652601),
        (31.51, 50.3, 8.7499950556693693e-35),
        (0.11, 51.9, 0.91283362360456264),
        (2.2, 52.0, 0.032274245568011826),
        (1.0, 2.5, 0.40406102727827347),
        (12.3456, 7.0, 5.2540045754535644e-6),
    ];

    #[test]
    fn t_tail_probabilities_match_reference_fixtures() {
        for &(t, df, expected) in &T_CDF_FIXTURES {
            let p = student_t_two_sided_p(t, df);
            let err = (p - expected).abs();
            assert!(err < 1e-10 + expected * 1e-9, "t={t}, df={df}: p={p} vs {expected}");
        }
    }

    #[test]
    fn pooled_t_textbook_example() {
        let test = pooled_t(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((test.t + 1.224_744_871_391_589).abs() < 1e-12);
        assert!((test.df - 4.0).abs() < 1e-12);
        assert!((test.p - 0.287_864_134_726_690_7).abs() < 1e-10);
    }

    #[test]
    fn welch_identical_samples_and_antisymmetry() {
        let a = [0.9, 0.92, 0.91, 0.93];
        let t = welch_t(&a, &a).unwrap();
        assert_eq!(t.t, 0.0);
        assert_eq!(t.p, 1.0);

        let b = [0.85, 0.86, 0.88, 0.84];
        let ab = welch_t(&a, &b).unwrap();
        let ba = welch_t(&b, &a).unwrap();
        assert!((ab.t + ba.t).abs() < 1e-12);
        assert!((ab.p - ba.p).abs() < 1e-12);

        let d_ab = cohens_d(&a, &b).unwrap();
        let d_ba = cohens_d(&b, &a).unwrap();
        assert!((d_ab + d_ba).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_pairs_are_undefined() {
        let a = [0.9, 0.9, 0.9];
        assert!(matches!(welch_t(&a, &a), Err(ExperimentError::UndefinedStatistic(_))));
        assert!(matches!(
            cohens_d_summary(0.5, 0.0, 0.5, 0.0),
            Err(ExperimentError::UndefinedStatistic(_))
        ));
        assert!((cohens_d_summary(0.5, 0.1, 0.5, 0.2).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ci_formula_and_edge_cases() {
        // z at 0.95 is 1.959964 to the published precision
        let z = normal_quantile(0.975);
        assert!((z - 1.959964).abs() < 1e-6, "z {z}");

        let (lo, hi) = confidence_interval(0.9286, 0.0098, 27, 0.95).unwrap();
        assert!((lo - 0.9249).abs() < 5e-5, "lo {lo}");
        assert!((hi - 0.9323).abs() < 5e-5, "hi {hi}");

        let (lo, hi) = confidence_interval(0.7855, 0.0089, 27, 0.95).unwrap();
        assert!((lo - 0.7821).abs() < 5e-5, "lo {lo}");
        assert!((hi - 0.7889).abs() < 5e-5, "hi {hi}");

        let (lo, hi) = confidence_interval(0.9, 0.0, 10, 0.95).unwrap();
        assert_eq!((lo, hi), (0.9, 0.9));

        assert!(confidence_interval(0.9, 0.1, 1, 0.95).is_err());
    }

    #[test]
    fn ci_width_shrinks_like_inverse_sqrt_n() {
        let (lo4, hi4) = confidence_interval(0.5, 0.1, 4, 0.95).unwrap();
        let (lo16, hi16) = confidence_interval(0.5, 0.1, 16, 0.95).unwrap();
        let w4 = hi4 - lo4;
        let w16 = hi16 - lo16;
        assert!((w4 / w16 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn cohens_d_published_cross_checks() {
        // headline comparison pairs reproduce published effect sizes
        let d = cohens_d_summary(0.9266, 0.0088, 0.8559, 0.0092).unwrap();
        assert!((d - 7.8536).abs() < 1e-3, "d {d}");
        let d = cohens_d_summary(0.9286, 0.0098, 0.7855, 0.0089).unwrap();
        assert!((d - 15.2871).abs() < 1e-3, "d {d}");
        let d = cohens_d_summary(0.5, 0.1, 0.5, 0.3).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn incomplete_beta_sanity() {
        // I_x(1, 1) = x
        for x in [0.1, 0.5, 0.9] {
            assert!((regularized_incomplete_beta(1.0, 1.0, x) - x).abs() < 1e-12);
        }
        // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
        let v = regularized_incomplete_beta(2.5, 3.5, 0.3);
        let w = 1.0 - regularized_incomplete_beta(3.5, 2.5, 0.7);
        assert!((v - w).abs() < 1e-12);
    }
}
