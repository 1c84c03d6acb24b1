//! Soft-margin SVM trained by sequential minimal optimization.
//!
//! Classic working-set SMO: the outer loop alternates full sweeps with
//! sweeps over non-bound multipliers, the second index maximizes |E1 - E2|,
//! and each pair is solved analytically with box clipping. The kernel matrix
//! is precomputed (hundreds of vectors at most in this project).

use crate::util::Mat;

use super::{ModelError, Result, SvmKernel, SvmParams};

/// A trained SVM: support vectors with their `alpha_i * y_i` coefficients,
/// the bias, and the kernel it was trained with.
#[derive(Debug, Clone)]
pub struct SvmModel {
    pub support_vectors: Mat,
    pub alpha_y: Vec<f64>,
    pub bias: f64,
    pub kernel: SvmKernel,
    pub gamma: f64,
}

fn kernel_eval(kind: SvmKernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        SvmKernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        SvmKernel::Rbf => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-gamma * d2).exp()
        }
    }
}

/// Decision value `f(x) = sum_i alpha_i y_i K(x_i, x) + b`.
pub fn svm_decision(model: &SvmModel, x: &[f64]) -> f64 {
    let mut f = model.bias;
    for (i, &ay) in model.alpha_y.iter().enumerate() {
        f += ay * kernel_eval(model.kernel, model.gamma, model.support_vectors.row(i), x);
    }
    f
}

/// Hard prediction (0 = normal, 1 = nodule) plus the signed margin.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> (u8, f64) {
    let f = svm_decision(model, x);
    (u8::from(f >= 0.0), f)
}

/// Trains a binary SVM on standardized vectors with labels in {0, 1}.
pub fn svm_train(vectors: &Mat, labels: &[u8], params: &SvmParams) -> Result<SvmModel> {
    let n = vectors.rows();
    if n != labels.len() {
        return Err(ModelError::Shape(format!(
            "{n} vectors but {} labels",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(ModelError::Parameter("need at least 2 training vectors".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(ModelError::SingleClass);
    }
    if !(params.c > 0.0) {
        return Err(ModelError::Parameter("C must be positive".into()));
    }
    let gamma = params.gamma.unwrap_or(1.0 / vectors.cols() as f64);
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let c = params.c;
    let tol = params.tol;

    // precomputed kernel matrix
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel_eval(params.kernel, gamma, vectors.row(i), vectors.row(j));
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }

    let mut alpha = vec![0.0f64; n];
    let mut bias = 0.0f64;
    // error cache: E_i = f(x_i) - y_i; with all alpha zero, f = 0
    let mut err: Vec<f64> = y.iter().map(|&yi| -yi).collect();

    let mut take_step = |i1: usize,
                         i2: usize,
                         alpha: &mut Vec<f64>,
                         bias: &mut f64,
                         err: &mut Vec<f64>|
     -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (alpha[i1], alpha[i2]);
        let (y1, y2) = (y[i1], y[i2]);
        let (e1, e2) = (err[i1], err[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s < 0.0 {
            ((a2_old - a1_old).max(0.0), (c + a2_old - a1_old).min(c))
        } else {
            ((a1_old + a2_old - c).max(0.0), (a1_old + a2_old).min(c))
        };
        if (hi - lo).abs() < 1e-12 {
            return false;
        }
        let k11 = k[i1 * n + i1];
        let k12 = k[i1 * n + i2];
        let k22 = k[i2 * n + i2];
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2 = if eta > 1e-12 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // degenerate curvature: move to the better bound
            let f1 = y2 * (e1 - e2);
            if f1 > 0.0 {
                hi
            } else {
                lo
            }
        };
        if (a2 - a2_old).abs() < 1e-12 * (a2 + a2_old + 1e-12) {
            return false;
        }
        if a2 < 1e-12 {
            a2 = 0.0;
        } else if a2 > c - 1e-12 {
            a2 = c;
        }
        let a1 = a1_old + s * (a2_old - a2);
        let a1 = a1.clamp(0.0, c);

        // bias update (Platt's b1/b2 rule)
        let b1 = *bias - e1 - y1 * (a1 - a1_old) * k11 - y2 * (a2 - a2_old) * k12;
        let b2 = *bias - e2 - y1 * (a1 - a1_old) * k12 - y2 * (a2 - a2_old) * k22;
        let new_b = if a1 > 0.0 && a1 < c {
            b1
        } else if a2 > 0.0 && a2 < c {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        let db = new_b - *bias;
        *bias = new_b;

        // exact incremental error-cache refresh (covers i1 and i2 too)
        let d1 = y1 * (a1 - a1_old);
        let d2 = y2 * (a2 - a2_old);
        for j in 0..n {
            err[j] += d1 * k[i1 * n + j] + d2 * k[i2 * n + j] + db;
        }
        alpha[i1] = a1;
        alpha[i2] = a2;
        true
    };

    let examine = |i2: usize,
                   alpha: &mut Vec<f64>,
                   bias: &mut f64,
                   err: &mut Vec<f64>,
                   take: &mut dyn FnMut(
        usize,
        usize,
        &mut Vec<f64>,
        &mut f64,
        &mut Vec<f64>,
    ) -> bool|
     -> bool {
        let r2 = err[i2] * y[i2];
        if (r2 < -tol && alpha[i2] < c) || (r2 > tol && alpha[i2] > 0.0) {
            // best second choice: maximize |E1 - E2|
            let mut best = None;
            let mut best_gap = 0.0;
            for i1 in 0..n {
                if alpha[i1] > 0.0 && alpha[i1] < c {
                    let gap = (err[i1] - err[i2]).abs();
                    if gap > best_gap {
                        best_gap = gap;
                        best = Some(i1);
                    }
                }
            }
            if let Some(i1) = best {
                if take(i1, i2, alpha, bias, err) {
                    return true;
                }
            }
            // fall back to sweeps over non-bound then all indices
            for i1 in 0..n {
                if alpha[i1] > 0.0 && alpha[i1] < c && take(i1, i2, alpha, bias, err) {
                    return true;
                }
            }
            for i1 in 0..n {
                if take(i1, i2, alpha, bias, err) {
                    return true;
                }
            }
        }
        false
    };

    let mut iterations = 0usize;
    let mut examine_all = true;
    loop {
        let mut changed = 0usize;
        for i2 in 0..n {
            let consider =
                examine_all || (alpha[i2] > 0.0 && alpha[i2] < c);
            if consider && examine(i2, &mut alpha, &mut bias, &mut err, &mut take_step) {
                changed += 1;
            }
            iterations += 1;
            if iterations > params.max_iter {
                let violation = worst_kkt_violation(&alpha, &err, &y, c);
                if violation > tol {
                    return Err(ModelError::Convergence { iterations, violation });
                }
                break;
            }
        }
        if examine_all {
            if changed == 0 {
                break;
            }
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
        if iterations > params.max_iter {
            break;
        }
    }

    let violation = worst_kkt_violation(&alpha, &err, &y, c);
    if violation > tol * 10.0 {
        return Err(ModelError::Convergence { iterations, violation });
    }

    // keep only the support vectors
    let keep: Vec<usize> = (0..n).filter(|&i| alpha[i] > 1e-12).collect();
    let mut sv = Mat::zeros(keep.len(), vectors.cols());
    let mut alpha_y = Vec::with_capacity(keep.len());
    for (r, &i) in keep.iter().enumerate() {
        sv.row_mut(r).copy_from_slice(vectors.row(i));
        alpha_y.push(alpha[i] * y[i]);
    }
    Ok(SvmModel { support_vectors: sv, alpha_y, bias, kernel: params.kernel, gamma })
}

/// Worst KKT violation over the training set, using the error cache
/// (E_i = f_i - y_i, so y_i f_i = 1 + y_i E_i).
fn worst_kkt_violation(alpha: &[f64], err: &[f64], y: &[f64], c: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..alpha.len() {
        let yf = 1.0 + y[i] * err[i];
        let v = if alpha[i] <= 1e-12 {
            (1.0 - yf).max(0.0) // want yf >= 1
        } else if alpha[i] >= c - 1e-12 {
            (yf - 1.0).max(0.0) // want yf <= 1
        } else {
            (yf - 1.0).abs() // want yf == 1
        };
        worst = worst.max(v);
    }
    worst
}

/// KKT satisfaction check against a trained model (test helper surface).
pub fn kkt_satisfied(
    vectors: &Mat,
    labels: &[u8],
    alpha_like_model: &SvmModel,
    c: f64,
    tol: f64,
) -> bool {
    // recover per-training-vector alpha by matching rows against support vectors
    for r in 0..vectors.rows() {
        let y = if labels[r] == 1 { 1.0 } else { -1.0 };
        let f = svm_decision(alpha_like_model, vectors.row(r));
        let yf = y * f;
        // find alpha for this row (0 when not a support vector)
        let mut a = 0.0;
        for (i, &ay) in alpha_like_model.alpha_y.iter().enumerate() {
            if alpha_like_model.support_vectors.row(i) == vectors.row(r) {
                a = ay.abs();
                break;
            }
        }
        let ok = if a <= 1e-12 {
            yf >= 1.0 - tol
        } else if a >= c - 1e-12 {
            yf <= 1.0 + tol
        } else {
            (yf - 1.0).abs() <= tol
        };
        if !ok {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn linearly_separable(n_per: usize, seed: u64) -> (Mat, Vec<u8>) {
        let mut rng = crate::util::seeded_rng(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n_per {
            rows.push(vec![rng.gen_range(-1.0..0.0) - 1.0, rng.gen_range(-1.0..1.0)]);
            labels.push(0u8);
            rows.push(vec![rng.gen_range(0.0..1.0) + 1.0, rng.gen_range(-1.0..1.0)]);
            labels.push(1u8);
        }
        (Mat::from_rows(rows), labels)
    }

    #[test]
    fn separable_linear_case_reaches_full_accuracy_with_kkt() {
        let (x, y) = linearly_separable(20, 3);
        let params = SvmParams { kernel: SvmKernel::Linear, ..SvmParams::default() };
        let model = svm_train(&x, &y, &params).unwrap();
        for r in 0..x.rows() {
            let (pred, _) = svm_predict(&model, x.row(r));
            assert_eq!(pred, y[r], "row {r}");
        }
        assert!(kkt_satisfied(&x, &y, &model, params.c, params.tol));
    }

    #[test]
    fn duplicated_training_set_keeps_the_decision_function() {
        let (x, y) = linearly_separable(12, 5);
        let params = SvmParams {
            kernel: SvmKernel::Linear,
            tol: 1e-8,
            max_iter: 200_000,
            ..SvmParams::default()
        };
        let base = svm_train(&x, &y, &params).unwrap();

        let mut rows2 = Vec::new();
        let mut y2 = Vec::new();
        for r in 0..x.rows() {
            rows2.push(x.row(r).to_vec());
            y2.push(y[r]);
        }
        for r in 0..x.rows() {
            rows2.push(x.row(r).to_vec());
            y2.push(y[r]);
        }
        let doubled = svm_train(&Mat::from_rows(rows2), &y2, &params).unwrap();

        let mut rng = crate::util::seeded_rng(9);
        for _ in 0..50 {
            let probe = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let fa = svm_decision(&base, &probe);
            let fb = svm_decision(&doubled, &probe);
            assert!((fa - fb).abs() < 1e-6, "{fa} vs {fb} at {probe:?}");
        }
    }

    #[test]
    fn concentric_circles_need_rbf() {
        let mut rng = crate::util::seeded_rng(11);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let (r, label) = if i % 2 == 0 { (0.5, 0u8) } else { (2.0, 1u8) };
            let r = r + rng.gen_range(-0.1..0.1);
            rows.push(vec![r * theta.cos(), r * theta.sin()]);
            labels.push(label);
        }
        let x = Mat::from_rows(rows);
        let params = SvmParams { kernel: SvmKernel::Rbf, gamma: Some(1.0), ..SvmParams::default() };
        let model = svm_train(&x, &labels, &params).unwrap();
        let correct = (0..x.rows())
            .filter(|&r| svm_predict(&model, x.row(r)).0 == labels[r])
            .count();
        assert!(
            correct as f64 / x.rows() as f64 >= 0.95,
            "train accuracy {}",
            correct as f64 / x.rows() as f64
        );
    }

    #[test]
    fn single_class_rejected() {
        let x = Mat::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(
            svm_train(&x, &[1, 1], &SvmParams::default()),
            Err(ModelError::SingleClass)
        ));
    }
}
