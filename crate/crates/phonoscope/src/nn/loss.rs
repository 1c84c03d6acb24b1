//! Binary cross-entropy.

use super::{NnError, Result};

const CLAMP_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over a batch, with predictions clamped to
/// `[1e-7, 1 - 1e-7]`. Returns the loss and dLoss/dPred.
pub fn bce_loss(pred: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    assert_eq!(pred.len(), labels.len());
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p_raw, &y) in pred.iter().zip(labels) {
        if y != 0.0 && y != 1.0 {
            return Err(NnError::Label(y));
        }
        let p = p_raw.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        // gradient of the mean loss w.r.t. the (clamped) prediction
        let inside = (CLAMP_EPS..=1.0 - CLAMP_EPS).contains(&p_raw);
        grad.push(if inside { (p - y) / (p * (1.0 - p)) / n } else { 0.0 });
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(NnError::Numeric(format!("non-finite loss {loss}")));
    }
    Ok((loss, grad))
}
