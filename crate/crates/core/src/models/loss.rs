use crate::error::{Error, Result};

/// Probabilities are clamped into `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn predict_sigmoid(logits: &[f64]) -> Vec<f64> {
    logits.iter().map(|&x| sigmoid(x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BceLoss {
    pub value: f64,
    /// How many probabilities had to be clamped.
    pub clamped: usize,
}

/// Mean binary cross-entropy over the candidate entities.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<BceLoss> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities against {} labels",
            p.len(),
            y.len()
        )));
    }
    let mut clamped = 0;
    let mut sum = 0.0;
    for (&pi, &yi) in p.iter().zip(y) {
        let mut q = pi;
        if !(EPS..=1.0 - EPS).contains(&q) {
            clamped += 1;
            q = q.clamp(EPS, 1.0 - EPS);
        }
        sum += yi * q.ln() + (1.0 - yi) * (1.0 - q).ln();
    }
    Ok(BceLoss { value: -sum / p.len() as f64, clamped })
}

/// Soft targets `(1 - ε) y + 1 / n`; identity when `ε = 0`.
pub fn smooth_labels(y: &mut [f64], smoothing: f64) {
    if smoothing == 0.0 {
        return;
    }
    let n = y.len() as f64;
    for v in y {
        *v = (1.0 - smoothing) * *v + 1.0 / n;
    }
}
