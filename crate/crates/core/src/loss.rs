//! Weighted cross-entropy and the uncertainty-weighted joint objective.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Mean over rows with a target of `weights[t] · −log softmax(row)[t]`.
///
/// Rows whose target is `None` are ignored; an all-ignored batch is an error.
pub fn weighted_ce(logits: &Matrix, targets: &[Option<usize>], weights: &[f64]) -> Result<f64> {
    if targets.len() != logits.rows() || weights.len() != logits.cols() {
        return Err(Error::contract("cross-entropy shapes do not match"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, t) in targets.iter().enumerate() {
        let Some(t) = *t else { continue };
        if t >= logits.cols() {
            return Err(Error::contract(format!("target {t} out of {} classes", logits.cols())));
        }
        let row = logits.row(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += weights[t] * (lse - row[t]);
        count += 1;
    }
    if count == 0 {
        return Err(Error::contract("every element is ignored"));
    }
    Ok(total / count as f64)
}

/// `L_seg / (2σ₁²) + L_complet / (2σ₂²) + log σ₁ + log σ₂`.
pub fn uncertainty_loss(l_seg: f64, l_complet: f64, sigma1: f64, sigma2: f64) -> f64 {
    l_seg / (2.0 * sigma1 * sigma1) + l_complet / (2.0 * sigma2 * sigma2) + sigma1.ln() + sigma2.ln()
}

/// The same objective in the log-variance parametrization `s = log σ²`.
pub fn uncertainty_loss_log_var(l_seg: f64, l_complet: f64, s1: f64, s2: f64) -> f64 {
    0.5 * (-s1).exp() * l_seg + 0.5 * (-s2).exp() * l_complet + 0.5 * s1 + 0.5 * s2
}

/// `∂/∂σ` of one task's term `L/(2σ²) + log σ`.
pub fn uncertainty_dsigma(l: f64, sigma: f64) -> f64 {
    -l / sigma.powi(3) + 1.0 / sigma
}

pub fn sigma_from_log_var(s: f64) -> f64 {
    (0.5 * s).exp()
}

pub fn log_var_from_sigma(sigma: f64) -> f64 {
    2.0 * sigma.ln()
}

/// Inverse square-root class frequencies, normalized to mean 1 over classes that occur.
/// Absent classes get weight 1.
pub fn inverse_sqrt_frequency(counts: &[u64]) -> Vec<f64> {
    let raw: Vec<Option<f64>> = counts
        .iter()
        .map(|&n| (n > 0).then(|| 1.0 / (n as f64).sqrt()))
        .collect();
    let present: Vec<f64> = raw.iter().flatten().copied().collect();
    if present.is_empty() {
        return vec![1.0; counts.len()];
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    raw.into_iter().map(|w| w.map_or(1.0, |w| w / mean)).collect()
}
