use serde::{Deserialize, Serialize};

use crate::error::{Result, TatError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda_ce: f64,
    pub lambda_metric: f64,
    /// Softmax temperature over negative class distances.
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_ce: 1.0,
            lambda_metric: 1.0,
            temperature: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(TatError::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.lambda_ce >= 0.0 && self.lambda_metric >= 0.0) {
            return Err(TatError::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Cross-entropy of `softmax(logits)` at `label`, with its gradient.
pub fn cls_loss(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(TatError::Argument(format!("label {label} outside 0..{}", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exp.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Cross-entropy of `softmax(-d / temperature)` at `label`, with the gradient
/// with respect to the distances.
pub fn metric_loss(distances: &[f64], label: usize, temperature: f64) -> Result<(f64, Vec<f64>)> {
    let logits: Vec<f64> = distances.iter().map(|d| -d / temperature).collect();
    let (loss, g) = cls_loss(&logits, label)?;
    Ok((loss, g.into_iter().map(|v| -v / temperature).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let (l, _) = cls_loss(&[0.0; 5], 2).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-12);
        let (l, _) = cls_loss(&[2.0, 0.0], 0).unwrap();
        assert!((l - (1.0 + (-2f64).exp()).ln()).abs() < 1e-12);
        assert!((l - 0.1269).abs() < 1e-4);
        let (l, _) = metric_loss(&[0.0, 1.0], 0, 1.0).unwrap();
        assert!((l - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn gradients_match_differences() {
        let d = [0.3, 1.2, 0.7];
        let (_, g) = metric_loss(&d, 1, 0.5).unwrap();
        for i in 0..3 {
            let mut p = d;
            let mut m = d;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (metric_loss(&p, 1, 0.5).unwrap().0 - metric_loss(&m, 1, 0.5).unwrap().0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7);
        }
        assert!(cls_loss(&d, 3).is_err());
    }

    #[test]
    fn large_logits_are_stable() {
        let (l, g) = cls_loss(&[1000.0, -1000.0], 0).unwrap();
        assert!(l.abs() < 1e-12 && g.iter().all(|v| v.is_finite()));
    }
}
