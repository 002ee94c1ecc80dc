use serde::{Deserialize, Serialize};

use super::check_training;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2_penalty: f64,
    pub max_iters: usize,
    /// Stop when the gradient norm falls below this.
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig { l2_penalty: 1e-2, max_iters: 500, tol: 1e-6 }
    }
}

/// L2-regularised logistic model on standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

impl LogReg {
    /// Positive-class logit.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Dimension { expected: self.weights.len(), got: x.len() });
        }
        Ok(self.bias
            + x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((v, m), s), w)| w * (v - m) / s)
                .sum::<f64>())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fit by full-batch gradient descent from a zero start.
///
/// Classes are weighted equally regardless of their sizes. The step size is
/// the inverse of a Lipschitz bound of the gradient, so the iteration is
/// deterministic and monotone.
pub fn train_logreg(positives: &[&[f64]], negatives: &[&[f64]], cfg: &LogRegConfig) -> Result<LogReg> {
    let d = check_training(positives, negatives)?;
    if !(cfg.l2_penalty >= 0.0) || cfg.max_iters == 0 {
        return Err(Error::config("logreg needs l2_penalty >= 0 and max_iters >= 1"));
    }
    let rows: Vec<(&[f64], f64, f64)> = positives
        .iter()
        .map(|x| (*x, 1.0, 0.5 / positives.len() as f64))
        .chain(negatives.iter().map(|x| (*x, 0.0, 0.5 / negatives.len() as f64)))
        .collect();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for (x, _, _) in &rows {
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; d];
    for (x, _, _) in &rows {
        for ((s, v), m) in scale.iter_mut().zip(x.iter()).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    if scale.iter().all(|s| *s <= 1e-24) {
        return Err(Error::Numerical("all training vectors are identical".into()));
    }
    for s in scale.iter_mut() {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let z: Vec<Vec<f64>> =
        rows.iter().map(|(x, _, _)| x.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect()).collect();

    let max_sq = z.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).fold(0.0, f64::max);
    // weights sum to 1, so the loss Hessian is bounded by max ||[z, 1]||^2 / 4
    let step = 1.0 / (0.25 * max_sq + cfg.l2_penalty);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        grad.iter_mut().zip(&w).for_each(|(g, wi)| *g = cfg.l2_penalty * wi);
        let mut gb = 0.0;
        for (zr, (_, y, weight)) in z.iter().zip(&rows) {
            let logit = b + zr.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let r = weight * (sigmoid(logit) - y);
            gb += r;
            for (g, a) in grad.iter_mut().zip(zr) {
                *g += r * a;
            }
        }
        let norm = (grad.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < cfg.tol {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= step * g;
        }
        b -= step * gb;
    }
    Ok(LogReg { mean, scale, weights: w, bias: b, iterations })
}
