use crate::{Error, Result};

/// Burg estimate of an AR(p) model `x[t] = Σ coeffs[k] x[t-1-k] + e[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgFit {
    pub coeffs: Vec<f64>,
    pub reflection: Vec<f64>,
    /// Final forward/backward prediction error power.
    pub error_power: f64,
}

/// Burg's method: choose each reflection coefficient to minimise the summed
/// forward and backward prediction error power, then extend the predictor by
/// the Levinson recursion.
pub fn burg(x: &[f64], order: usize) -> Result<BurgFit> {
    let n = x.len();
    if order == 0 || order >= n {
        return Err(Error::config(format!("AR order {order} must be in [1, {n})")));
    }
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::Numerical("zero-power signal has no AR model".into()));
    }
    let mut f = x.to_vec();
    let mut b = x.to_vec();
    // prediction-error filter 1 + a1 z^-1 + ... + ap z^-p
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut reflection = Vec::with_capacity(order);
    let mut err = energy / n as f64;
    for m in 0..order {
        let (mut num, mut den) = (0.0, 0.0);
        for t in (m + 1)..n {
            num += f[t] * b[t - 1];
            den += f[t] * f[t] + b[t - 1] * b[t - 1];
        }
        if !(den > energy * 1e-300) {
            return Err(Error::Numerical(format!("prediction error vanished at stage {}", m + 1)));
        }
        let k = -2.0 * num / den;
        let prev = a.clone();
        for i in 1..=m + 1 {
            a[i] = prev[i] + k * prev[m + 1 - i];
        }
        for t in ((m + 1)..n).rev() {
            let (ft, bt) = (f[t], b[t - 1]);
            f[t] = ft + k * bt;
            b[t] = bt + k * ft;
        }
        err *= 1.0 - k * k;
        reflection.push(k);
    }
    let coeffs: Vec<f64> = a[1..].iter().map(|v| -v).collect();
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("non-finite AR coefficients".into()));
    }
    Ok(BurgFit { coeffs, reflection, error_power: err })
}
