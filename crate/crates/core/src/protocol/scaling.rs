use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `eer = a + b * log10(n)` fitted by least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub a: f64,
    pub b: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPrediction {
    pub n: f64,
    pub eer: f64,
    /// Beyond twice the largest observed n.
    pub extrapolated: bool,
}

pub fn fit_scaling_curve(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if let Some(p) = points.iter().find(|(n, e)| !(*n > 0.0) || !n.is_finite() || !e.is_finite()) {
        return Err(Error::config(format!("invalid scaling point ({}, {})", p.0, p.1)));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.log10()).collect();
    let distinct = {
        let mut v: Vec<f64> = points.iter().map(|p| p.0).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if distinct < 2 {
        return Err(Error::Numerical("scaling fit needs at least 2 distinct subject counts (rank deficient)".into()));
    }
    let k = points.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let n_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let n_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    Ok(ScalingFit { a, b, n_min, n_max, n_points: points.len() })
}

impl ScalingFit {
    pub fn predict(&self, n: f64) -> ScalingPrediction {
        ScalingPrediction { n, eer: self.a + self.b * n.log10(), extrapolated: n > 2.0 * self.n_max }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn two_point_exact() {
        let f = fit_scaling_curve(&[(10.0, 20.0), (100.0, 15.0)]).unwrap();
        assert!((f.a - 25.0).abs() < 1e-12 && (f.b + 5.0).abs() < 1e-12);
        let p = f.predict(1000.0);
        assert!((p.eer - 10.0).abs() < 1e-12);
        assert!(p.extrapolated);
        assert!(!f.predict(150.0).extrapolated);
    }

    #[test]
    fn duplicated_n_is_rank_deficient() {
        assert!(fit_scaling_curve(&[(10.0, 20.0), (10.0, 18.0)]).is_err());
        assert!(fit_scaling_curve(&[(0.0, 1.0), (10.0, 18.0)]).is_err());
    }

    #[test]
    fn noisy_slope_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0]
            .iter()
            .flat_map(|n| (0..5).map(move |_| *n))
            .map(|n: f64| (n, 30.0 - 6.0 * n.log10()))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|(n, e)| (n, e + noise.sample(&mut rng)))
            .collect();
        let f = fit_scaling_curve(&pts).unwrap();
        assert!((f.b + 6.0).abs() <= 0.6, "{}", f.b);
    }
}
