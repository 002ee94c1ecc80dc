use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::{Error, Result};

pub const DEFAULT_IQR_EPSILON: f64 = 1e-12;

/// Quantile of sorted data by linear interpolation between order statistics
/// (`h = (n - 1) p`, the "type 7" convention).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// (median, interquartile range) of a channel.
pub fn median_iqr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let med = quantile_sorted(&v, 0.5);
    (med, quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25))
}

/// Per-channel `(x - median) / IQR` over the whole input.
pub fn robust_normalize(x: &Array2<f64>, epsilon: f64) -> Result<Array2<f64>> {
    if x.ncols() == 0 {
        return Err(Error::stage("normalize", "empty signal"));
    }
    let stats: Vec<(f64, f64)> = x.axis_iter(Axis(0)).into_par_iter().map(|row| median_iqr(row.iter().copied())).collect();
    if let Some((channel, (_, iqr))) = stats.iter().enumerate().find(|(_, (_, iqr))| !(*iqr > epsilon)) {
        return Err(Error::DegenerateChannel {
            channel,
            msg: format!("interquartile range {iqr:e} <= {epsilon:e} (constant or dead electrode)"),
        });
    }
    let mut out = x.clone();
    for (mut row, (med, iqr)) in out.axis_iter_mut(Axis(0)).zip(&stats) {
        row.mapv_inplace(|v| (v - med) / iqr);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn one_to_five_hand_computed() {
        // type 7: Q1 = 2, median = 3, Q3 = 4
        let out = robust_normalize(&array![[1.0, 2.0, 3.0, 4.0, 5.0]], DEFAULT_IQR_EPSILON).unwrap();
        assert_eq!(out, array![[-1.0, -0.5, 0.0, 0.5, 1.0]]);
    }

    #[test]
    fn interpolated_quartiles() {
        // n = 4: Q1 at h = 0.75 -> 1.75, Q3 at h = 2.25 -> 3.25
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.75), 3.25);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let x = array![[1.0, 2.0, 3.0, 4.0], [7.0, 7.0, 7.0, 7.0]];
        match robust_normalize(&x, DEFAULT_IQR_EPSILON) {
            Err(Error::DegenerateChannel { channel, .. }) => assert_eq!(channel, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn affine_invariance(vals in proptest::collection::vec(-100.0f64..100.0, 8..64), a in 0.01f64..50.0, b in -1e3f64..1e3) {
            let n = vals.len();
            let x = Array2::from_shape_vec((1, n), vals.clone()).unwrap();
            prop_assume!(median_iqr(vals.iter().copied()).1 > 1e-3);
            let y = x.mapv(|v| a * v + b);
            let nx = robust_normalize(&x, DEFAULT_IQR_EPSILON).unwrap();
            let ny = robust_normalize(&y, DEFAULT_IQR_EPSILON).unwrap();
            for (p, q) in nx.iter().zip(ny.iter()) {
                prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()));
            }
            let (med, iqr) = median_iqr(nx.iter().copied());
            prop_assert!(med.abs() < 1e-9 && (iqr - 1.0).abs() < 1e-9);
        }
    }
}
