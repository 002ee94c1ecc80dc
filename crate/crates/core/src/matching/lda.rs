use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::check_training;
use crate::{Error, Result};

pub const DEFAULT_SHRINKAGE: f64 = 0.1;

/// Two-class linear discriminant: `score(x) = w . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub shrinkage: f64,
}

impl Lda {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Dimension { expected: self.weights.len(), got: x.len() });
        }
        Ok(self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }
}

fn mean_of(rows: &[&[f64]], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r.iter()) {
            *a += b;
        }
    }
    let n = rows.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn singular() -> Error {
    Error::Numerical("within-class scatter is singular; use shrinkage > 0".into())
}

/// Fit with a shrunk pooled covariance `(1-l) S + l (tr S / d) I`.
///
/// When samples are fewer than dimensions the inverse is applied through the
/// Woodbury identity on the n x n Gram matrix.
pub fn train_lda(positives: &[&[f64]], negatives: &[&[f64]], shrinkage: f64) -> Result<Lda> {
    let d = check_training(positives, negatives)?;
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::config(format!("shrinkage must be in [0, 1], got {shrinkage}")));
    }
    let mp = mean_of(positives, d);
    let mn = mean_of(negatives, d);
    let n = positives.len() + negatives.len();
    let dof = (n.saturating_sub(2)).max(1) as f64;

    let mut centered = DMatrix::<f64>::zeros(n, d);
    for (i, (r, m)) in positives.iter().map(|r| (r, &mp)).chain(negatives.iter().map(|r| (r, &mn))).enumerate() {
        for j in 0..d {
            centered[(i, j)] = r[j] - m[j];
        }
    }
    let delta = DVector::from_iterator(d, mp.iter().zip(&mn).map(|(a, b)| a - b));
    let trace = centered.iter().map(|v| v * v).sum::<f64>() / dof;
    let nu = trace / d as f64;
    let mu = shrinkage * nu;
    let c = (1.0 - shrinkage) / dof;

    let w: DVector<f64> = if shrinkage == 0.0 {
        if n < d + 2 {
            return Err(singular());
        }
        solve_spd(centered.transpose() * &centered * c, &delta)?
    } else if !(mu > 0.0) {
        return Err(singular());
    } else if c == 0.0 {
        &delta / mu
    } else if n < d {
        // (mu I + c X'X)^-1 = (1/mu) (I - X' (mu/c I + X X')^-1 X)
        let mut gram = &centered * centered.transpose();
        for i in 0..n {
            gram[(i, i)] += mu / c;
        }
        let xd = &centered * &delta;
        let inner = solve_spd(gram, &xd)?;
        (&delta - centered.transpose() * inner) / mu
    } else {
        let mut s = centered.transpose() * &centered * c;
        for i in 0..d {
            s[(i, i)] += mu;
        }
        solve_spd(s, &delta)?
    };
    let mid: Vec<f64> = mp.iter().zip(&mn).map(|(a, b)| 0.5 * (a + b)).collect();
    let bias = -w.iter().zip(&mid).map(|(a, b)| a * b).sum::<f64>();
    let weights: Vec<f64> = w.iter().copied().collect();
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(Lda { weights, bias, shrinkage })
}

fn solve_spd(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let max_diag = m.diagonal().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let chol = m.cholesky().ok_or_else(singular)?;
    let l = chol.l_dirty();
    let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |a, b| a.min(b * b));
    if !(min_pivot > 1e-12 * max_diag) {
        return Err(singular());
    }
    Ok(chol.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|r| r.as_slice()).collect()
    }

    fn gauss(rng: &mut ChaCha8Rng, k: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).map(|x: f64| x + shift).collect())
            .collect()
    }

    #[test]
    fn isotropic_matches_nearest_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pos = gauss(&mut rng, 30, 4, 0.7);
        let neg = gauss(&mut rng, 30, 4, -0.7);
        let m = train_lda(&rows(&pos), &rows(&neg), 1.0).unwrap();
        let mp = mean_of(&rows(&pos), 4);
        let mn = mean_of(&rows(&neg), 4);
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let probes = gauss(&mut rng, 200, 4, 0.0);
        for p in &probes {
            let nearest_pos = dist(p, &mp) < dist(p, &mn);
            assert_eq!(m.score(p).unwrap() > 0.0, nearest_pos);
        }
    }

    #[test]
    fn isotropic_ranking_matches_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pos = gauss(&mut rng, 20, 3, 0.5);
        let neg = gauss(&mut rng, 20, 3, -0.5);
        let m = train_lda(&rows(&pos), &rows(&neg), 1.0).unwrap();
        let mp = mean_of(&rows(&pos), 3);
        let mn = mean_of(&rows(&neg), 3);
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let probes = gauss(&mut rng, 100, 3, 0.0);
        let lda: Vec<f64> = probes.iter().map(|p| m.score(p).unwrap()).collect();
        let euc: Vec<f64> = probes.iter().map(|p| dist(p, &mn) - dist(p, &mp)).collect();
        for i in 0..probes.len() {
            for j in 0..probes.len() {
                if (euc[i] - euc[j]).abs() > 1e-9 {
                    assert_eq!(lda[i] > lda[j], euc[i] > euc[j]);
                }
            }
        }
    }

    #[test]
    fn direction_of_spherical_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut draw = |mx: f64| -> Vec<Vec<f64>> {
            (0..1000)
                .map(|_| {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    vec![a + mx, b]
                })
                .collect()
        };
        let pos = draw(1.0);
        let neg = draw(-1.0);
        let m = train_lda(&rows(&pos), &rows(&neg), DEFAULT_SHRINKAGE).unwrap();
        let angle = m.weights[1].atan2(m.weights[0]).to_degrees();
        assert!(angle.abs() < 5.0, "{angle}");
    }

    #[test]
    fn single_positive_without_shrinkage_is_singular() {
        let pos = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0]];
        let neg = vec![vec![0.0, 1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0, 0.0]];
        let err = train_lda(&rows(&pos), &rows(&neg), 0.0).unwrap_err();
        assert!(err.to_string().contains("singular"));
    }

    #[test]
    fn woodbury_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 40;
        let pos = gauss(&mut rng, 6, d, 0.5);
        let neg = gauss(&mut rng, 8, d, -0.5);
        let fast = train_lda(&rows(&pos), &rows(&neg), 0.3).unwrap();

        // dense reference
        let mp = mean_of(&rows(&pos), d);
        let mn = mean_of(&rows(&neg), d);
        let mut s = DMatrix::<f64>::zeros(d, d);
        for (r, m) in pos.iter().map(|r| (r, &mp)).chain(neg.iter().map(|r| (r, &mn))) {
            let v = DVector::from_iterator(d, r.iter().zip(m.iter()).map(|(a, b)| a - b));
            s += &v * v.transpose();
        }
        s /= (pos.len() + neg.len() - 2) as f64;
        let nu = s.trace() / d as f64;
        let s = s * 0.7 + DMatrix::identity(d, d) * (0.3 * nu);
        let delta = DVector::from_iterator(d, mp.iter().zip(&mn).map(|(a, b)| a - b));
        let w = s.lu().solve(&delta).unwrap();
        for (a, b) in fast.weights.iter().zip(w.iter()) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn separates_shifted_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos = gauss(&mut rng, 50, 3, 2.0);
        let neg = gauss(&mut rng, 50, 3, -2.0);
        let m = train_lda(&rows(&pos), &rows(&neg), DEFAULT_SHRINKAGE).unwrap();
        let correct = pos.iter().filter(|p| m.score(p).unwrap() > 0.0).count()
            + neg.iter().filter(|p| m.score(p).unwrap() < 0.0).count();
        assert!(correct >= 95);
    }

    #[test]
    fn bad_shrinkage_rejected() {
        let p = vec![vec![1.0]];
        assert!(train_lda(&rows(&p), &rows(&p), 1.5).is_err());
    }
}
