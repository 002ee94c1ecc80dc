//! ROC curves, EER and FRR at fixed FAR.
//!
//! A trial is accepted when its score is `>=` the threshold.

mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use report::{
    aligned, pct, pct_stat, read_report, write_json, summarize, write_curve_csv, write_report, EvalReport, FarTarget, RateSummary, ReportTable, Stat,
    SubjectRow, FAR_TARGETS,
};

/// Rates at every distinct score plus the two infinite sentinels.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Descending, starting at +inf and ending at -inf.
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

fn check_scores(scores: &[f64], which: &'static str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty(which));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical(format!("NaN among {which} scores")));
    }
    Ok(())
}

fn sorted_desc(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

pub fn roc_curve(genuine: &[f64], impostor: &[f64]) -> Result<RocCurve> {
    check_scores(genuine, "genuine")?;
    check_scores(impostor, "impostor")?;
    let g = sorted_desc(genuine);
    let im = sorted_desc(impostor);
    let (ng, ni) = (g.len(), im.len());

    let mut thresholds = vec![f64::INFINITY];
    let mut far = vec![0.0];
    let mut frr = vec![1.0];
    // accepted counts so far
    let (mut gi, mut ii) = (0usize, 0usize);
    loop {
        let next = match (g.get(gi), im.get(ii)) {
            (Some(a), Some(b)) => a.max(*b),
            (Some(a), None) => *a,
            (None, Some(b)) => *b,
            (None, None) => break,
        };
        while gi < ng && g[gi] >= next {
            gi += 1;
        }
        while ii < ni && im[ii] >= next {
            ii += 1;
        }
        if next == f64::INFINITY {
            // scores at +inf are accepted by the sentinel itself
            far[0] = ii as f64 / ni as f64;
            frr[0] = (ng - gi) as f64 / ng as f64;
            continue;
        }
        thresholds.push(next);
        far.push(ii as f64 / ni as f64);
        frr.push((ng - gi) as f64 / ng as f64);
    }
    if *thresholds.last().unwrap() != f64::NEG_INFINITY {
        thresholds.push(f64::NEG_INFINITY);
        far.push(1.0);
        frr.push(0.0);
    }
    Ok(RocCurve { thresholds, far, frr, n_genuine: ng, n_impostor: ni })
}

/// Interpolated crossing of a FAR/FRR sequence ordered by decreasing threshold.
pub(crate) fn crossing(far: &[f64], frr: &[f64]) -> f64 {
    for i in 0..far.len() {
        let d = far[i] - frr[i];
        if d == 0.0 {
            return far[i];
        }
        if d > 0.0 {
            if i == 0 {
                return 0.5 * (far[0] + frr[0]);
            }
            let dp = far[i - 1] - frr[i - 1];
            let alpha = -dp / (d - dp);
            let v = far[i - 1] + alpha * (far[i] - far[i - 1]);
            return v.clamp(0.0, 1.0);
        }
    }
    // unreachable for a complete curve: the last point has FAR 1, FRR 0
    let last = far.len() - 1;
    0.5 * (far[last] + frr[last])
}

/// Equal error rate by linear interpolation at the FAR/FRR sign change.
pub fn compute_eer(roc: &RocCurve) -> f64 {
    crossing(&roc.far, &roc.frr)
}

fn index_at_far(roc: &RocCurve, far_target: f64) -> usize {
    let limit = far_target + 1e-12;
    roc.far.iter().take_while(|f| **f <= limit).count().max(1) - 1
}

/// FRR at the most permissive threshold whose FAR stays within `far_target`.
pub fn frr_at_far(roc: &RocCurve, far_target: f64) -> f64 {
    roc.frr[index_at_far(roc, far_target)]
}

/// The most permissive threshold whose FAR stays within `far_target`.
pub fn threshold_at_far(roc: &RocCurve, far_target: f64) -> f64 {
    roc.thresholds[index_at_far(roc, far_target)]
}

/// One scored trial as seen by the metrics layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub claimed: String,
    pub genuine: bool,
    pub score: f64,
}

/// Genuine and impostor scores grouped by claimed subject.
pub fn split_by_subject(trials: &[ScoredTrial]) -> BTreeMap<&str, (Vec<f64>, Vec<f64>)> {
    let mut out: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for t in trials {
        let e = out.entry(t.claimed.as_str()).or_default();
        if t.genuine {
            e.0.push(t.score);
        } else {
            e.1.push(t.score);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerSubjectEer {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub table: Vec<(String, f64)>,
    /// Subjects without at least one genuine and one impostor trial.
    pub excluded: Vec<String>,
}

pub fn per_subject_eer(trials: &[ScoredTrial]) -> Result<PerSubjectEer> {
    let mut table = Vec::new();
    let mut excluded = Vec::new();
    for (subject, (g, i)) in split_by_subject(trials) {
        if g.is_empty() || i.is_empty() {
            excluded.push(subject.to_owned());
            continue;
        }
        table.push((subject.to_owned(), compute_eer(&roc_curve(&g, &i)?)));
    }
    if table.is_empty() {
        return Err(Error::Empty("per-subject trial"));
    }
    let values: Vec<f64> = table.iter().map(|(_, e)| *e).collect();
    let (mean, std) = mean_std(&values);
    Ok(PerSubjectEer { mean, std, table, excluded })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eer(g: &[f64], i: &[f64]) -> f64 {
        compute_eer(&roc_curve(g, i).unwrap())
    }

    #[test]
    fn separated_sets() {
        let roc = roc_curve(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert!(roc.far.iter().zip(&roc.frr).any(|(a, b)| *a == 0.0 && *b == 0.0));
        assert_eq!(eer(&[0.9, 0.8, 0.7], &[0.1, 0.2, 0.3]), 0.0);
    }

    #[test]
    fn tie_accepts_on_equal() {
        let roc = roc_curve(&[0.5], &[0.5]).unwrap();
        let k = roc.thresholds.iter().position(|t| *t == 0.5).unwrap();
        assert_eq!((roc.far[k], roc.frr[k]), (1.0, 0.0));
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&[0.5, 0.5], &[0.5, 0.5]), 0.5);
        assert!((eer(&[0.8, 0.6, 0.4], &[0.5, 0.3, 0.1]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn curve_endpoints_and_monotonicity() {
        let roc = roc_curve(&[0.3, 0.1, 0.7], &[0.2, 0.9, 0.1]).unwrap();
        assert_eq!((roc.far[0], roc.frr[0]), (0.0, 1.0));
        assert_eq!((*roc.far.last().unwrap(), *roc.frr.last().unwrap()), (1.0, 0.0));
        assert!(roc.far.windows(2).all(|w| w[0] <= w[1]));
        assert!(roc.frr.windows(2).all(|w| w[0] >= w[1]));
        assert!(roc.thresholds.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn infinite_scores_are_handled() {
        let roc = roc_curve(&[f64::INFINITY, 1.0], &[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(compute_eer(&roc), 0.0);
        assert_eq!((roc.far[0], roc.frr[0]), (0.0, 0.5));
    }

    #[test]
    fn empty_set_is_named() {
        let e = roc_curve(&[], &[1.0]).unwrap_err().to_string();
        assert!(e.contains("genuine"));
        let e = roc_curve(&[1.0], &[]).unwrap_err().to_string();
        assert!(e.contains("impostor"));
    }

    #[test]
    fn identical_distributions_are_complementary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g: Vec<f64> = (0..4000).map(|_| rng.gen()).collect();
        let i: Vec<f64> = (0..4000).map(|_| rng.gen()).collect();
        let roc = roc_curve(&g, &i).unwrap();
        for (a, b) in roc.far.iter().zip(&roc.frr) {
            assert!((a + b - 1.0).abs() < 0.05);
        }
        for t in [0.01, 0.001, 0.0001] {
            assert!(frr_at_far(&roc, t) >= 1.0 - t - 0.03);
        }
    }

    #[test]
    fn frr_at_far_constructed_counts() {
        // 1000 impostors, exactly 10 at or above t0 = 5.0
        let mut imp: Vec<f64> = (0..990).map(|k| k as f64 / 1000.0).collect();
        imp.extend((0..10).map(|k| 5.0 + k as f64));
        let gen: Vec<f64> = vec![6.5, -1.0, -2.0, 5.0];
        let roc = roc_curve(&gen, &imp).unwrap();
        let k = roc.thresholds.iter().position(|t| *t == 5.0).unwrap();
        assert_eq!(roc.far[k], 0.01);
        assert_eq!(frr_at_far(&roc, 0.01), roc.frr[k]);
        assert_eq!(frr_at_far(&roc, 0.01), 0.5);
        assert_eq!(threshold_at_far(&roc, 0.01), 5.0);
        // one false accept is allowed at 0.1%, which needs t = 14
        assert_eq!(frr_at_far(&roc, 0.001), 1.0);
    }

    #[test]
    fn frr_at_far_separated() {
        let roc = roc_curve(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        for t in [0.01, 0.001, 0.0001] {
            assert_eq!(frr_at_far(&roc, t), 0.0);
        }
    }

    fn split(trials: &[(&str, bool, f64)]) -> Vec<ScoredTrial> {
        trials.iter().map(|(c, g, s)| ScoredTrial { claimed: c.to_string(), genuine: *g, score: *s }).collect()
    }

    #[test]
    fn per_subject_examples() {
        let sep = split(&[("A", true, 1.0), ("A", false, 0.0), ("B", true, 1.0), ("B", false, 0.0)]);
        let r = per_subject_eer(&sep).unwrap();
        assert_eq!((r.mean, r.std), (0.0, 0.0));

        let mixed = split(&[("A", true, 1.0), ("A", false, 0.0), ("B", true, 0.5), ("B", false, 0.5)]);
        let r = per_subject_eer(&mixed).unwrap();
        assert_eq!((r.mean, r.std), (0.25, 0.25));

        let lone = split(&[("A", true, 1.0), ("A", false, 0.0), ("C", true, 0.3)]);
        let r = per_subject_eer(&lone).unwrap();
        assert_eq!(r.excluded, vec!["C".to_string()]);
        assert_eq!(r.table.len(), 1);
    }

    fn random_set(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let ng = rng.gen_range(5..=500);
        let ni = rng.gen_range(5..=500);
        let shift: f64 = rng.gen_range(0.0..3.0);
        // coarse rounding on some sets produces ties
        let q = if rng.gen_bool(0.3) { 10.0 } else { 1e9 };
        let g = (0..ng).map(|_| ((rng.gen::<f64>() * 2.0 + shift) * q).round() / q).collect();
        let i = (0..ni).map(|_| ((rng.gen::<f64>() * 2.0) * q).round() / q).collect();
        (g, i)
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (g, i) = random_set(&mut rng);
            assert!((eer(&g, &i) - oracle::eer(&g, &i)).abs() <= 1e-9);
        }
    }

    #[test]
    fn label_swap_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let g: Vec<f64> = (0..rng.gen_range(5..100)).map(|_| rng.gen::<f64>() + 0.3).collect();
            let i: Vec<f64> = (0..rng.gen_range(5..100)).map(|_| rng.gen::<f64>()).collect();
            let e = eer(&g, &i);
            // swapping labels under the same score convention reflects the crossing
            assert!((eer(&i, &g) - (1.0 - e)).abs() < 1e-12);
            // swapping labels and reversing the score convention keeps it
            let ng: Vec<f64> = g.iter().map(|s| -s).collect();
            let ni: Vec<f64> = i.iter().map(|s| -s).collect();
            assert!((eer(&ni, &ng) - e).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(
            g in proptest::collection::vec(-5.0f64..5.0, 1..60),
            i in proptest::collection::vec(-5.0f64..5.0, 1..60),
            a in 0.1f64..3.0,
            b in -2.0f64..2.0,
        ) {
            let f = |x: &f64| (a * x + b).exp() + x * 1e-3;
            let g2: Vec<f64> = g.iter().map(f).collect();
            let i2: Vec<f64> = i.iter().map(f).collect();
            prop_assert_eq!(eer(&g, &i), eer(&g2, &i2));
        }

        #[test]
        fn frr_at_far_is_monotone(
            g in proptest::collection::vec(-5.0f64..5.0, 1..300),
            i in proptest::collection::vec(-5.0f64..5.0, 1..300),
        ) {
            let roc = roc_curve(&g, &i).unwrap();
            let (a, b, c) = (frr_at_far(&roc, 1e-4), frr_at_far(&roc, 1e-3), frr_at_far(&roc, 1e-2));
            prop_assert!(a >= b && b >= c);
            let e = compute_eer(&roc);
            prop_assert!((0.0..=1.0).contains(&e));
        }
    }
}
