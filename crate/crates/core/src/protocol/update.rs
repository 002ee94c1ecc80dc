use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_scorers, generate_trials, score_trials, validate_bins, FeatureSet, IntervalBin, Split, TrialSet};
use crate::matching::{augment_template, score_distance, ScorerConfig, ScorerKind, SubjectScorer, Template};
use crate::metrics::{compute_eer, roc_curve, threshold_at_far};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Threshold at this FAR on the calibration cohort.
    FarTarget(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateBinRow {
    pub label: String,
    pub lo: i64,
    pub hi: i64,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub far_before: Option<f64>,
    pub frr_before: Option<f64>,
    pub far_after: Option<f64>,
    pub frr_after: Option<f64>,
    pub eer_before: Option<f64>,
    pub eer_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub policy: ThresholdPolicy,
    pub threshold: f64,
    pub cap: Option<usize>,
    pub calibration_subjects: Vec<String>,
    pub evaluation_subjects: Vec<String>,
    /// Genuine accepts that augmented a template.
    pub n_updates: usize,
    /// Impostor accepts during replay; these never augment.
    pub n_impostor_accepts: usize,
    pub overall: UpdateBinRow,
    pub bins: Vec<UpdateBinRow>,
}

fn rates(
    label: &str,
    lo: i64,
    hi: i64,
    members: &[usize],
    ts: &TrialSet,
    before: &[f64],
    after: &[f64],
    threshold: f64,
) -> Result<UpdateBinRow> {
    let split = |scores: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut g = Vec::new();
        let mut i = Vec::new();
        for &k in members {
            if ts.trials[k].genuine {
                g.push(scores[k]);
            } else {
                i.push(scores[k]);
            }
        }
        (g, i)
    };
    let frac = |v: &[f64], accept: bool| -> Option<f64> {
        (!v.is_empty()).then(|| v.iter().filter(|s| (**s >= threshold) == accept).count() as f64 / v.len() as f64)
    };
    let eer = |g: &[f64], i: &[f64]| -> Result<Option<f64>> {
        if g.is_empty() || i.is_empty() {
            return Ok(None);
        }
        Ok(Some(compute_eer(&roc_curve(g, i)?)))
    };
    let (gb, ib) = split(before);
    let (ga, ia) = split(after);
    Ok(UpdateBinRow {
        label: label.to_owned(),
        lo,
        hi,
        n_genuine: gb.len(),
        n_impostor: ib.len(),
        far_before: frac(&ib, true),
        frr_before: frac(&gb, false),
        far_after: frac(&ia, true),
        frr_after: frac(&ga, false),
        eer_before: eer(&gb, &ib)?,
        eer_after: eer(&ga, &ia)?,
    })
}

/// Replay verification probes in date order, adding accepted genuine probe
/// epochs to the claimed subject's template, and compare per-bin error
/// rates with the static-template baseline.
///
/// `cap` bounds the template size (FIFO); `None` keeps each subject's
/// initial enrollment size. Only distance scorers are supported.
#[allow(clippy::too_many_arguments)]
pub fn simulate_enrollment_update(
    features: &FeatureSet,
    split: &Split,
    calibration: &[String],
    policy: ThresholdPolicy,
    cap: Option<usize>,
    scorer: &ScorerConfig,
    n: usize,
    bins: &[IntervalBin],
) -> Result<UpdateReport> {
    if scorer.kind != ScorerKind::Distance {
        return Err(Error::config("enrollment update simulation supports distance scorers only"));
    }
    if cap == Some(0) {
        return Err(Error::config("template cap must be >= 1"));
    }
    validate_bins(bins)?;
    let cal: BTreeSet<String> =
        calibration.iter().filter(|s| split.subjects.iter().any(|x| &x.subject == *s)).cloned().collect();
    let threshold = match policy {
        ThresholdPolicy::Fixed(t) => t,
        ThresholdPolicy::FarTarget(target) => {
            if !(0.0..=1.0).contains(&target) {
                return Err(Error::config("FAR target must be in [0, 1]"));
            }
            if cal.is_empty() {
                return Err(Error::Empty("calibration cohort"));
            }
            if cal.len() < 2 {
                return Err(Error::config("calibration cohort needs at least 2 subjects"));
            }
            let cal_split = split.restrict(&cal);
            let ts = generate_trials(features, &cal_split, n)?;
            let scorers = build_scorers(features, &cal_split, scorer)?;
            let scores = score_trials(&ts, features, &scorers, scorer.probe_rule)?;
            let (g, i): (Vec<(f64, bool)>, Vec<(f64, bool)>) =
                scores.iter().zip(&ts.trials).map(|(s, t)| (*s, t.genuine)).partition(|(_, g)| *g);
            let g: Vec<f64> = g.into_iter().map(|x| x.0).collect();
            let i: Vec<f64> = i.into_iter().map(|x| x.0).collect();
            threshold_at_far(&roc_curve(&g, &i)?, target)
        }
    };

    let eval: BTreeSet<String> =
        split.subjects.iter().map(|s| s.subject.clone()).filter(|s| !cal.contains(s)).collect();
    if eval.is_empty() {
        return Err(Error::Empty("evaluation cohort"));
    }
    let eval_split = split.restrict(&eval);
    let ts = generate_trials(features, &eval_split, n)?;
    let scorers = build_scorers(features, &eval_split, scorer)?;
    let before = score_trials(&ts, features, &scorers, scorer.probe_rule)?;

    // each claimed subject's template evolves independently
    let per_subject: Vec<(Vec<(usize, f64)>, usize, usize)> = scorers
        .par_iter()
        .enumerate()
        .map(|(c, sc)| -> Result<_> {
            let SubjectScorer::Distance { template, rule } = sc else { unreachable!("distance kind checked") };
            let limit = cap.unwrap_or(template.enrollment.len());
            let mut t: Template = template.clone();
            let mut order: Vec<usize> = (0..ts.trials.len()).filter(|k| ts.trials[*k].claimed == c).collect();
            order.sort_by_key(|k| (ts.probes[ts.trials[*k].probe].meta.date, ts.trials[*k].probe));
            let mut out = Vec::with_capacity(order.len());
            let (mut updates, mut imp_accepts) = (0, 0);
            for k in order {
                let trial = ts.trials[k];
                let p = &ts.probes[trial.probe];
                let members = ts.probe_members(features, p);
                let s = match scorer.probe_rule {
                    crate::matching::ProbeRule::MeanEmbedding => score_distance(&p.mean, &t, *rule)?,
                    crate::matching::ProbeRule::MeanScore => {
                        let mut total = 0.0;
                        for m in members {
                            total += score_distance(&m.vec, &t, *rule)?;
                        }
                        total / members.len() as f64
                    }
                };
                out.push((k, s));
                if s >= threshold {
                    if trial.genuine {
                        t = augment_template(&t, members, limit)?;
                        updates += 1;
                    } else {
                        imp_accepts += 1;
                    }
                }
            }
            Ok((out, updates, imp_accepts))
        })
        .collect::<Result<_>>()?;
    let mut after = vec![f64::NAN; ts.trials.len()];
    let (mut n_updates, mut n_impostor_accepts) = (0, 0);
    for (scores, u, ia) in per_subject {
        for (k, s) in scores {
            after[k] = s;
        }
        n_updates += u;
        n_impostor_accepts += ia;
    }

    let all: Vec<usize> = (0..ts.trials.len()).collect();
    let overall = rates("all", i64::MIN, i64::MAX, &all, &ts, &before, &after, threshold)?;
    let mut rows = Vec::with_capacity(bins.len());
    for b in bins {
        let members: Vec<usize> = all.iter().copied().filter(|k| b.contains(ts.trials[*k].delta_days)).collect();
        rows.push(rates(&b.label, b.lo, b.hi, &members, &ts, &before, &after, threshold)?);
    }
    Ok(UpdateReport {
        policy,
        threshold,
        cap,
        calibration_subjects: cal.into_iter().collect(),
        evaluation_subjects: eval.into_iter().collect(),
        n_updates,
        n_impostor_accepts,
        overall,
        bins: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::*;
    use super::*;

    fn corpus() -> FeatureSet {
        feature_set(&[
            ("A", "e", 0, "d", 3),
            ("A", "v1", 3, "d", 2),
            ("A", "v2", 12, "d", 2),
            ("B", "e", 0, "d", 3),
            ("B", "v1", 5, "d", 2),
            ("C", "e", 0, "d", 3),
            ("C", "v1", 9, "d", 2),
        ])
    }

    fn run(policy: ThresholdPolicy, cal: &[&str]) -> Result<UpdateReport> {
        let fs = corpus();
        let split = split_enroll_verify(&fs.metas(), &ProtocolConfig::default()).unwrap();
        let cal: Vec<String> = cal.iter().map(|s| s.to_string()).collect();
        simulate_enrollment_update(&fs, &split, &cal, policy, None, &ScorerConfig::default(), 1, &default_bins())
    }

    #[test]
    fn rejecting_threshold_matches_baseline() {
        let r = run(ThresholdPolicy::Fixed(f64::INFINITY), &[]).unwrap();
        assert_eq!(r.n_updates, 0);
        assert_eq!(r.overall.far_before, r.overall.far_after);
        assert_eq!(r.overall.eer_before, r.overall.eer_after);
        for b in &r.bins {
            assert_eq!((b.far_before, b.frr_before, b.eer_before), (b.far_after, b.frr_after, b.eer_after));
        }
    }

    #[test]
    fn accepting_threshold_updates_genuine_only() {
        let r = run(ThresholdPolicy::Fixed(f64::NEG_INFINITY), &[]).unwrap();
        assert_eq!(r.n_updates, 8);
        assert_eq!(r.n_impostor_accepts, r.overall.n_impostor);
    }

    #[test]
    fn empty_calibration_cohort_is_error() {
        assert!(run(ThresholdPolicy::FarTarget(0.01), &[]).is_err());
        assert!(run(ThresholdPolicy::FarTarget(0.01), &["A"]).is_err());
        let r = run(ThresholdPolicy::FarTarget(0.0), &["A", "B"]).unwrap();
        assert_eq!(r.calibration_subjects, vec!["A".to_string(), "B".to_string()]);
        assert_eq!(r.evaluation_subjects, vec!["C".to_string()]);
    }

    #[test]
    fn classifier_scorer_rejected() {
        let fs = corpus();
        let split = split_enroll_verify(&fs.metas(), &ProtocolConfig::default()).unwrap();
        let cfg = ScorerConfig { kind: ScorerKind::Logreg, ..Default::default() };
        let e = simulate_enrollment_update(&fs, &split, &[], ThresholdPolicy::Fixed(0.0), None, &cfg, 1, &default_bins());
        assert!(e.unwrap_err().is_validation());
    }
}
