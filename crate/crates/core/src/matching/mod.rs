//! Enrollment templates and similarity scorers.
//!
//! Every scorer returns a similarity: higher means more likely genuine.

mod lda;
mod logreg;

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::features::{check_uniform, FeatureVector};
use crate::{Error, Result};

pub use lda::{train_lda, Lda, DEFAULT_SHRINKAGE};
pub use logreg::{train_logreg, LogReg, LogRegConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
    Manhattan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateRule {
    /// Distance from the probe to the template centroid.
    Centroid,
    /// Mean distance from the probe to every enrollment vector.
    MeanPairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeRule {
    /// Average the n epoch vectors, then score once.
    MeanEmbedding,
    /// Score each epoch vector and average the scores.
    MeanScore,
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(v: &[f64]) -> Result<Vec<f64>> {
    let n = l2_norm(v);
    if !(n > 0.0) {
        return Err(Error::Numerical("zero-norm vector under cosine metric".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Distance between two vectors under `metric`.
pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: b.len(), got: a.len() });
    }
    Ok(match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Metric::Cosine => {
            let (na, nb) = (l2_norm(a), l2_norm(b));
            if !(na > 0.0 && nb > 0.0) {
                return Err(Error::Numerical("zero-norm vector under cosine metric".into()));
            }
            let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
            1.0 - cos.clamp(-1.0, 1.0)
        }
    })
}

/// A subject's enrollment representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub subject_id: String,
    /// Oldest first.
    pub enrollment: VecDeque<FeatureVector>,
    pub centroid: Vec<f64>,
    pub metric: Metric,
    pub feature_id: Arc<str>,
}

fn centroid_of<'a>(metric: Metric, vectors: impl ExactSizeIterator<Item = &'a FeatureVector>) -> Result<Vec<f64>> {
    let n = vectors.len() as f64;
    let mut acc: Vec<f64> = Vec::new();
    for v in vectors {
        let owned;
        let x: &[f64] = if metric == Metric::Cosine {
            owned = normalized(&v.vec)?;
            &owned
        } else {
            &v.vec
        };
        if acc.is_empty() {
            acc = vec![0.0; x.len()];
        }
        for (a, b) in acc.iter_mut().zip(x) {
            *a += b;
        }
    }
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(acc)
}

/// Build a template from enrollment vectors.
pub fn build_template(subject_id: &str, vectors: &[FeatureVector], metric: Metric) -> Result<Template> {
    let (feature_id, _) = check_uniform(vectors)?.ok_or(Error::Empty("enrollment"))?;
    let enrollment: VecDeque<FeatureVector> = vectors.iter().cloned().collect();
    let centroid = centroid_of(metric, enrollment.iter())?;
    Ok(Template { subject_id: subject_id.to_owned(), enrollment, centroid, metric, feature_id })
}

/// Append vectors, keep only the newest `cap`, recompute the centroid.
pub fn augment_template(t: &Template, new_vectors: &[FeatureVector], cap: usize) -> Result<Template> {
    if cap == 0 {
        return Err(Error::config("template cap must be >= 1"));
    }
    let dim = t.centroid.len();
    for v in new_vectors {
        if v.feature_id != t.feature_id {
            return Err(Error::FeatureId { expected: t.feature_id.to_string(), got: v.feature_id.to_string() });
        }
        if v.dim() != dim {
            return Err(Error::Dimension { expected: dim, got: v.dim() });
        }
    }
    let mut enrollment = t.enrollment.clone();
    enrollment.extend(new_vectors.iter().cloned());
    while enrollment.len() > cap {
        enrollment.pop_front();
    }
    let centroid = centroid_of(t.metric, enrollment.iter())?;
    Ok(Template { enrollment, centroid, ..t.clone() })
}

/// Mean of the first `n` vectors; `None` when fewer than `n` are available.
pub fn average_probe(vectors: &[FeatureVector], n: usize) -> Option<FeatureVector> {
    if n == 0 || vectors.len() < n {
        return None;
    }
    let mut out = vectors[0].clone();
    if n == 1 {
        return Some(out);
    }
    for v in &vectors[1..n] {
        for (a, b) in out.vec.iter_mut().zip(&v.vec) {
            *a += b;
        }
    }
    for a in out.vec.iter_mut() {
        *a /= n as f64;
    }
    Some(out)
}

/// Similarity of a probe vector to a template: the negated distance.
pub fn score_distance(probe: &[f64], t: &Template, rule: TemplateRule) -> Result<f64> {
    if probe.len() != t.centroid.len() {
        return Err(Error::Dimension { expected: t.centroid.len(), got: probe.len() });
    }
    match rule {
        TemplateRule::Centroid => Ok(-distance(t.metric, probe, &t.centroid)?),
        TemplateRule::MeanPairwise => {
            let mut total = 0.0;
            for e in &t.enrollment {
                total += distance(t.metric, probe, &e.vec)?;
            }
            Ok(-total / t.enrollment.len() as f64)
        }
    }
}

/// Trained two-class scorer, serializable for reuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Logreg(LogReg),
    Lda(Lda),
}

impl Classifier {
    pub fn score(&self, probe: &[f64]) -> Result<f64> {
        match self {
            Classifier::Logreg(m) => m.score(probe),
            Classifier::Lda(m) => m.score(probe),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("classifier serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema { path: path.to_owned(), msg: e.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Distance,
    Logreg,
    Lda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub metric: Metric,
    pub template_rule: TemplateRule,
    pub probe_rule: ProbeRule,
    pub logreg: LogRegConfig,
    pub lda_shrinkage: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            kind: ScorerKind::Distance,
            metric: Metric::Cosine,
            template_rule: TemplateRule::Centroid,
            probe_rule: ProbeRule::MeanEmbedding,
            logreg: LogRegConfig::default(),
            lda_shrinkage: DEFAULT_SHRINKAGE,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lda_shrinkage) {
            return Err(Error::config("lda_shrinkage must be in [0, 1]"));
        }
        if !(self.logreg.l2_penalty >= 0.0) || self.logreg.max_iters == 0 || !(self.logreg.tol >= 0.0) {
            return Err(Error::config("logreg needs l2_penalty >= 0, max_iters >= 1, tol >= 0"));
        }
        Ok(())
    }
}

/// Scores probes for one claimed subject.
#[derive(Debug, Clone)]
pub enum SubjectScorer {
    Distance { template: Template, rule: TemplateRule },
    Classifier { subject_id: String, feature_id: Arc<str>, model: Classifier },
}

impl SubjectScorer {
    /// `negatives` is only used by classifier kinds and must not contain
    /// evaluation subjects.
    pub fn build(subject_id: &str, enrollment: &[FeatureVector], negatives: &[&[f64]], cfg: &ScorerConfig) -> Result<Self> {
        let template = build_template(subject_id, enrollment, cfg.metric)?;
        let positives: Vec<&[f64]> = enrollment.iter().map(|v| v.vec.as_slice()).collect();
        let model = match cfg.kind {
            ScorerKind::Distance => return Ok(SubjectScorer::Distance { template, rule: cfg.template_rule }),
            ScorerKind::Logreg => Classifier::Logreg(train_logreg(&positives, negatives, &cfg.logreg)?),
            ScorerKind::Lda => Classifier::Lda(train_lda(&positives, negatives, cfg.lda_shrinkage)?),
        };
        Ok(SubjectScorer::Classifier { subject_id: subject_id.to_owned(), feature_id: template.feature_id, model })
    }

    pub fn feature_id(&self) -> &Arc<str> {
        match self {
            SubjectScorer::Distance { template, .. } => &template.feature_id,
            SubjectScorer::Classifier { feature_id, .. } => feature_id,
        }
    }

    pub fn score(&self, probe: &[f64]) -> Result<f64> {
        match self {
            SubjectScorer::Distance { template, rule } => score_distance(probe, template, *rule),
            SubjectScorer::Classifier { model, .. } => model.score(probe),
        }
    }

    /// Score a multi-epoch probe under `rule`; `mean` is the averaged vector.
    pub fn score_probe(&self, mean: &[f64], members: &[FeatureVector], rule: ProbeRule) -> Result<f64> {
        match rule {
            ProbeRule::MeanEmbedding => self.score(mean),
            ProbeRule::MeanScore => {
                let mut total = 0.0;
                for m in members {
                    total += self.score(&m.vec)?;
                }
                Ok(total / members.len() as f64)
            }
        }
    }
}

pub(crate) fn check_training(positives: &[&[f64]], negatives: &[&[f64]]) -> Result<usize> {
    if positives.is_empty() {
        return Err(Error::Empty("positive"));
    }
    if negatives.is_empty() {
        return Err(Error::Empty("negative"));
    }
    let d = positives[0].len();
    if d == 0 {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    if let Some(v) = positives.iter().chain(negatives).find(|v| v.len() != d) {
        return Err(Error::Dimension { expected: d, got: v.len() });
    }
    if let Some(v) = positives.iter().chain(negatives).find(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numerical(format!("non-finite training vector of length {}", v.len())));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SessionMeta;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        let m = SessionMeta::new("S1", "a", "d", NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()).unwrap();
        FeatureVector { meta: Arc::new(m), epoch_index: 0, vec: v.to_vec(), feature_id: "f".into() }
    }

    #[test]
    fn single_vector_centroid() {
        let t = build_template("S1", &[fv(&[1.0, -2.0])], Metric::Euclidean).unwrap();
        assert_eq!(t.centroid, vec![1.0, -2.0]);
    }

    #[test]
    fn two_vector_centroid() {
        let t = build_template("S1", &[fv(&[0.0, 0.0]), fv(&[2.0, 2.0])], Metric::Euclidean).unwrap();
        assert_eq!(t.centroid, vec![1.0, 1.0]);
    }

    #[test]
    fn cosine_centroid_uses_unit_vectors() {
        let t = build_template("S1", &[fv(&[10.0, 0.0]), fv(&[0.0, 2.0])], Metric::Cosine).unwrap();
        assert_eq!(t.centroid, vec![0.5, 0.5]);
    }

    #[test]
    fn mixed_feature_id_rejected() {
        let mut b = fv(&[1.0, 1.0]);
        b.feature_id = "g".into();
        assert!(build_template("S1", &[fv(&[0.0, 0.0]), b], Metric::Euclidean).is_err());
        assert!(build_template("S1", &[], Metric::Euclidean).is_err());
    }

    #[test]
    fn augment_same_vector_keeps_centroid() {
        let t = build_template("S1", &[fv(&[3.0, 1.0])], Metric::Euclidean).unwrap();
        let t2 = augment_template(&t, &[fv(&[3.0, 1.0])], 10).unwrap();
        assert_eq!(t2.centroid, vec![3.0, 1.0]);
        assert_eq!(t2.enrollment.len(), 2);
    }

    #[test]
    fn augment_is_fifo_capped() {
        let t = build_template("S1", &[fv(&[1.0]), fv(&[2.0])], Metric::Euclidean).unwrap();
        let t2 = augment_template(&t, &[fv(&[3.0])], 2).unwrap();
        let kept: Vec<f64> = t2.enrollment.iter().map(|v| v.vec[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0]);
        assert_eq!(t2.centroid, vec![2.5]);
        // the original is untouched
        assert_eq!(t.enrollment.len(), 2);
    }

    #[test]
    fn augment_wrong_dimension_rejected() {
        let t = build_template("S1", &[fv(&[1.0, 2.0])], Metric::Euclidean).unwrap();
        assert!(augment_template(&t, &[fv(&[1.0])], 5).is_err());
    }

    #[test]
    fn average_probe_examples() {
        let v = fv(&[1.5, 2.5]);
        assert_eq!(average_probe(&[v.clone(), v.clone(), v.clone()], 3).unwrap().vec, v.vec);
        assert_eq!(average_probe(&[fv(&[0.0, 0.0]), fv(&[2.0, 0.0])], 2).unwrap().vec, vec![1.0, 0.0]);
        assert_eq!(average_probe(&[fv(&[7.0]), fv(&[9.0])], 1).unwrap().vec, vec![7.0]);
        assert!(average_probe(&[fv(&[7.0])], 2).is_none());
    }

    #[test]
    fn distance_examples() {
        let origin = build_template("S1", &[fv(&[0.0, 0.0])], Metric::Euclidean).unwrap();
        assert_eq!(score_distance(&[3.0, 4.0], &origin, TemplateRule::Centroid).unwrap(), -5.0);
        let par = build_template("S1", &[fv(&[1.0, 2.0])], Metric::Cosine).unwrap();
        assert!(score_distance(&[2.0, 4.0], &par, TemplateRule::Centroid).unwrap().abs() < 1e-15);
        let man = build_template("S1", &[fv(&[2.0, 3.0])], Metric::Manhattan).unwrap();
        assert_eq!(score_distance(&[1.0, 1.0], &man, TemplateRule::Centroid).unwrap(), -3.0);
    }

    #[test]
    fn cosine_zero_norm_is_error() {
        let t = build_template("S1", &[fv(&[1.0, 0.0])], Metric::Cosine).unwrap();
        assert!(score_distance(&[0.0, 0.0], &t, TemplateRule::Centroid).is_err());
        assert!(build_template("S1", &[fv(&[0.0, 0.0])], Metric::Cosine).is_err());
    }

    #[test]
    fn mean_pairwise_rule() {
        let t = build_template("S1", &[fv(&[0.0]), fv(&[4.0])], Metric::Euclidean).unwrap();
        assert_eq!(score_distance(&[1.0], &t, TemplateRule::MeanPairwise).unwrap(), -2.0);
        assert_eq!(score_distance(&[1.0], &t, TemplateRule::Centroid).unwrap(), -1.0);
    }

    fn ranks(scores: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
        idx
    }

    proptest! {
        #[test]
        fn ranking_invariant_under_rotation_and_translation(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 6..20),
            angle in 0.0f64..6.28,
            shift in (-3.0f64..3.0, -3.0f64..3.0),
        ) {
            let (c, s) = (angle.cos(), angle.sin());
            let rot = |p: &(f64, f64)| vec![c * p.0 - s * p.1, s * p.0 + c * p.1];
            let tr = |p: &(f64, f64)| vec![p.0 + shift.0, p.1 + shift.1];
            let enroll = &pts[..3];
            let probes = &pts[3..];
            for metric in [Metric::Euclidean, Metric::Cosine, Metric::Manhattan] {
                let base_t = build_template("S", &enroll.iter().map(|p| fv(&[p.0, p.1])).collect::<Vec<_>>(), metric);
                prop_assume!(base_t.is_ok());
                let base_t = base_t.unwrap();
                let base: Vec<f64> = probes.iter().map(|p| score_distance(&[p.0, p.1], &base_t, TemplateRule::Centroid).unwrap()).collect();
                let transforms: Vec<&dyn Fn(&(f64, f64)) -> Vec<f64>> = match metric {
                    Metric::Euclidean => vec![&rot, &tr],
                    Metric::Cosine => vec![&rot],
                    Metric::Manhattan => vec![&tr],
                };
                for f in transforms {
                    let t = build_template("S", &enroll.iter().map(|p| fv(&f(p))).collect::<Vec<_>>(), metric).unwrap();
                    let moved: Vec<f64> = probes.iter().map(|p| score_distance(&f(p), &t, TemplateRule::Centroid).unwrap()).collect();
                    // compare orderings where scores are not near-tied
                    let (r1, r2) = (ranks(&base), ranks(&moved));
                    for (a, b) in r1.iter().zip(&r2) {
                        if a != b {
                            prop_assert!((base[*a] - base[*b]).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }
}
