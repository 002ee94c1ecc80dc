use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{validate_bins, FeatureSet, IntervalBin, Split};
use crate::corpus::SessionMeta;
use crate::matching::{ProbeRule, ScorerConfig, ScorerKind, SubjectScorer};
use crate::metrics::ScoredTrial;
use crate::{Error, Result};

/// One verification attempt: the mean of `n` consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub meta: Arc<SessionMeta>,
    /// Index into [`FeatureSet::sessions`].
    pub session: usize,
    pub block: usize,
    pub start: usize,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trial {
    /// Index into [`TrialSet::subjects`].
    pub claimed: usize,
    /// Index into [`TrialSet::probes`].
    pub probe: usize,
    pub genuine: bool,
    /// Probe date minus the claimed subject's last enrollment date.
    pub delta_days: i64,
}

#[derive(Debug, Clone)]
pub struct TrialSet {
    pub feature_id: Arc<str>,
    pub verification_samples: usize,
    pub subjects: Vec<Arc<str>>,
    /// Distinct enrollment devices per claimed subject, joined by `+`.
    pub enroll_devices: Vec<Arc<str>>,
    pub last_enroll: Vec<NaiveDate>,
    pub probes: Vec<Probe>,
    pub trials: Vec<Trial>,
}

impl TrialSet {
    pub fn n_genuine(&self) -> usize {
        self.trials.iter().filter(|t| t.genuine).count()
    }

    pub fn n_impostor(&self) -> usize {
        self.trials.len() - self.n_genuine()
    }

    pub fn probe_members<'a>(&self, features: &'a FeatureSet, p: &Probe) -> &'a [crate::features::FeatureVector] {
        &features.sessions[p.session].vectors[p.start..p.start + self.verification_samples]
    }

    /// Flatten scored trials into export rows.
    pub fn rows(&self, scores: &[f64]) -> Vec<TrialRow> {
        assert_eq!(scores.len(), self.trials.len());
        self.trials
            .iter()
            .zip(scores)
            .map(|(t, s)| {
                let p = &self.probes[t.probe];
                TrialRow {
                    claimed: self.subjects[t.claimed].to_string(),
                    probe_subject: p.meta.subject_id.clone(),
                    probe_session: p.meta.session_id.clone(),
                    block: p.block,
                    genuine: t.genuine,
                    score: *s,
                    delta_days: t.delta_days,
                    enroll_device: self.enroll_devices[t.claimed].to_string(),
                    probe_device: p.meta.device_id.clone(),
                }
            })
            .collect()
    }
}

/// Enumerate genuine and zero-effort impostor trials.
///
/// Probes are disjoint blocks of `n` consecutive epochs from verification
/// sessions; trailing epochs that do not fill a block are unused.
pub fn generate_trials(features: &FeatureSet, split: &Split, n: usize) -> Result<TrialSet> {
    if n == 0 {
        return Err(Error::config("verification_samples must be >= 1"));
    }
    let mut subjects = Vec::new();
    let mut enroll_devices = Vec::new();
    let mut last_enroll = Vec::new();
    let mut probes = Vec::new();
    for s in &split.subjects {
        subjects.push(Arc::<str>::from(s.subject.as_str()));
        let devices: BTreeSet<&str> = s.enroll.iter().map(|i| features.sessions[*i].meta.device_id.as_str()).collect();
        enroll_devices.push(Arc::<str>::from(devices.into_iter().collect::<Vec<_>>().join("+")));
        last_enroll.push(s.enroll.iter().map(|i| features.sessions[*i].meta.date).max().expect("non-empty enrollment"));
        for &vi in &s.verify {
            let sess = &features.sessions[vi];
            for block in 0..sess.vectors.len() / n {
                let start = block * n;
                let members = &sess.vectors[start..start + n];
                let mut mean = vec![0.0; features.dim];
                for m in members {
                    for (a, b) in mean.iter_mut().zip(&m.vec) {
                        *a += b;
                    }
                }
                if n > 1 {
                    mean.iter_mut().for_each(|a| *a /= n as f64);
                }
                probes.push(Probe { meta: sess.meta.clone(), session: vi, block, start, mean });
            }
        }
    }
    let mut trials = Vec::with_capacity(subjects.len() * probes.len());
    for (c, name) in subjects.iter().enumerate() {
        for (pi, p) in probes.iter().enumerate() {
            trials.push(Trial {
                claimed: c,
                probe: pi,
                genuine: p.meta.subject_id == **name,
                delta_days: (p.meta.date - last_enroll[c]).num_days(),
            });
        }
    }
    Ok(TrialSet {
        feature_id: features.feature_id.clone(),
        verification_samples: n,
        subjects,
        enroll_devices,
        last_enroll,
        probes,
        trials,
    })
}

/// One scorer per split subject, in split order.
pub fn build_scorers(features: &FeatureSet, split: &Split, cfg: &ScorerConfig) -> Result<Vec<SubjectScorer>> {
    let negatives: Vec<&[f64]> = if cfg.kind == ScorerKind::Distance {
        Vec::new()
    } else {
        let reference: BTreeSet<String> = split.reference.iter().cloned().collect();
        let v: Vec<&[f64]> = features.vectors_of(&reference).into_iter().map(|v| v.vec.as_slice()).collect();
        if v.is_empty() {
            return Err(Error::Empty("reference cohort (classifier negatives)"));
        }
        v
    };
    split
        .subjects
        .par_iter()
        .map(|s| {
            let enroll: Vec<_> = s.enroll.iter().flat_map(|i| features.sessions[*i].vectors.iter().cloned()).collect();
            SubjectScorer::build(&s.subject, &enroll, &negatives, cfg)
        })
        .collect()
}

/// Scores in trial order.
pub fn score_trials(ts: &TrialSet, features: &FeatureSet, scorers: &[SubjectScorer], rule: ProbeRule) -> Result<Vec<f64>> {
    if scorers.len() != ts.subjects.len() {
        return Err(Error::Dimension { expected: ts.subjects.len(), got: scorers.len() });
    }
    if features.feature_id != ts.feature_id {
        return Err(Error::FeatureId { expected: ts.feature_id.to_string(), got: features.feature_id.to_string() });
    }
    if let Some(s) = scorers.iter().find(|s| *s.feature_id() != ts.feature_id) {
        return Err(Error::FeatureId { expected: ts.feature_id.to_string(), got: s.feature_id().to_string() });
    }
    ts.trials
        .par_iter()
        .map(|t| {
            let p = &ts.probes[t.probe];
            scorers[t.claimed].score_probe(&p.mean, ts.probe_members(features, p), rule)
        })
        .collect()
}

/// One scored trial in the exported trial table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub claimed: String,
    pub probe_subject: String,
    pub probe_session: String,
    pub block: usize,
    pub genuine: bool,
    pub score: f64,
    pub delta_days: i64,
    pub enroll_device: String,
    pub probe_device: String,
}

impl From<&TrialRow> for ScoredTrial {
    fn from(r: &TrialRow) -> Self {
        ScoredTrial { claimed: r.claimed.clone(), genuine: r.genuine, score: r.score }
    }
}

impl TrialRow {
    pub fn scored(rows: &[TrialRow]) -> Vec<ScoredTrial> {
        rows.iter().map(ScoredTrial::from).collect()
    }
}

pub fn write_trials_csv(path: &Path, rows: &[TrialRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRow>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let row: TrialRow = rec.map_err(|e| Error::Schema { path: path.to_owned(), msg: format!("row {}: {e}", i + 1) })?;
        if row.genuine != (row.claimed == row.probe_subject) {
            return Err(Error::Schema {
                path: path.to_owned(),
                msg: format!("row {}: genuine flag disagrees with subjects", i + 1),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceFilter {
    pub enroll_device: String,
    pub probe_device: String,
    pub rows: Vec<TrialRow>,
    pub n_genuine: usize,
    pub n_impostor: usize,
    /// Set when genuine or impostor trials are missing, so no rate is defined.
    pub no_data: bool,
}

/// Keep trials whose (enrollment device, probe device) equals the ordered pair.
pub fn filter_by_device_pair(rows: &[TrialRow], enroll_device: &str, probe_device: &str) -> DeviceFilter {
    let kept: Vec<TrialRow> =
        rows.iter().filter(|r| r.enroll_device == enroll_device && r.probe_device == probe_device).cloned().collect();
    let n_genuine = kept.iter().filter(|r| r.genuine).count();
    let n_impostor = kept.len() - n_genuine;
    DeviceFilter {
        enroll_device: enroll_device.to_owned(),
        probe_device: probe_device.to_owned(),
        rows: kept,
        n_genuine,
        n_impostor,
        no_data: n_genuine == 0 || n_impostor == 0,
    }
}

/// Assign trials to closed day-interval bins by `delta_days`; impostor
/// trials use the same rule relative to the claimed subject's enrollment.
pub fn bin_by_interval(rows: &[TrialRow], bins: &[IntervalBin]) -> Result<Vec<(IntervalBin, Vec<TrialRow>)>> {
    validate_bins(bins)?;
    Ok(bins.iter().map(|b| (b.clone(), rows.iter().filter(|r| b.contains(r.delta_days)).cloned().collect())).collect())
}
