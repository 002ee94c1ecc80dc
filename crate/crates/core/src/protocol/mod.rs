//! Trial enumeration under the evaluation protocols.

mod bootstrap;
mod channels;
mod scaling;
mod trials;
mod update;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::SessionMeta;
use crate::features::{check_uniform, FeatureVector};
use crate::{Error, Result};

pub use bootstrap::{bootstrap_subject_count, SubjectCountRow};
pub use channels::{preset, preset_indices, select_channels, ChannelPreset, PRESETS};
pub use scaling::{fit_scaling_curve, ScalingFit, ScalingPrediction};
pub use trials::{
    bin_by_interval, build_scorers, filter_by_device_pair, generate_trials, read_trials_csv, score_trials,
    write_trials_csv, DeviceFilter, Probe, Trial, TrialRow, TrialSet,
};
pub use update::{simulate_enrollment_update, ThresholdPolicy, UpdateBinRow, UpdateReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnrollRule {
    /// The k chronologically earliest sessions.
    FirstK(usize),
    /// Session ids per subject.
    Explicit(BTreeMap<String, Vec<String>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyRule {
    AllRemaining,
    NextSessionOnly,
}

/// Closed day interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalBin {
    pub label: String,
    pub lo: i64,
    pub hi: i64,
}

impl IntervalBin {
    pub fn new(label: impl Into<String>, lo: i64, hi: i64) -> Self {
        IntervalBin { label: label.into(), lo, hi }
    }

    pub fn contains(&self, days: i64) -> bool {
        self.lo <= days && days <= self.hi
    }
}

/// D1..D7, W1..W3, M1..M11, Y1..Y5.
pub fn default_bins() -> Vec<IntervalBin> {
    let mut bins: Vec<IntervalBin> = (1..=7).map(|d| IntervalBin::new(format!("D{d}"), d, d)).collect();
    for w in 0..3 {
        bins.push(IntervalBin::new(format!("W{}", w + 1), 8 + 7 * w, 14 + 7 * w));
    }
    for m in 0..10 {
        bins.push(IntervalBin::new(format!("M{}", m + 1), 29 + 30 * m, 58 + 30 * m));
    }
    bins.push(IntervalBin::new("M11", 329, 336));
    for y in 0..5 {
        bins.push(IntervalBin::new(format!("Y{}", y + 1), 337 + 364 * y, 700 + 364 * y));
    }
    bins
}

pub fn validate_bins(bins: &[IntervalBin]) -> Result<()> {
    let mut labels = BTreeSet::new();
    for (i, b) in bins.iter().enumerate() {
        if b.lo > b.hi {
            return Err(Error::config(format!("bin {} has lo > hi", b.label)));
        }
        if i > 0 && bins[i - 1].hi >= b.lo {
            return Err(Error::config(format!("bins {} and {} overlap or are not ascending", bins[i - 1].label, b.label)));
        }
        if !labels.insert(&b.label) {
            return Err(Error::config(format!("duplicate bin label {}", b.label)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub enroll_rule: EnrollRule,
    pub verify_rule: VerifyRule,
    /// Epochs averaged into one probe.
    pub verification_samples: usize,
    /// Ordered (enrollment device, probe device).
    pub device_pair: Option<(String, String)>,
    pub interval_bins: Vec<IntervalBin>,
    pub channel_preset: Option<String>,
    /// Held out of evaluation; used for classifier negatives and z-score fitting.
    pub reference_subjects: Vec<String>,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            enroll_rule: EnrollRule::FirstK(1),
            verify_rule: VerifyRule::AllRemaining,
            verification_samples: 1,
            device_pair: None,
            interval_bins: default_bins(),
            channel_preset: None,
            reference_subjects: Vec::new(),
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.enroll_rule {
            EnrollRule::FirstK(0) => return Err(Error::config("enroll_rule first_k needs k >= 1")),
            EnrollRule::Explicit(m) if m.values().any(|v| v.is_empty()) => {
                return Err(Error::config("explicit enrollment lists must be non-empty"))
            }
            _ => {}
        }
        if self.verification_samples == 0 {
            return Err(Error::config("verification_samples must be >= 1"));
        }
        if let Some(p) = &self.channel_preset {
            preset(p)?;
        }
        validate_bins(&self.interval_bins)
    }
}

/// Feature vectors grouped by session, sessions ordered by (subject, date, id).
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub feature_id: Arc<str>,
    pub dim: usize,
    pub sessions: Vec<SessionFeatures>,
}

#[derive(Debug, Clone)]
pub struct SessionFeatures {
    pub meta: Arc<SessionMeta>,
    /// Epoch order.
    pub vectors: Vec<FeatureVector>,
}

fn session_key(m: &SessionMeta) -> (String, chrono::NaiveDate, String) {
    (m.subject_id.clone(), m.date, m.session_id.clone())
}

impl FeatureSet {
    pub fn from_vectors(vectors: Vec<FeatureVector>) -> Result<Self> {
        let (feature_id, dim) = check_uniform(&vectors)?.ok_or(Error::Empty("feature vector"))?;
        let mut groups: BTreeMap<(String, chrono::NaiveDate, String), SessionFeatures> = BTreeMap::new();
        for v in vectors {
            let key = session_key(&v.meta);
            let entry = groups.entry(key).or_insert_with(|| SessionFeatures { meta: v.meta.clone(), vectors: Vec::new() });
            if *entry.meta != *v.meta {
                return Err(Error::Embedding(format!(
                    "session ({}, {}) has conflicting metadata",
                    v.meta.subject_id, v.meta.session_id
                )));
            }
            entry.vectors.push(v);
        }
        let mut sessions: Vec<SessionFeatures> = groups.into_values().collect();
        let mut seen = BTreeSet::new();
        for s in sessions.iter_mut() {
            if !seen.insert((s.meta.subject_id.clone(), s.meta.session_id.clone())) {
                return Err(Error::DuplicateSession {
                    subject: s.meta.subject_id.clone(),
                    session: s.meta.session_id.clone(),
                });
            }
            s.vectors.sort_by_key(|v| v.epoch_index);
        }
        Ok(FeatureSet { feature_id, dim, sessions })
    }

    pub fn metas(&self) -> Vec<Arc<SessionMeta>> {
        self.sessions.iter().map(|s| s.meta.clone()).collect()
    }

    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.sessions.iter().map(|s| s.meta.subject_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// All vectors of the listed subjects, in session order.
    pub fn vectors_of(&self, subjects: &BTreeSet<String>) -> Vec<&FeatureVector> {
        self.sessions.iter().filter(|s| subjects.contains(&s.meta.subject_id)).flat_map(|s| s.vectors.iter()).collect()
    }
}

/// Enrollment and verification sessions of one evaluation subject, as
/// indices into the session list the split was computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubjectSplit {
    pub subject: String,
    pub enroll: Vec<usize>,
    pub verify: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Split {
    pub subjects: Vec<SubjectSplit>,
    /// Subjects without enough sessions, with the reason.
    pub excluded: Vec<(String, String)>,
    /// Reference-cohort subjects present in the data.
    pub reference: Vec<String>,
}

impl Split {
    pub fn subject_names(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.subject.clone()).collect()
    }

    /// Keep only the listed subjects.
    pub fn restrict(&self, keep: &BTreeSet<String>) -> Split {
        Split {
            subjects: self.subjects.iter().filter(|s| keep.contains(&s.subject)).cloned().collect(),
            excluded: self.excluded.clone(),
            reference: self.reference.clone(),
        }
    }
}

/// `sessions` must be ordered by (subject, date, id), as in [`FeatureSet`].
pub fn split_enroll_verify(sessions: &[Arc<SessionMeta>], cfg: &ProtocolConfig) -> Result<Split> {
    let reference: BTreeSet<&str> = cfg.reference_subjects.iter().map(String::as_str).collect();
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in sessions.iter().enumerate() {
        by_subject.entry(s.subject_id.as_str()).or_default().push(i);
    }
    let mut out = Split { subjects: Vec::new(), excluded: Vec::new(), reference: Vec::new() };
    for (subject, idx) in by_subject {
        if reference.contains(subject) {
            out.reference.push(subject.to_owned());
            continue;
        }
        let (enroll, rest): (Vec<usize>, Vec<usize>) = match &cfg.enroll_rule {
            EnrollRule::FirstK(k) => {
                if idx.len() <= *k {
                    out.excluded.push((subject.to_owned(), format!("{} sessions, need > {k}", idx.len())));
                    continue;
                }
                (idx[..*k].to_vec(), idx[*k..].to_vec())
            }
            EnrollRule::Explicit(map) => {
                let Some(wanted) = map.get(subject) else {
                    out.excluded.push((subject.to_owned(), "no enrollment sessions listed".into()));
                    continue;
                };
                let mut enroll = Vec::new();
                for w in wanted {
                    let pos = idx
                        .iter()
                        .find(|i| sessions[**i].session_id == *w)
                        .ok_or_else(|| Error::config(format!("enrollment session ({subject}, {w}) not found")))?;
                    enroll.push(*pos);
                }
                enroll.sort_unstable();
                enroll.dedup();
                let last = *enroll.last().unwrap();
                let rest = idx.iter().copied().filter(|i| *i > last && !enroll.contains(i)).collect();
                (enroll, rest)
            }
        };
        let verify: Vec<usize> = match cfg.verify_rule {
            VerifyRule::AllRemaining => rest,
            VerifyRule::NextSessionOnly => rest.into_iter().take(1).collect(),
        };
        if verify.is_empty() {
            out.excluded.push((subject.to_owned(), "no verification session".into()));
            continue;
        }
        out.subjects.push(SubjectSplit { subject: subject.to_owned(), enroll, verify });
    }
    Ok(out)
}
