//! Orchestration: corpus → preprocess → features → trials → scores.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{epoch_stream, CorpusIndex, CorpusWriter, Epoch, SessionMeta, SynthCorpus};
use crate::features::{FeatureSpec, FeatureVector, Extractor, PostNorm, ZScoreStats};
use crate::matching::ScorerConfig;
use crate::preprocess::{preprocess_pipeline, PreprocessConfig};
use crate::protocol::{
    build_scorers, filter_by_device_pair, generate_trials, preset, preset_indices, score_trials, split_enroll_verify,
    FeatureSet, ProtocolConfig, Split, TrialRow,
};
use crate::{Error, Result};

/// Anything that yields per-session continuous recordings.
pub trait SessionSource: Sync {
    fn rate_hz(&self) -> f64;
    fn channels(&self) -> &[String];
    fn preprocessed(&self) -> bool;
    /// Ordered by (subject, date, session).
    fn metas(&self) -> Vec<Arc<SessionMeta>>;
    /// Recording of session `i` and its epoch onsets in samples.
    fn recording(&self, i: usize) -> Result<(Array2<f64>, Vec<usize>)>;
}

impl SessionSource for CorpusIndex {
    fn rate_hz(&self) -> f64 {
        self.rate_hz
    }
    fn channels(&self) -> &[String] {
        &self.channels
    }
    fn preprocessed(&self) -> bool {
        self.preprocessed
    }
    fn metas(&self) -> Vec<Arc<SessionMeta>> {
        self.sessions.iter().map(|s| s.meta.clone()).collect()
    }
    fn recording(&self, i: usize) -> Result<(Array2<f64>, Vec<usize>)> {
        self.load_recording(&self.sessions[i])
    }
}

impl SessionSource for SynthCorpus {
    fn rate_hz(&self) -> f64 {
        self.cfg.rate_hz
    }
    fn channels(&self) -> &[String] {
        &self.channels
    }
    fn preprocessed(&self) -> bool {
        false
    }
    fn metas(&self) -> Vec<Arc<SessionMeta>> {
        self.sessions.clone()
    }
    fn recording(&self, i: usize) -> Result<(Array2<f64>, Vec<usize>)> {
        let n = self.cfg.rate_hz.round() as usize;
        Ok((self.recording(i), (0..self.cfg.epochs_per_session).map(|k| k * n).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub features: FeatureSpec,
    /// Applied to preprocessed epochs.
    pub channel_preset: Option<String>,
    /// Cohort for z-score fitting.
    pub reference_subjects: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocess: PreprocessConfig::default(),
            features: FeatureSpec::default(),
            channel_preset: None,
            reference_subjects: Vec::new(),
        }
    }
}

/// Preprocessed (or validated) epochs of session `i`.
pub fn session_epochs(src: &dyn SessionSource, i: usize, meta: &Arc<SessionMeta>, pre: &PreprocessConfig) -> Result<Vec<Epoch>> {
    let rate = src.rate_hz();
    let (rec, stimuli) = src.recording(i)?;
    let stream = if src.preprocessed() {
        epoch_stream(&rec, rate, &stimuli)?
    } else {
        preprocess_pipeline(&rec, rate, &stimuli, pre).map_err(|e| match e {
            Error::Stage { stage, msg } => {
                Error::Stage { stage, msg: format!("session ({}, {}): {msg}", meta.subject_id, meta.session_id) }
            }
            other => other,
        })?
    };
    if stream.skipped() > 0 {
        log::warn!(
            "session ({}, {}): skipped {} overlapping and {} truncated epochs",
            meta.subject_id,
            meta.session_id,
            stream.skipped_overlap,
            stream.skipped_truncated
        );
    }
    stream.epochs.into_iter().map(|(k, m)| Epoch::new(meta.clone(), k, m, rate)).collect()
}

/// Feature vectors for every epoch of every session.
pub fn extract_features(src: &dyn SessionSource, cfg: &PipelineConfig) -> Result<FeatureSet> {
    let rate = src.rate_hz();
    cfg.preprocess.validate(rate)?;
    let extractor = Extractor::new(&cfg.features, rate)?;
    let rows = match &cfg.channel_preset {
        Some(name) => Some(preset_indices(src.channels(), preset(name)?)?),
        None => None,
    };
    let metas = src.metas();
    let per_session: Vec<Vec<FeatureVector>> = (0..metas.len())
        .into_par_iter()
        .map(|i| {
            let epochs = session_epochs(src, i, &metas[i], &cfg.preprocess)?;
            epochs
                .into_iter()
                .map(|mut e| {
                    if let Some(r) = &rows {
                        e.samples = e.samples.select(Axis(0), r);
                    }
                    extractor.extract(&e)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut vectors: Vec<FeatureVector> = per_session.into_iter().flatten().collect();
    if cfg.features.post_norm == PostNorm::ZscoreFromReference {
        zscore_from_reference(&mut vectors, &cfg.reference_subjects)?;
    }
    FeatureSet::from_vectors(vectors)
}

/// Standardize every vector with statistics of the reference subjects only.
pub fn zscore_from_reference(vectors: &mut [FeatureVector], reference: &[String]) -> Result<ZScoreStats> {
    let set: BTreeSet<&str> = reference.iter().map(String::as_str).collect();
    let stats = ZScoreStats::fit(
        vectors.iter().filter(|v| set.contains(v.meta.subject_id.as_str())).map(|v| v.vec.as_slice()),
    )?;
    for v in vectors.iter_mut() {
        stats.apply(&mut v.vec)?;
    }
    Ok(stats)
}

/// Run the preprocessing chain over a raw corpus and write the result.
pub fn preprocess_corpus(src: &CorpusIndex, out_dir: &Path, pre: &PreprocessConfig) -> Result<CorpusIndex> {
    if src.preprocessed {
        return Err(Error::config(format!("corpus {} is already preprocessed", src.root.display())));
    }
    pre.validate(src.rate_hz)?;
    let metas = src.metas();
    let mut writer = CorpusWriter::create(out_dir, src.rate_hz, src.channels.clone(), true)?;
    // bounded batches keep memory flat on large corpora
    let batch = rayon::current_num_threads().max(1);
    for start in (0..metas.len()).step_by(batch) {
        let end = (start + batch).min(metas.len());
        let done: Vec<Vec<Array2<f64>>> = (start..end)
            .into_par_iter()
            .map(|i| Ok(session_epochs(src, i, &metas[i], pre)?.into_iter().map(|e| e.samples).collect()))
            .collect::<Result<_>>()?;
        for (i, epochs) in (start..end).zip(done) {
            writer.write_session(&metas[i], &epochs)?;
        }
    }
    crate::corpus::load_manifest(&writer.finish()?)
}

/// Scored trial table for one protocol and scorer.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub split: Split,
    pub rows: Vec<TrialRow>,
}

pub fn evaluate(features: &FeatureSet, protocol: &ProtocolConfig, scorer: &ScorerConfig) -> Result<Evaluation> {
    protocol.validate()?;
    scorer.validate()?;
    let split = split_enroll_verify(&features.metas(), protocol)?;
    for (s, why) in &split.excluded {
        log::info!("subject {s} excluded: {why}");
    }
    let ts = generate_trials(features, &split, protocol.verification_samples)?;
    let scorers = build_scorers(features, &split, scorer)?;
    let scores = score_trials(&ts, features, &scorers, scorer.probe_rule)?;
    let mut rows = ts.rows(&scores);
    if let Some((e, p)) = &protocol.device_pair {
        rows = filter_by_device_pair(&rows, e, p).rows;
    }
    Ok(Evaluation { split, rows })
}
