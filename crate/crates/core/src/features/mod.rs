//! Handcrafted epoch features (Welch PSD, Burg AR coefficients, their
//! concatenation) and the embedding interchange formats.

mod burg;
mod embeddings;
mod welch;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Epoch, SessionMeta};
use crate::{Error, Result};

pub use burg::{burg, BurgFit};
pub use embeddings::{
    import_embeddings, read_embd, read_jsonl, read_store, write_embd, write_jsonl, write_store, EmbeddingRecord,
    EMBD_MAGIC,
};
pub use welch::{welch_psd, welch_spectrum, WelchPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Psd,
    Ar,
    #[serde(rename = "psd+ar")]
    PsdAr,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdSpec {
    pub segment_len: usize,
    pub overlap: f64,
    /// Taper; only "hann" (periodic) and "boxcar" are recognised.
    pub taper: String,
    pub band: (f64, f64),
}

impl Default for PsdSpec {
    fn default() -> Self {
        PsdSpec { segment_len: 256, overlap: 0.5, taper: "hann".into(), band: (1.0, 50.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArMethod {
    Burg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArSpec {
    pub order: usize,
    pub method: ArMethod,
}

impl Default for ArSpec {
    fn default() -> Self {
        ArSpec { order: 6, method: ArMethod::Burg }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PostNorm {
    None,
    ZscoreFromReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub psd: PsdSpec,
    pub ar: ArSpec,
    pub post_norm: PostNorm,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec { kind: FeatureKind::PsdAr, psd: PsdSpec::default(), ar: ArSpec::default(), post_norm: PostNorm::None }
    }
}

impl FeatureSpec {
    pub fn validate(&self, rate_hz: f64) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        let p = &self.psd;
        if !(0.0 < p.band.0 && p.band.0 < p.band.1 && p.band.1 < rate_hz / 2.0) {
            return bad(format!("psd band {:?} must lie inside (0, {})", p.band, rate_hz / 2.0));
        }
        if !(0.0..1.0).contains(&p.overlap) {
            return bad(format!("psd overlap {} must lie in [0, 1)", p.overlap));
        }
        if p.segment_len < 2 {
            return bad("psd segment_len must be >= 2".into());
        }
        if !matches!(p.taper.as_str(), "hann" | "boxcar") {
            return bad(format!("unknown taper '{}'", p.taper));
        }
        if self.ar.order == 0 || self.ar.order >= p.segment_len {
            return bad(format!("ar order {} must be >= 1 and below the segment length", self.ar.order));
        }
        Ok(())
    }

    /// Stable identifier of the extractor configuration.
    pub fn feature_id(&self) -> String {
        let json = serde_json::to_string(self).expect("feature spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        format!("hc-{}", &hex::encode(digest)[..16])
    }

    /// Output dimension for `n_channels` at `rate_hz`.
    pub fn dimension(&self, n_channels: usize, rate_hz: f64) -> usize {
        let psd = WelchPlan::band_bins(&self.psd, rate_hz).len() * n_channels;
        let ar = self.ar.order * n_channels;
        match self.kind {
            FeatureKind::Psd => psd,
            FeatureKind::Ar => ar,
            FeatureKind::PsdAr => psd + ar,
            FeatureKind::External => 0,
        }
    }
}

/// Fixed-dimension representation of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub meta: Arc<SessionMeta>,
    pub epoch_index: usize,
    pub vec: Vec<f64>,
    pub feature_id: Arc<str>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    fn same_provenance(&self, other: &FeatureVector) -> bool {
        self.epoch_index == other.epoch_index && self.meta == other.meta
    }
}

/// Check that every vector shares one feature id and dimension.
pub fn check_uniform<'a>(vectors: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Option<(Arc<str>, usize)>> {
    let mut first: Option<(Arc<str>, usize)> = None;
    for v in vectors {
        match &first {
            None => first = Some((v.feature_id.clone(), v.dim())),
            Some((id, dim)) => {
                if *id != v.feature_id {
                    return Err(Error::FeatureId { expected: id.to_string(), got: v.feature_id.to_string() });
                }
                if *dim != v.dim() {
                    return Err(Error::Dimension { expected: *dim, got: v.dim() });
                }
            }
        }
    }
    Ok(first)
}

/// Burg AR coefficients of every channel, concatenated.
pub fn ar_coeffs(epoch: &Epoch, spec: &ArSpec, feature_id: Arc<str>) -> Result<FeatureVector> {
    if spec.order == 0 || spec.order >= epoch.samples.ncols() {
        return Err(Error::config(format!("ar order {} must be in [1, {})", spec.order, epoch.samples.ncols())));
    }
    let mut vec = Vec::with_capacity(spec.order * epoch.n_channels());
    for (c, row) in epoch.samples.rows().into_iter().enumerate() {
        let x: Vec<f64> = row.iter().copied().collect();
        let fit = burg(&x, spec.order).map_err(|e| match e {
            Error::Numerical(msg) => Error::DegenerateChannel { channel: c, msg },
            other => other,
        })?;
        vec.extend(fit.coeffs);
    }
    Ok(FeatureVector { meta: epoch.meta.clone(), epoch_index: epoch.epoch_index, vec, feature_id })
}

/// Per-dimension mean/std fitted on a reference cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Dimensions with zero spread in the reference; they map to 0.
    pub degenerate_dims: usize,
}

impl ZScoreStats {
    pub fn fit<'a>(reference: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = reference.into_iter().collect();
        let first = rows.first().ok_or(Error::Empty("reference cohort"))?;
        let d = first.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension { expected: d, got: r.len() });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std: Vec<f64> = var.into_iter().map(f64::sqrt).collect();
        let degenerate_dims = std.iter().filter(|s| **s <= 1e-300).count();
        if degenerate_dims > 0 {
            log::warn!("z-score reference has {degenerate_dims} zero-variance dimensions");
        }
        Ok(ZScoreStats { mean, std, degenerate_dims })
    }

    pub fn apply(&self, v: &mut [f64]) -> Result<()> {
        if v.len() != self.mean.len() {
            return Err(Error::Dimension { expected: self.mean.len(), got: v.len() });
        }
        for ((x, m), s) in v.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = if *s > 1e-300 { (*x - m) / s } else { 0.0 };
        }
        Ok(())
    }
}

/// Concatenate PSD and AR vectors of one epoch, optionally z-scored.
pub fn combine_features(
    psd: &FeatureVector,
    ar: &FeatureVector,
    reference: Option<&ZScoreStats>,
    feature_id: Arc<str>,
) -> Result<FeatureVector> {
    if !psd.same_provenance(ar) {
        return Err(Error::config(format!(
            "feature provenance mismatch: ({}, {}, {}) vs ({}, {}, {})",
            psd.meta.subject_id, psd.meta.session_id, psd.epoch_index, ar.meta.subject_id, ar.meta.session_id, ar.epoch_index
        )));
    }
    let mut vec = Vec::with_capacity(psd.dim() + ar.dim());
    vec.extend_from_slice(&psd.vec);
    vec.extend_from_slice(&ar.vec);
    if let Some(stats) = reference {
        stats.apply(&mut vec)?;
    }
    Ok(FeatureVector { meta: psd.meta.clone(), epoch_index: psd.epoch_index, vec, feature_id })
}

/// Reusable handcrafted extractor for one spec and sampling rate.
#[derive(Debug, Clone)]
pub struct Extractor {
    spec: FeatureSpec,
    welch: WelchPlan,
    id: Arc<str>,
}

impl Extractor {
    pub fn new(spec: &FeatureSpec, rate_hz: f64) -> Result<Self> {
        spec.validate(rate_hz)?;
        if spec.kind == FeatureKind::External {
            return Err(Error::config("external features are imported, not extracted"));
        }
        Ok(Extractor { spec: spec.clone(), welch: WelchPlan::new(&spec.psd, rate_hz)?, id: spec.feature_id().into() })
    }

    pub fn feature_id(&self) -> Arc<str> {
        self.id.clone()
    }

    /// Features before any reference normalization.
    pub fn extract(&self, epoch: &Epoch) -> Result<FeatureVector> {
        match self.spec.kind {
            FeatureKind::Psd => self.welch.features(epoch, self.id.clone()),
            FeatureKind::Ar => ar_coeffs(epoch, &self.spec.ar, self.id.clone()),
            FeatureKind::PsdAr => {
                let p = self.welch.features(epoch, self.id.clone())?;
                let a = ar_coeffs(epoch, &self.spec.ar, self.id.clone())?;
                combine_features(&p, &a, None, self.id.clone())
            }
            FeatureKind::External => unreachable!("rejected in Extractor::new"),
        }
    }
}
