//! Data model, on-disk corpus format, channel mapping, epoching and the
//! synthetic multi-session generator.

mod channels;
mod epochfile;
mod epoching;
mod manifest;
pub mod synth;

use std::sync::Arc;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use channels::{canonical_labels, map_channels, ChannelMap, DeviceMap, CANONICAL_LAYOUT_VERSION};
pub use epochfile::{read_epoch_file, read_epoch_header, write_epoch_file, EpochHeader, EPOCH_MAGIC};
pub use epoching::{epoch_stream, EpochStream};
pub use manifest::{load_manifest, MANIFEST_NAME, CorpusIndex, CorpusWriter, Manifest, ManifestSession, SessionEntry};
pub use synth::{synth_corpus, DeviceProfile, SynthConfig, SynthCorpus};

/// Identity and acquisition context of one recording session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionMeta {
    pub subject_id: String,
    pub session_id: String,
    pub device_id: String,
    pub date: NaiveDate,
}

impl SessionMeta {
    pub fn new(
        subject_id: impl Into<String>,
        session_id: impl Into<String>,
        device_id: impl Into<String>,
        date: NaiveDate,
    ) -> Result<Self> {
        let meta = SessionMeta {
            subject_id: subject_id.into(),
            session_id: session_id.into(),
            device_id: device_id.into(),
            date,
        };
        if meta.subject_id.is_empty() || meta.session_id.is_empty() {
            return Err(Error::config("subject and session ids must be non-empty"));
        }
        if meta.device_id.is_empty() {
            return Err(Error::config(format!(
                "session ({}, {}) has an empty device id",
                meta.subject_id, meta.session_id
            )));
        }
        Ok(meta)
    }

    /// Whole days from `self.date` to `later.date` (negative when `later` is earlier).
    pub fn days_until(&self, later: &SessionMeta) -> i64 {
        (later.date - self.date).num_days()
    }
}

/// Parse a `YYYY-MM-DD` date.
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| Error::config(format!("unparseable date '{s}': {e}")))
}

/// One 1-second multichannel sample, the unit of verification.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub meta: Arc<SessionMeta>,
    pub epoch_index: usize,
    /// channels × time
    pub samples: Array2<f64>,
    pub rate_hz: f64,
}

impl Epoch {
    pub fn new(meta: Arc<SessionMeta>, epoch_index: usize, samples: Array2<f64>, rate_hz: f64) -> Result<Self> {
        let expected = samples_per_epoch(rate_hz)?;
        if samples.ncols() != expected {
            return Err(Error::Dimension { expected, got: samples.ncols() });
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite sample in epoch {epoch_index} of ({}, {}) at channel {}",
                meta.subject_id,
                meta.session_id,
                pos / samples.ncols()
            )));
        }
        Ok(Epoch { meta, epoch_index, samples, rate_hz })
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }
}

/// Samples in a one-second epoch at `rate_hz`.
pub fn samples_per_epoch(rate_hz: f64) -> Result<usize> {
    if !(rate_hz.is_finite() && rate_hz >= 1.0) || (rate_hz - rate_hz.round()).abs() > 1e-9 {
        return Err(Error::config(format!("sampling rate must be a positive integer in Hz, got {rate_hz}")));
    }
    Ok(rate_hz.round() as usize)
}
