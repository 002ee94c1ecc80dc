use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{parse_date, read_epoch_file, read_epoch_header, samples_per_epoch, write_epoch_file, Epoch, SessionMeta};
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "corpus.json";

/// `corpus.json` as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub rate_hz: f64,
    pub channels: Vec<String>,
    #[serde(default)]
    pub preprocessed: bool,
    pub sessions: Vec<ManifestSession>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSession {
    pub subject: String,
    pub session: String,
    pub device: String,
    pub date: String,
    pub epochs_file: String,
    pub n_epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionEntry {
    pub meta: Arc<SessionMeta>,
    pub epochs_file: PathBuf,
    pub n_epochs: usize,
    /// Stimulus onsets, in samples, within the session's concatenated recording.
    pub stimuli: Vec<usize>,
}

/// Validated, immutable view of a corpus on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    pub root: PathBuf,
    pub rate_hz: f64,
    pub channels: Vec<String>,
    pub preprocessed: bool,
    /// Sorted by (subject, date, session).
    pub sessions: Vec<SessionEntry>,
}

/// Load and validate `corpus.json` (or the manifest at `path`).
pub fn load_manifest(path: &Path) -> Result<CorpusIndex> {
    let path = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_owned() };
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let schema = |msg: String| Error::Schema { path: path.clone(), msg };
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(schema(format!("unsupported version {}", manifest.version)));
    }
    let samples = samples_per_epoch(manifest.rate_hz).map_err(|e| schema(e.to_string()))?;
    let unique: BTreeSet<&String> = manifest.channels.iter().collect();
    if manifest.channels.is_empty() || unique.len() != manifest.channels.len() {
        return Err(schema("channel labels must be non-empty and unique".into()));
    }

    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen = BTreeSet::new();
    let mut sessions = Vec::with_capacity(manifest.sessions.len());
    for s in &manifest.sessions {
        if !seen.insert((s.subject.clone(), s.session.clone())) {
            return Err(Error::DuplicateSession { subject: s.subject.clone(), session: s.session.clone() });
        }
        let date = parse_date(&s.date).map_err(|e| schema(e.to_string()))?;
        let meta = SessionMeta::new(&s.subject, &s.session, &s.device, date).map_err(|e| schema(e.to_string()))?;
        let file = root.join(&s.epochs_file);
        if !file.exists() {
            return Err(Error::MissingFile(file));
        }
        let header = read_epoch_header(&file)?;
        if header.n_channels as usize != manifest.channels.len()
            || header.n_epochs as usize != s.n_epochs
            || header.samples_per_epoch as usize != samples
            || (header.rate_hz as f64 - manifest.rate_hz).abs() > 1e-3
        {
            return Err(Error::EpochFile {
                path: file,
                msg: format!(
                    "header {:?} disagrees with manifest ({} channels, {} epochs, {} Hz)",
                    header,
                    manifest.channels.len(),
                    s.n_epochs,
                    manifest.rate_hz
                ),
            });
        }
        sessions.push(SessionEntry {
            meta: Arc::new(meta),
            epochs_file: file,
            n_epochs: s.n_epochs,
            stimuli: (0..s.n_epochs).map(|k| k * samples).collect(),
        });
    }
    sessions.sort_by(|a, b| {
        (&a.meta.subject_id, a.meta.date, &a.meta.session_id).cmp(&(&b.meta.subject_id, b.meta.date, &b.meta.session_id))
    });
    Ok(CorpusIndex { root, rate_hz: manifest.rate_hz, channels: manifest.channels, preprocessed: manifest.preprocessed, sessions })
}

impl CorpusIndex {
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.sessions.iter().map(|s| &s.meta.subject_id).collect();
        set.into_iter().cloned().collect()
    }

    pub fn sessions_of<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = &'a SessionEntry> + 'a {
        self.sessions.iter().filter(move |s| s.meta.subject_id == subject)
    }

    pub fn find(&self, subject: &str, session: &str) -> Option<&SessionEntry> {
        self.sessions.iter().find(|s| s.meta.subject_id == subject && s.meta.session_id == session)
    }

    pub fn load_epochs(&self, entry: &SessionEntry) -> Result<Vec<Epoch>> {
        let (_, mats) = read_epoch_file(&entry.epochs_file)?;
        mats.into_iter()
            .enumerate()
            .map(|(k, m)| Epoch::new(entry.meta.clone(), k, m, self.rate_hz))
            .collect()
    }

    /// The session's epochs concatenated in time, with their onsets.
    pub fn load_recording(&self, entry: &SessionEntry) -> Result<(Array2<f64>, Vec<usize>)> {
        let (_, mats) = read_epoch_file(&entry.epochs_file)?;
        if mats.is_empty() {
            return Ok((Array2::zeros((self.channels.len(), 0)), Vec::new()));
        }
        let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
        let rec = concatenate(Axis(1), &views).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok((rec, entry.stimuli.clone()))
    }
}

/// Streams sessions to disk and writes the manifest last.
pub struct CorpusWriter {
    dir: PathBuf,
    rate_hz: f64,
    channels: Vec<String>,
    preprocessed: bool,
    sessions: Vec<(SessionMeta, ManifestSession)>,
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

impl CorpusWriter {
    pub fn create(dir: &Path, rate_hz: f64, channels: Vec<String>, preprocessed: bool) -> Result<Self> {
        std::fs::create_dir_all(dir.join("epochs")).map_err(|e| Error::io(dir, e))?;
        Ok(CorpusWriter { dir: dir.to_owned(), rate_hz, channels, preprocessed, sessions: Vec::new() })
    }

    pub fn write_session(&mut self, meta: &SessionMeta, epochs: &[Array2<f64>]) -> Result<()> {
        if let Some(e) = epochs.iter().find(|e| e.nrows() != self.channels.len()) {
            return Err(Error::Dimension { expected: self.channels.len(), got: e.nrows() });
        }
        let rel = format!("epochs/{}__{}.eege", file_stem(&meta.subject_id), file_stem(&meta.session_id));
        write_epoch_file(&self.dir.join(&rel), self.rate_hz, epochs)?;
        self.sessions.push((
            meta.clone(),
            ManifestSession {
                subject: meta.subject_id.clone(),
                session: meta.session_id.clone(),
                device: meta.device_id.clone(),
                date: meta.date.format("%Y-%m-%d").to_string(),
                epochs_file: rel,
                n_epochs: epochs.len(),
            },
        ));
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.sessions.sort_by(|a, b| {
            (&a.0.subject_id, a.0.date, &a.0.session_id).cmp(&(&b.0.subject_id, b.0.date, &b.0.session_id))
        });
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            rate_hz: self.rate_hz,
            channels: self.channels,
            preprocessed: self.preprocessed,
            sessions: self.sessions.into_iter().map(|(_, s)| s).collect(),
        };
        let path = self.dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
