//! Embedding interchange: line-delimited JSON records and the binary "EMBD"
//! variant (header mirrors the epoch file; vectors stored as f32).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{check_uniform, FeatureVector};
use crate::corpus::{parse_date, CorpusIndex, SessionMeta};
use crate::{Error, Result};

pub const EMBD_MAGIC: &[u8; 4] = b"EMBD";
const EMBD_VERSION: u16 = 1;

/// One line of the JSONL interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub subject: String,
    pub session: String,
    pub device: String,
    pub date: String,
    pub epoch: usize,
    pub model: String,
    pub vec: Vec<f64>,
}

impl From<&FeatureVector> for EmbeddingRecord {
    fn from(v: &FeatureVector) -> Self {
        EmbeddingRecord {
            subject: v.meta.subject_id.clone(),
            session: v.meta.session_id.clone(),
            device: v.meta.device_id.clone(),
            date: v.meta.date.format("%Y-%m-%d").to_string(),
            epoch: v.epoch_index,
            model: v.feature_id.to_string(),
            vec: v.vec.clone(),
        }
    }
}

fn emb_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Embedding(format!("{}: {msg}", path.display()))
}

/// Interns session metadata so vectors of one session share one `Arc`.
#[derive(Default)]
struct MetaPool(HashMap<(String, String), Arc<SessionMeta>>);

impl MetaPool {
    fn get(&mut self, subject: &str, session: &str, device: &str, date: NaiveDate) -> Result<Arc<SessionMeta>> {
        let key = (subject.to_owned(), session.to_owned());
        if let Some(m) = self.0.get(&key) {
            if m.device_id != device || m.date != date {
                return Err(Error::Embedding(format!("inconsistent device/date for ({subject}, {session})")));
            }
            return Ok(m.clone());
        }
        let m = Arc::new(SessionMeta::new(subject, session, device, date)?);
        self.0.insert(key, m.clone());
        Ok(m)
    }
}

pub fn write_jsonl(path: &Path, vectors: &[FeatureVector]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for v in vectors {
        let line = serde_json::to_string(&EmbeddingRecord::from(v)).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<FeatureVector>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pool = MetaPool::default();
    let mut ids: HashMap<String, Arc<str>> = HashMap::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| emb_err(path, format!("line {lineno}: {e}")))?;
        if let Some(k) = rec.vec.iter().position(|v| !v.is_finite()) {
            return Err(emb_err(path, format!("line {lineno}: non-finite entry at index {k}")));
        }
        let date = parse_date(&rec.date).map_err(|e| emb_err(path, format!("line {lineno}: {e}")))?;
        let meta = pool
            .get(&rec.subject, &rec.session, &rec.device, date)
            .map_err(|e| emb_err(path, format!("line {lineno}: {e}")))?;
        let id = ids.entry(rec.model.clone()).or_insert_with(|| rec.model.as_str().into()).clone();
        if let Some(first) = out.first().map(|v: &FeatureVector| v.dim()) {
            if first != rec.vec.len() {
                return Err(emb_err(path, format!("line {lineno}: dimension {} differs from {first}", rec.vec.len())));
            }
        }
        out.push(FeatureVector { meta, epoch_index: rec.epoch, vec: rec.vec, feature_id: id });
    }
    check_uniform(&out).map_err(|e| emb_err(path, e))?;
    Ok(out)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| std::io::Error::other("string longer than 65535 bytes"))?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = r.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(std::io::Error::other)
}

const EPOCH_DAY: NaiveDate = match NaiveDate::from_ymd_opt(1970, 1, 1) {
    Some(d) => d,
    None => panic!(),
};

/// Binary layout: magic "EMBD", u16 version, u16 tag length, u32 n_vectors,
/// u32 dim, tag bytes; then per record subject/session/device as
/// u16-length-prefixed UTF-8, i32 days since 1970-01-01, u32 epoch index and
/// `dim` little-endian f32 values.
pub fn write_embd(path: &Path, vectors: &[FeatureVector]) -> Result<()> {
    let (tag, dim) = check_uniform(vectors)?.unwrap_or_else(|| ("".into(), 0));
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(EMBD_MAGIC)?;
        w.write_u16::<LittleEndian>(EMBD_VERSION)?;
        w.write_u16::<LittleEndian>(tag.len() as u16)?;
        w.write_u32::<LittleEndian>(vectors.len() as u32)?;
        w.write_u32::<LittleEndian>(dim as u32)?;
        w.write_all(tag.as_bytes())?;
        for v in vectors {
            write_str(w, &v.meta.subject_id)?;
            write_str(w, &v.meta.session_id)?;
            write_str(w, &v.meta.device_id)?;
            w.write_i32::<LittleEndian>((v.meta.date - EPOCH_DAY).num_days() as i32)?;
            w.write_u32::<LittleEndian>(v.epoch_index as u32)?;
            for x in &v.vec {
                w.write_f32::<LittleEndian>(*x as f32)?;
            }
        }
        w.flush()
    };
    run(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_embd(path: &Path) -> Result<Vec<FeatureVector>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| emb_err(path, "truncated header"))?;
    if &magic != EMBD_MAGIC {
        return Err(emb_err(path, "bad magic, expected \"EMBD\""));
    }
    let trunc = |e: std::io::Error| emb_err(path, format!("truncated or malformed: {e}"));
    let version = r.read_u16::<LittleEndian>().map_err(trunc)?;
    if version != EMBD_VERSION {
        return Err(emb_err(path, format!("unsupported version {version}")));
    }
    let tag_len = r.read_u16::<LittleEndian>().map_err(trunc)? as usize;
    let n = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let mut tag = vec![0u8; tag_len];
    r.read_exact(&mut tag).map_err(trunc)?;
    let tag: Arc<str> = String::from_utf8(tag).map_err(|e| emb_err(path, e))?.into();
    let mut pool = MetaPool::default();
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0f32; dim];
    for k in 0..n {
        let subject = read_str(&mut r).map_err(trunc)?;
        let session = read_str(&mut r).map_err(trunc)?;
        let device = read_str(&mut r).map_err(trunc)?;
        let days = r.read_i32::<LittleEndian>().map_err(trunc)?;
        let epoch = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        r.read_f32_into::<LittleEndian>(&mut buf).map_err(trunc)?;
        if let Some(j) = buf.iter().position(|v| !v.is_finite()) {
            return Err(emb_err(path, format!("record {k}: non-finite entry at index {j}")));
        }
        let meta = pool.get(&subject, &session, &device, EPOCH_DAY + chrono::Duration::days(days as i64))?;
        out.push(FeatureVector {
            meta,
            epoch_index: epoch,
            vec: buf.iter().map(|v| *v as f64).collect(),
            feature_id: tag.clone(),
        });
    }
    Ok(out)
}

fn is_jsonl(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl") | Some("ndjson") | Some("json"))
}

/// Write a feature store; `.jsonl` paths get text records, anything else EMBD.
pub fn write_store(path: &Path, vectors: &[FeatureVector]) -> Result<()> {
    if is_jsonl(path) {
        write_jsonl(path, vectors)
    } else {
        write_embd(path, vectors)
    }
}

pub fn read_store(path: &Path) -> Result<Vec<FeatureVector>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    if is_jsonl(path) {
        read_jsonl(path)
    } else {
        read_embd(path)
    }
}

/// Read embeddings and join them against the corpus manifest.
///
/// Every (subject, session) must exist in the corpus with the same device and
/// date; the returned vectors share the corpus' session metadata.
pub fn import_embeddings(path: &Path, corpus: Option<&CorpusIndex>) -> Result<Vec<FeatureVector>> {
    let mut vectors = read_store(path)?;
    if vectors.is_empty() {
        return Err(emb_err(path, "no records"));
    }
    if let Some(corpus) = corpus {
        for v in &mut vectors {
            let entry = corpus.find(&v.meta.subject_id, &v.meta.session_id).ok_or_else(|| {
                emb_err(path, format!("unknown session key ({}, {})", v.meta.subject_id, v.meta.session_id))
            })?;
            if entry.meta.device_id != v.meta.device_id || entry.meta.date != v.meta.date {
                return Err(emb_err(
                    path,
                    format!("({}, {}) disagrees with the manifest on device/date", v.meta.subject_id, v.meta.session_id),
                ));
            }
            v.meta = entry.meta.clone();
        }
    }
    Ok(vectors)
}
