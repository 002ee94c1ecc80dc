use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::{Error, Result};

pub const EPOCH_MAGIC: &[u8; 4] = b"EEGE";
const EPOCH_VERSION: u16 = 1;

/// Fixed 20-byte header of an epoch file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochHeader {
    pub n_channels: u16,
    pub n_epochs: u32,
    pub samples_per_epoch: u32,
    pub rate_hz: f32,
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::EpochFile { path: path.to_owned(), msg: msg.into() }
}

fn parse_header<R: Read>(r: &mut R, path: &Path) -> Result<EpochHeader> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad(path, "truncated header"))?;
    if &magic != EPOCH_MAGIC {
        return Err(bad(path, format!("bad magic {:?}, expected \"EEGE\"", String::from_utf8_lossy(&magic))));
    }
    let io = |e: std::io::Error| bad(path, format!("truncated header: {e}"));
    let version = r.read_u16::<LittleEndian>().map_err(io)?;
    if version != EPOCH_VERSION {
        return Err(bad(path, format!("unsupported version {version}")));
    }
    Ok(EpochHeader {
        n_channels: r.read_u16::<LittleEndian>().map_err(io)?,
        n_epochs: r.read_u32::<LittleEndian>().map_err(io)?,
        samples_per_epoch: r.read_u32::<LittleEndian>().map_err(io)?,
        rate_hz: r.read_f32::<LittleEndian>().map_err(io)?,
    })
}

pub fn read_epoch_header(path: &Path) -> Result<EpochHeader> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_header(&mut BufReader::new(f), path)
}

/// Read every epoch of a file as channels × samples matrices.
pub fn read_epoch_file(path: &Path) -> Result<(EpochHeader, Vec<Array2<f64>>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let header = parse_header(&mut r, path)?;
    let (c, s) = (header.n_channels as usize, header.samples_per_epoch as usize);
    let mut buf = vec![0f32; c * s];
    let mut epochs = Vec::with_capacity(header.n_epochs as usize);
    for k in 0..header.n_epochs {
        r.read_f32_into::<LittleEndian>(&mut buf)
            .map_err(|_| bad(path, format!("truncated data in epoch {k}")))?;
        if let Some(pos) = buf.iter().position(|v| !v.is_finite()) {
            return Err(bad(path, format!("non-finite value in epoch {k}, channel {}", pos / s)));
        }
        epochs.push(Array2::from_shape_fn((c, s), |(i, j)| buf[i * s + j] as f64));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(bad(path, "trailing bytes after last epoch"));
    }
    Ok((header, epochs))
}

pub fn write_epoch_file(path: &Path, rate_hz: f64, epochs: &[Array2<f64>]) -> Result<()> {
    let (c, s) = epochs.first().map(|e| e.dim()).unwrap_or((0, rate_hz as usize));
    if epochs.iter().any(|e| e.dim() != (c, s)) {
        return Err(bad(path, "epochs of differing shape"));
    }
    let n_channels = u16::try_from(c).map_err(|_| bad(path, "too many channels"))?;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    w.write_all(EPOCH_MAGIC).map_err(io)?;
    w.write_u16::<LittleEndian>(EPOCH_VERSION).map_err(io)?;
    w.write_u16::<LittleEndian>(n_channels).map_err(io)?;
    w.write_u32::<LittleEndian>(epochs.len() as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(s as u32).map_err(io)?;
    w.write_f32::<LittleEndian>(rate_hz as f32).map_err(io)?;
    for e in epochs {
        for v in e.iter() {
            w.write_f32::<LittleEndian>(*v as f32).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.eege");
        let e = Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f64);
        write_epoch_file(&p, 3.0, &[e.clone(), e.clone()]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"EEGE");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..8], &[2, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[3, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &3.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 2 * 6 * 4);
        // channel-major: second value is channel 0, sample 1
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        let (h, back) = read_epoch_file(&p).unwrap();
        assert_eq!(h.n_epochs, 2);
        assert_eq!(back, vec![e.clone(), e]);
    }

    #[test]
    fn corrupt_magic_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.eege");
        std::fs::write(&p, b"XXXX\x01\x00").unwrap();
        let err = read_epoch_file(&p).unwrap_err().to_string();
        assert!(err.contains("bad.eege") && err.contains("magic"), "{err}");
    }

    #[test]
    fn truncated_data_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.eege");
        write_epoch_file(&p, 2.0, &[Array2::zeros((1, 2))]).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 2);
        std::fs::write(&p, bytes).unwrap();
        assert!(read_epoch_file(&p).is_err());
    }
}
