use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CANONICAL_LAYOUT_VERSION: u32 = 1;

const CANONICAL_FILE: &str = include_str!("../../data/channels_v1.txt");

/// The frozen 93-label canonical electrode order.
pub fn canonical_labels() -> Vec<String> {
    CANONICAL_FILE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

/// Native-label → canonical-label mapping for one acquisition device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceMap {
    pub device: String,
    pub map: BTreeMap<String, String>,
}

impl DeviceMap {
    pub fn identity(device: impl Into<String>, labels: &[String]) -> Self {
        DeviceMap {
            device: device.into(),
            map: labels.iter().map(|l| (l.clone(), l.clone())).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema { path: path.to_owned(), msg: e.to_string() })
    }

    fn check(&self, canonical: &[String]) -> Result<()> {
        if self.device.is_empty() {
            return Err(Error::config("device map with empty device name"));
        }
        let known: BTreeSet<&str> = canonical.iter().map(String::as_str).collect();
        let mut seen = BTreeSet::new();
        for (native, target) in &self.map {
            if !known.contains(target.as_str()) {
                return Err(Error::config(format!(
                    "device '{}': native '{native}' maps to unknown canonical label '{target}'",
                    self.device
                )));
            }
            if !seen.insert(target.as_str()) {
                return Err(Error::config(format!(
                    "device '{}': canonical label '{target}' is the image of more than one native channel",
                    self.device
                )));
            }
        }
        Ok(())
    }
}

/// Canonical channel order plus the per-device reorderings into it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    canonical: Vec<String>,
    devices: BTreeMap<String, DeviceMap>,
}

impl ChannelMap {
    /// Map over the built-in 93-label layout with no devices registered.
    pub fn standard() -> Self {
        ChannelMap { canonical: canonical_labels(), devices: BTreeMap::new() }
    }

    pub fn with_labels(canonical: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = canonical.iter().collect();
        if unique.len() != canonical.len() || canonical.is_empty() {
            return Err(Error::config("canonical labels must be non-empty and unique"));
        }
        Ok(ChannelMap { canonical, devices: BTreeMap::new() })
    }

    pub fn add_device(&mut self, map: DeviceMap) -> Result<()> {
        map.check(&self.canonical)?;
        self.devices.insert(map.device.clone(), map);
        Ok(())
    }

    pub fn canonical(&self) -> &[String] {
        &self.canonical
    }

    pub fn device(&self, device_id: &str) -> Option<&DeviceMap> {
        self.devices.get(device_id)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.canonical.iter().position(|l| l == label)
    }
}

/// Reorder a native recording into canonical row order.
///
/// `native_labels[i]` names row `i` of `raw`. Native channels without a
/// canonical image are dropped; canonical labels without a source are an error.
pub fn map_channels(
    raw: &Array2<f64>,
    native_labels: &[String],
    device_id: &str,
    map: &ChannelMap,
) -> Result<Array2<f64>> {
    if native_labels.len() != raw.nrows() {
        return Err(Error::Dimension { expected: raw.nrows(), got: native_labels.len() });
    }
    let device = map
        .device(device_id)
        .ok_or_else(|| Error::config(format!("no channel map registered for device '{device_id}'")))?;

    let mut source: HashMap<&str, usize> = HashMap::new();
    for (row, native) in native_labels.iter().enumerate() {
        if let Some(target) = device.map.get(native) {
            source.insert(target.as_str(), row);
        }
    }
    let missing: Vec<String> = map
        .canonical
        .iter()
        .filter(|l| !source.contains_key(l.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingChannels { device: device_id.to_owned(), missing });
    }

    let mut out = Array2::zeros((map.canonical.len(), raw.ncols()));
    for (i, label) in map.canonical.iter().enumerate() {
        out.row_mut(i).assign(&raw.row(source[label.as_str()]));
    }
    Ok(out)
}
