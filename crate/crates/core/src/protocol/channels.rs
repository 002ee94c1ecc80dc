use ndarray::Array2;

use crate::{Error, Result};

/// Electrode subset of a consumer headset, in device order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelPreset {
    pub name: &'static str,
    pub labels: &'static [&'static str],
}

pub const PRESETS: [ChannelPreset; 3] = [
    ChannelPreset {
        name: "emotiv14",
        labels: &["AF3", "F7", "F3", "FC5", "T7", "P7", "O1", "O2", "P8", "T8", "FC6", "F4", "F8", "AF4"],
    },
    ChannelPreset { name: "dsi7", labels: &["FCz", "Pz", "P3", "P4", "PO7", "PO8", "Oz"] },
    ChannelPreset { name: "muse4", labels: &["TP9", "AF7", "AF8", "TP10"] },
];

pub fn preset(name: &str) -> Result<&'static ChannelPreset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| Error::UnknownPreset {
        name: name.to_owned(),
        known: PRESETS.iter().map(|p| p.name.to_owned()).collect(),
    })
}

/// Row indices of the preset labels within `channels`, in preset order.
pub fn preset_indices(channels: &[String], preset: &ChannelPreset) -> Result<Vec<usize>> {
    let mut idx = Vec::with_capacity(preset.labels.len());
    let mut missing = Vec::new();
    for l in preset.labels {
        match channels.iter().position(|c| c == l) {
            Some(i) => idx.push(i),
            None => missing.push(l.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingChannels { device: format!("preset {}", preset.name), missing });
    }
    Ok(idx)
}

/// Restrict a channels x samples matrix to the preset rows.
pub fn select_channels(x: &Array2<f64>, channels: &[String], preset: &ChannelPreset) -> Result<Array2<f64>> {
    if x.nrows() != channels.len() {
        return Err(Error::Dimension { expected: channels.len(), got: x.nrows() });
    }
    let idx = preset_indices(channels, preset)?;
    Ok(x.select(ndarray::Axis(0), &idx))
}
