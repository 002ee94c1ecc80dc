//! Preprocessing chain: common average reference, zero-phase FIR bandpass,
//! line-noise notch and robust per-channel normalization, followed by
//! stimulus-aligned epoching.

mod fir;
mod normalize;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::{epoch_stream, EpochStream};
use crate::{Error, Result};

pub use fir::{
    amplitude_response, design_fir, filter_zero_phase, FilterKind, FilterSpec, Window, BANDPASS_STOP_DB,
    NOTCH_STOP_DB, PASSBAND_RIPPLE_DB,
};
pub use normalize::{median_iqr, quantile_sorted, robust_normalize, DEFAULT_IQR_EPSILON};

/// Subtract the instantaneous cross-channel mean from every channel.
pub fn apply_car(x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.nrows() < 2 {
        return Err(Error::stage("car", format!("needs at least 2 channels, got {}", x.nrows())));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    Ok(x - &mean.insert_axis(Axis(0)))
}

/// Band-stop the given line frequency (2 Hz wide) with a zero-phase FIR.
pub fn notch(x: &Array2<f64>, rate_hz: f64, center_hz: f64) -> Result<Array2<f64>> {
    let taps = design_fir(&FilterSpec::notch(center_hz), rate_hz)?;
    filter_zero_phase(x, &taps)
}

/// [`notch`] at 50 Hz.
pub fn notch_50hz(x: &Array2<f64>, rate_hz: f64) -> Result<Array2<f64>> {
    notch(x, rate_hz, 50.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub car: bool,
    pub bandpass: Option<FilterSpec>,
    pub notch: Option<FilterSpec>,
    pub normalize: bool,
    pub iqr_epsilon: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            car: true,
            bandpass: Some(FilterSpec::eeg_bandpass()),
            notch: Some(FilterSpec::notch(50.0)),
            normalize: true,
            iqr_epsilon: DEFAULT_IQR_EPSILON,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, rate_hz: f64) -> Result<()> {
        if let Some(b) = &self.bandpass {
            if !matches!(b.kind, FilterKind::Bandpass { .. }) {
                return Err(Error::config("preprocess.bandpass must be a bandpass filter"));
            }
            b.validate(rate_hz)?;
        }
        if let Some(n) = &self.notch {
            if !matches!(n.kind, FilterKind::Notch { .. }) {
                return Err(Error::config("preprocess.notch must be a notch filter"));
            }
            n.validate(rate_hz)?;
        }
        if !(self.iqr_epsilon >= 0.0) {
            return Err(Error::config("iqr_epsilon must be >= 0"));
        }
        Ok(())
    }
}

fn in_stage<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { msg, .. } => Error::Stage { stage, msg },
        Error::DegenerateChannel { .. } => e,
        other => Error::Stage { stage, msg: other.to_string() },
    })
}

/// Run the filter/normalize chain on a continuous recording, then epoch it.
pub fn preprocess_recording(recording: &Array2<f64>, rate_hz: f64, cfg: &PreprocessConfig) -> Result<Array2<f64>> {
    cfg.validate(rate_hz)?;
    let mut x = if cfg.car { in_stage("car", apply_car(recording))? } else { recording.clone() };
    if let Some(spec) = &cfg.bandpass {
        let taps = in_stage("bandpass", design_fir(spec, rate_hz))?;
        x = in_stage("bandpass", filter_zero_phase(&x, &taps))?;
    }
    if let Some(spec) = &cfg.notch {
        let taps = in_stage("notch", design_fir(spec, rate_hz))?;
        x = in_stage("notch", filter_zero_phase(&x, &taps))?;
    }
    if cfg.normalize {
        x = in_stage("normalize", robust_normalize(&x, cfg.iqr_epsilon))?;
    }
    Ok(x)
}

/// CAR → bandpass → notch → normalize on the whole recording, then epoch.
pub fn preprocess_pipeline(
    recording: &Array2<f64>,
    rate_hz: f64,
    stimuli: &[usize],
    cfg: &PreprocessConfig,
) -> Result<EpochStream> {
    let clean = preprocess_recording(recording, rate_hz, cfg)?;
    epoch_stream(&clean, rate_hz, stimuli)
}
