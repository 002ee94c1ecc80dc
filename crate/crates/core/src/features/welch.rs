use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex64, Fft, FftPlanner};

use super::{FeatureVector, PsdSpec};
use crate::corpus::Epoch;
use crate::{Error, Result};

/// Precomputed taper and FFT plan for Welch averaging.
#[derive(Clone)]
pub struct WelchPlan {
    rate_hz: f64,
    segment_len: usize,
    step: usize,
    taper: Vec<f64>,
    /// sum of squared taper values
    taper_power: f64,
    fft: Arc<dyn Fft<f64>>,
    bins: Vec<usize>,
}

impl std::fmt::Debug for WelchPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WelchPlan")
            .field("rate_hz", &self.rate_hz)
            .field("segment_len", &self.segment_len)
            .field("step", &self.step)
            .field("bins", &self.bins.len())
            .finish()
    }
}

impl WelchPlan {
    pub fn new(spec: &PsdSpec, rate_hz: f64) -> Result<Self> {
        let n = spec.segment_len;
        if n < 2 {
            return Err(Error::config("segment_len must be >= 2"));
        }
        let overlap = (spec.overlap * n as f64).round() as usize;
        let step = (n - overlap.min(n - 1)).max(1);
        let taper: Vec<f64> = match spec.taper.as_str() {
            // periodic Hann
            "hann" => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            "boxcar" => vec![1.0; n],
            other => return Err(Error::config(format!("unknown taper '{other}'"))),
        };
        let taper_power = taper.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(WelchPlan { rate_hz, segment_len: n, step, taper, taper_power, fft, bins: Self::band_bins(spec, rate_hz) })
    }

    /// One-sided bin indices whose centre frequency lies in the band (inclusive).
    pub fn band_bins(spec: &PsdSpec, rate_hz: f64) -> Vec<usize> {
        let df = rate_hz / spec.segment_len as f64;
        (0..=spec.segment_len / 2)
            .filter(|&k| {
                let f = k as f64 * df;
                f >= spec.band.0 - 1e-9 && f <= spec.band.1 + 1e-9
            })
            .collect()
    }

    pub fn bin_width(&self) -> f64 {
        self.rate_hz / self.segment_len as f64
    }

    /// One-sided power spectral density (units²/Hz) for bins 0..=n/2.
    pub fn spectrum(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.segment_len;
        if x.len() < n {
            return Err(Error::config(format!("segment_len {n} exceeds signal length {}", x.len())));
        }
        let n_seg = (x.len() - n) / self.step + 1;
        let half = n / 2;
        let mut acc = vec![0.0; half + 1];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for s in 0..n_seg {
            let seg = &x[s * self.step..s * self.step + n];
            for ((b, v), w) in buf.iter_mut().zip(seg).zip(&self.taper) {
                *b = Complex64::new(v * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
        }
        let scale = 1.0 / (self.rate_hz * self.taper_power * n_seg as f64);
        for (k, a) in acc.iter_mut().enumerate() {
            *a *= scale;
            // fold negative frequencies; DC and (even-length) Nyquist appear once
            if k != 0 && !(n % 2 == 0 && k == half) {
                *a *= 2.0;
            }
        }
        Ok(acc)
    }

    pub fn features(&self, epoch: &Epoch, feature_id: Arc<str>) -> Result<FeatureVector> {
        let mut vec = Vec::with_capacity(self.bins.len() * epoch.n_channels());
        let mut row = Vec::with_capacity(epoch.samples.ncols());
        for r in epoch.samples.rows() {
            row.clear();
            row.extend(r.iter().copied());
            let spec = self.spectrum(&row)?;
            vec.extend(self.bins.iter().map(|&k| spec[k]));
        }
        Ok(FeatureVector { meta: epoch.meta.clone(), epoch_index: epoch.epoch_index, vec, feature_id })
    }
}

/// Full one-sided Welch spectrum of a single channel.
pub fn welch_spectrum(x: &[f64], rate_hz: f64, spec: &PsdSpec) -> Result<Vec<f64>> {
    WelchPlan::new(spec, rate_hz)?.spectrum(x)
}

/// Band-limited Welch PSD of every channel of `epoch`, concatenated.
pub fn welch_psd(epoch: &Epoch, spec: &PsdSpec, feature_id: Arc<str>) -> Result<FeatureVector> {
    WelchPlan::new(spec, epoch.rate_hz)?.features(epoch, feature_id)
}
