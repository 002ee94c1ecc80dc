use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hamming,
    Hann,
    Blackman,
}

impl Window {
    fn coeff(self, n: usize, len: usize) -> f64 {
        if len == 1 {
            return 1.0;
        }
        let x = 2.0 * PI * n as f64 / (len - 1) as f64;
        match self {
            Window::Hamming => 0.54 - 0.46 * x.cos(),
            Window::Hann => 0.5 - 0.5 * x.cos(),
            Window::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterKind {
    /// Passband `[low_hz, high_hz]`; each edge has its own transition width
    /// extending outward from the passband.
    Bandpass { low_hz: f64, high_hz: f64, low_trans_hz: f64, high_trans_hz: f64 },
    /// Stopband of `bandwidth_hz` around `center_hz`; passband starts
    /// `trans_hz` beyond the stopband edges.
    Notch { center_hz: f64, bandwidth_hz: f64, trans_hz: f64 },
}

/// Linear-phase FIR design request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(flatten)]
    pub kind: FilterKind,
    /// Odd tap count; `None` picks the smallest odd count meeting the response targets.
    #[serde(default)]
    pub n_taps: Option<usize>,
    #[serde(default = "default_window")]
    pub window: Window,
}

fn default_window() -> Window {
    Window::Hamming
}

/// Maximum passband deviation, dB.
pub const PASSBAND_RIPPLE_DB: f64 = 1.0;
/// Minimum bandpass stopband attenuation, dB.
pub const BANDPASS_STOP_DB: f64 = 40.0;
/// Minimum notch attenuation at the centre frequency, dB.
pub const NOTCH_STOP_DB: f64 = 20.0;

impl FilterSpec {
    /// 1–50 Hz bandpass. The low transition spans 0.2–1 Hz, the high one 50–62.5 Hz.
    pub fn eeg_bandpass() -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass { low_hz: 1.0, high_hz: 50.0, low_trans_hz: 0.8, high_trans_hz: 12.5 },
            n_taps: None,
            window: Window::Hamming,
        }
    }

    pub fn notch(center_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Notch { center_hz, bandwidth_hz: 2.0, trans_hz: 1.0 },
            n_taps: None,
            window: Window::Hamming,
        }
    }

    pub fn validate(&self, rate_hz: f64) -> Result<()> {
        let nyq = rate_hz / 2.0;
        let bad = |m: String| Err(Error::config(m));
        match self.kind {
            FilterKind::Bandpass { low_hz, high_hz, low_trans_hz, high_trans_hz } => {
                if !(0.0 < low_hz && low_hz < high_hz && high_hz < nyq) {
                    return bad(format!("bandpass edges must satisfy 0 < {low_hz} < {high_hz} < {nyq}"));
                }
                if !(low_trans_hz > 0.0 && low_trans_hz <= low_hz && high_trans_hz > 0.0) {
                    return bad("bandpass transition widths must be positive and the low one <= low edge".into());
                }
            }
            FilterKind::Notch { center_hz, bandwidth_hz, trans_hz } => {
                if !(bandwidth_hz > 0.0 && trans_hz > 0.0) {
                    return bad("notch bandwidth and transition must be positive".into());
                }
                if !(center_hz - bandwidth_hz / 2.0 - trans_hz > 0.0 && center_hz + bandwidth_hz / 2.0 + trans_hz < nyq) {
                    return bad(format!("notch at {center_hz} Hz does not fit below Nyquist {nyq}"));
                }
            }
        }
        if let Some(n) = self.n_taps {
            if n % 2 == 0 || n < 3 {
                return bad(format!("n_taps must be odd and >= 3, got {n}"));
            }
        }
        Ok(())
    }

    fn cache_key(&self, rate_hz: f64) -> String {
        format!("{:?}@{}", self, rate_hz)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Ideal lowpass impulse response with cutoff `fc`, centred at tap `m`.
fn lowpass_tap(fc: f64, rate_hz: f64, k: f64) -> f64 {
    let w = 2.0 * fc / rate_hz;
    w * sinc(w * k)
}

fn windowed(spec: &FilterSpec, rate_hz: f64, n: usize) -> Vec<f64> {
    let mid = (n - 1) / 2;
    let nyq = rate_hz / 2.0;
    (0..n)
        .map(|i| {
            let k = (i as f64 - mid as f64).abs();
            let ideal = match spec.kind {
                FilterKind::Bandpass { low_hz, high_hz, low_trans_hz, high_trans_hz } => {
                    let fl = low_hz - low_trans_hz / 2.0;
                    let fh = (high_hz + high_trans_hz / 2.0).min(nyq);
                    lowpass_tap(fh, rate_hz, k) - lowpass_tap(fl, rate_hz, k)
                }
                FilterKind::Notch { center_hz, bandwidth_hz, .. } => {
                    let delta = if i == mid { 1.0 } else { 0.0 };
                    let f1 = center_hz - bandwidth_hz / 2.0;
                    let f2 = center_hz + bandwidth_hz / 2.0;
                    delta - (lowpass_tap(f2, rate_hz, k) - lowpass_tap(f1, rate_hz, k))
                }
            };
            ideal * spec.window.coeff(i.min(n - 1 - i), n)
        })
        .collect()
}

/// Zero-phase amplitude response of symmetric taps at `freq_hz`.
pub fn amplitude_response(taps: &[f64], rate_hz: f64, freq_hz: f64) -> f64 {
    let mid = (taps.len() - 1) / 2;
    let w = 2.0 * PI * freq_hz / rate_hz;
    let mut acc = taps[mid];
    for k in 1..=mid {
        acc += 2.0 * taps[mid + k] * (w * k as f64).cos();
    }
    acc
}

fn db(a: f64) -> f64 {
    20.0 * a.abs().max(1e-300).log10()
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if *v.last().unwrap() < hi {
        v.push(hi);
    }
    v
}

/// (frequency, predicate over dB) checks the design must satisfy, hardest first.
fn requirements(spec: &FilterSpec, rate_hz: f64) -> Vec<(f64, bool)> {
    // (freq, is_stop): stop => dB <= -target; pass => |dB| <= ripple
    let nyq = rate_hz / 2.0;
    let mut out = Vec::new();
    match spec.kind {
        FilterKind::Bandpass { low_hz, high_hz, low_trans_hz, high_trans_hz } => {
            let low_stop = low_hz - low_trans_hz;
            let high_stop = high_hz + high_trans_hz;
            out.push((low_stop, true));
            out.push((low_hz, false));
            out.push((high_hz, false));
            if high_stop < nyq {
                out.push((high_stop, true));
            }
            out.extend(grid(0.0, low_stop, 0.05).into_iter().map(|f| (f, true)));
            out.extend(grid(low_hz, high_hz, 0.25).into_iter().map(|f| (f, false)));
            out.extend(grid(high_stop, nyq, 0.5).into_iter().map(|f| (f, true)));
        }
        FilterKind::Notch { center_hz, bandwidth_hz, trans_hz } => {
            let lo_pass = center_hz - bandwidth_hz / 2.0 - trans_hz;
            let hi_pass = center_hz + bandwidth_hz / 2.0 + trans_hz;
            out.push((center_hz, true));
            out.push((lo_pass, false));
            out.push((hi_pass, false));
            out.extend(grid(0.0, lo_pass, 0.25).into_iter().map(|f| (f, false)));
            out.extend(grid(hi_pass, nyq, 0.5).into_iter().map(|f| (f, false)));
        }
    }
    out
}

fn stop_target(spec: &FilterSpec) -> f64 {
    match spec.kind {
        FilterKind::Bandpass { .. } => BANDPASS_STOP_DB,
        FilterKind::Notch { .. } => NOTCH_STOP_DB,
    }
}

fn meets(spec: &FilterSpec, rate_hz: f64, taps: &[f64], reqs: &[(f64, bool)]) -> bool {
    let target = stop_target(spec);
    reqs.iter().all(|&(f, stop)| {
        let d = db(amplitude_response(taps, rate_hz, f));
        if stop {
            d <= -target
        } else {
            d.abs() <= PASSBAND_RIPPLE_DB
        }
    })
}

const MAX_TAPS: usize = 16_385;

fn cache() -> &'static Mutex<HashMap<String, Vec<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Vec<f64>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Design symmetric (linear-phase) windowed-sinc taps for `spec`.
pub fn design_fir(spec: &FilterSpec, rate_hz: f64) -> Result<Vec<f64>> {
    spec.validate(rate_hz)?;
    if let Some(n) = spec.n_taps {
        return Ok(windowed(spec, rate_hz, n));
    }
    let key = spec.cache_key(rate_hz);
    if let Some(t) = cache().lock().expect("fir cache").get(&key) {
        return Ok(t.clone());
    }
    let reqs = requirements(spec, rate_hz);
    let narrowest = match spec.kind {
        FilterKind::Bandpass { low_trans_hz, high_trans_hz, .. } => low_trans_hz.min(high_trans_hz),
        FilterKind::Notch { trans_hz, .. } => trans_hz,
    };
    // start well below the usual window-method estimate and walk up
    let estimate = (1.5 * rate_hz / narrowest) as usize;
    let mut n = (estimate.max(3) | 1).min(MAX_TAPS);
    loop {
        let taps = windowed(spec, rate_hz, n);
        if meets(spec, rate_hz, &taps, &reqs) {
            cache().lock().expect("fir cache").insert(key, taps.clone());
            return Ok(taps);
        }
        n += 2;
        if n > MAX_TAPS {
            return Err(Error::config(format!("no design with <= {MAX_TAPS} taps meets the response targets for {spec:?}")));
        }
    }
}

/// Linear-phase FIR filtering with group-delay compensation.
///
/// Each row is reflection-padded by (n_taps − 1)/2 samples on both sides and
/// convolved through an FFT; the output is aligned with the input.
pub fn filter_zero_phase(x: &Array2<f64>, taps: &[f64]) -> Result<Array2<f64>> {
    let n_taps = taps.len();
    if n_taps % 2 == 0 {
        return Err(Error::stage("filter", format!("tap count {n_taps} is even")));
    }
    let t_len = x.ncols();
    if t_len <= n_taps {
        return Err(Error::stage("filter", format!("signal length {t_len} must exceed filter length {n_taps}")));
    }
    let half = (n_taps - 1) / 2;
    let padded = t_len + 2 * half;
    let fft_len = (padded + n_taps - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut kernel: Vec<Complex64> = taps.iter().map(|&h| Complex64::new(h, 0.0)).collect();
    kernel.resize(fft_len, Complex64::new(0.0, 0.0));
    fwd.process(&mut kernel);
    let scale = 1.0 / fft_len as f64;

    let rows: Vec<Vec<f64>> = x
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
            for (j, slot) in buf.iter_mut().take(padded).enumerate() {
                let src = j as isize - half as isize;
                let idx = if src < 0 {
                    (-src) as usize
                } else if src as usize >= t_len {
                    2 * (t_len - 1) - src as usize
                } else {
                    src as usize
                };
                *slot = Complex64::new(row[idx], 0.0);
            }
            fwd.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&kernel) {
                *b *= k;
            }
            inv.process(&mut buf);
            (0..t_len).map(|t| buf[t + 2 * half].re * scale).collect()
        })
        .collect();
    Ok(Array2::from_shape_fn(x.dim(), |(c, t)| rows[c][t]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 500.0;

    fn tone(freq: f64, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((1, n), |(_, t)| (2.0 * PI * freq * t as f64 / FS).sin())
    }

    fn rms(v: impl Iterator<Item = f64>) -> f64 {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
        (s / n as f64).sqrt()
    }

    /// Direct time-domain oracle of the same filter (no FFT).
    fn direct(x: &[f64], taps: &[f64]) -> Vec<f64> {
        let half = (taps.len() - 1) / 2;
        let n = x.len() as isize;
        (0..x.len())
            .map(|t| {
                taps.iter()
                    .enumerate()
                    .map(|(k, h)| {
                        let mut i = t as isize + half as isize - k as isize;
                        if i < 0 {
                            i = -i;
                        } else if i >= n {
                            i = 2 * (n - 1) - i;
                        }
                        h * x[i as usize]
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn bandpass_taps_are_symmetric_and_odd() {
        let taps = design_fir(&FilterSpec::eeg_bandpass(), FS).unwrap();
        let n = taps.len();
        assert_eq!(n % 2, 1);
        for i in 0..n {
            assert_eq!(taps[i], taps[n - 1 - i]);
        }
    }

    #[test]
    fn bandpass_response_targets() {
        let taps = design_fir(&FilterSpec::eeg_bandpass(), FS).unwrap();
        let resp = |f| db(amplitude_response(&taps, FS, f));
        assert!(resp(10.0).abs() <= 1.0);
        assert!(resp(100.0) <= -40.0);
        assert!(resp(0.2) <= -40.0);
        for f in [5.0, 20.0, 40.0] {
            assert!(resp(f).abs() <= 1.0, "{f}: {}", resp(f));
        }
    }

    #[test]
    fn response_matches_dft_of_taps() {
        // the cosine-sum shortcut equals |DFT| for symmetric taps
        let taps = design_fir(&FilterSpec { n_taps: Some(101), ..FilterSpec::eeg_bandpass() }, FS).unwrap();
        for f in [0.2, 10.0, 57.0, 100.0] {
            let w = 2.0 * PI * f / FS;
            let (re, im) = taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, h)| {
                (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin())
            });
            let mag = (re * re + im * im).sqrt();
            assert!((mag - amplitude_response(&taps, FS, f).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_filter_matches_direct_convolution() {
        let taps = design_fir(&FilterSpec { n_taps: Some(31), ..FilterSpec::eeg_bandpass() }, FS).unwrap();
        let x: Vec<f64> = (0..200).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3 + (i as f64 * 0.1).sin()).collect();
        let m = Array2::from_shape_vec((1, 200), x.clone()).unwrap();
        let got = filter_zero_phase(&m, &taps).unwrap();
        let want = direct(&x, &taps);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn in_band_tone_has_zero_lag() {
        let taps = design_fir(&FilterSpec::eeg_bandpass(), FS).unwrap();
        let x = tone(10.0, 6000);
        let y = filter_zero_phase(&x, &taps).unwrap();
        let (lo, hi) = (2000, 4000);
        let xcorr = |lag: isize| -> f64 {
            (lo..hi).map(|t| x[[0, t]] * y[[0, (t as isize + lag) as usize]]).sum()
        };
        let best = (-25..=25).max_by(|a, b| xcorr(*a).partial_cmp(&xcorr(*b)).unwrap()).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn out_of_band_tone_suppressed() {
        let taps = design_fir(&FilterSpec::eeg_bandpass(), FS).unwrap();
        let x = tone(60.0, 6000);
        let y = filter_zero_phase(&x, &taps).unwrap();
        let ratio = rms((2000..4000).map(|t| y[[0, t]])) / rms((2000..4000).map(|t| x[[0, t]]));
        assert!(ratio <= 0.01, "{ratio}");
    }

    #[test]
    fn zero_in_zero_out() {
        let taps = design_fir(&FilterSpec::notch(50.0), FS).unwrap();
        let y = filter_zero_phase(&Array2::zeros((2, 3000)), &taps).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn short_signal_rejected() {
        let taps = vec![0.25, 0.5, 0.25];
        assert!(filter_zero_phase(&Array2::zeros((1, 3)), &taps).is_err());
        assert!(filter_zero_phase(&Array2::zeros((1, 4)), &taps).is_ok());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = FilterSpec::eeg_bandpass();
        spec.kind = FilterKind::Bandpass { low_hz: 1.0, high_hz: 300.0, low_trans_hz: 0.5, high_trans_hz: 5.0 };
        assert!(design_fir(&spec, FS).is_err());
        assert!(design_fir(&FilterSpec { n_taps: Some(10), ..FilterSpec::eeg_bandpass() }, FS).is_err());
        assert!(design_fir(&FilterSpec::notch(249.0), FS).is_err());
    }
}
