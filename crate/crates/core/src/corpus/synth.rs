//! Seeded synthetic multi-session corpus.
//!
//! Each channel is a sum of AR(2) resonators, one per configured band. A
//! population layer fixes a base centre frequency and amplitude per channel
//! and resonator. Subjects deviate from it mostly through offsets shared by
//! all channels (`subject_freq_sd`, `subject_gain_sd`) plus a smaller
//! channel-specific part (`channel_detail`). Sessions of a subject share
//! these parameters but draw fresh innovations, and perturb resonator gain
//! and frequency through a random walk whose variance grows with elapsed
//! days, plus a per-session jitter, both scaled by `session_drift_scale`.
//! Devices apply a per-channel gain and DC offset; white noise is added last.

use std::path::Path;
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{canonical_labels, load_manifest, samples_per_epoch, CorpusIndex, CorpusWriter, SessionMeta};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    pub gain_range: (f64, f64),
    pub offset_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub sessions_per_subject: usize,
    pub epochs_per_session: usize,
    pub rate_hz: f64,
    /// Minimum gap between consecutive sessions, days.
    pub min_gap_days: u32,
    /// Mean of the exponential excess over `min_gap_days`.
    pub mean_extra_gap_days: f64,
    pub devices: Vec<DeviceProfile>,
    /// Band of the population centre frequency of each resonator, Hz.
    pub resonator_bands: Vec<(f64, f64)>,
    /// Range of the population resonator amplitudes.
    pub amplitude_range: (f64, f64),
    /// Std of the subject's centre-frequency offset, Hz.
    pub subject_freq_sd: f64,
    /// Std of the subject's log-gain offset.
    pub subject_gain_sd: f64,
    /// Relative size of the channel-specific part of the subject offsets.
    pub channel_detail: f64,
    pub pole_radius: f64,
    pub session_drift_scale: f64,
    pub noise_scale: f64,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 20,
            sessions_per_subject: 3,
            epochs_per_session: 10,
            rate_hz: 500.0,
            min_gap_days: 1,
            mean_extra_gap_days: 20.0,
            devices: vec![DeviceProfile { name: "synth-A".into(), gain_range: (0.8, 1.25), offset_range: (-2e-5, 2e-5) }],
            resonator_bands: vec![(4.0, 8.0), (8.0, 13.0), (13.0, 30.0)],
            amplitude_range: (2e-6, 1.2e-5),
            subject_freq_sd: 1.5,
            subject_gain_sd: 0.4,
            channel_detail: 0.3,
            pole_radius: 0.985,
            session_drift_scale: 0.1,
            noise_scale: 4e-6,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("synth: {m}")));
        if self.n_subjects == 0 || self.sessions_per_subject == 0 || self.epochs_per_session == 0 {
            return bad("subject, session and epoch counts must be >= 1");
        }
        samples_per_epoch(self.rate_hz)?;
        if self.devices.is_empty() || self.devices.iter().any(|d| d.name.is_empty()) {
            return bad("at least one named device is required");
        }
        if self.devices.iter().any(|d| d.gain_range.0 <= 0.0 || d.gain_range.1 < d.gain_range.0 || d.offset_range.1 < d.offset_range.0) {
            return bad("device gain ranges must be positive and ordered");
        }
        let nyquist = self.rate_hz / 2.0;
        if self.resonator_bands.is_empty() || self.resonator_bands.iter().any(|&(lo, hi)| !(lo > 0.0 && hi >= lo && hi < nyquist)) {
            return bad("resonator bands must lie in (0, rate/2)");
        }
        if !(self.amplitude_range.0 >= 0.0 && self.amplitude_range.1 >= self.amplitude_range.0) {
            return bad("amplitude range must be non-negative and ordered");
        }
        if !(self.pole_radius > 0.0 && self.pole_radius < 1.0) {
            return bad("pole radius must lie in (0, 1)");
        }
        if !(self.session_drift_scale >= 0.0
            && self.noise_scale >= 0.0
            && self.mean_extra_gap_days >= 0.0
            && self.subject_freq_sd >= 0.0
            && self.subject_gain_sd >= 0.0
            && self.channel_detail >= 0.0)
        {
            return bad("scales must be >= 0");
        }
        Ok(())
    }
}

/// splitmix64 finaliser, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, tag: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(mix(seed ^ tag) ^ a) ^ b) ^ c))
}

const TAG_SCHEDULE: u64 = 1;
const TAG_SIGNATURE: u64 = 2;
const TAG_INNOVATION: u64 = 3;
const TAG_DRIFT: u64 = 4;
const TAG_DEVICE: u64 = 5;
const TAG_NOISE: u64 = 6;
const TAG_POPULATION: u64 = 7;

const BURN_IN: usize = 1000;
/// Hz of centre-frequency shift per unit of drift state.
const FREQ_DRIFT_HZ: f64 = 1.0;

#[derive(Debug, Clone)]
struct Resonator {
    freq: f64,
    amp: f64,
}

/// Session schedule plus lazily generated signal data.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub cfg: SynthConfig,
    pub channels: Vec<String>,
    /// Sorted by (subject, date).
    pub sessions: Vec<Arc<SessionMeta>>,
    /// Index of each session within its subject's sequence.
    ordinal: Vec<usize>,
    subject_index: Vec<usize>,
    /// Elapsed days since the subject's first session.
    elapsed: Vec<i64>,
}

/// Build the deterministic session schedule for `cfg`.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut sessions = Vec::new();
    let mut ordinal = Vec::new();
    let mut subject_index = Vec::new();
    let mut elapsed = Vec::new();
    let extra = Exp::new(1.0 / cfg.mean_extra_gap_days.max(1e-9)).map_err(|e| Error::config(e.to_string()))?;
    for subj in 0..cfg.n_subjects {
        let mut rng = rng_for(cfg.seed, TAG_SCHEDULE, subj as u64, 0, 0);
        let mut day = rng.gen_range(0..365i64);
        let first = day;
        for ses in 0..cfg.sessions_per_subject {
            if ses > 0 {
                let x: f64 = if cfg.mean_extra_gap_days > 0.0 { extra.sample(&mut rng) } else { 0.0 };
                day += cfg.min_gap_days as i64 + x.floor() as i64;
            }
            let device = &cfg.devices[rng.gen_range(0..cfg.devices.len())];
            let meta = SessionMeta::new(
                format!("S{:03}", subj + 1),
                format!("ses{:02}", ses + 1),
                device.name.clone(),
                cfg.start_date + Duration::days(day),
            )?;
            sessions.push(Arc::new(meta));
            ordinal.push(ses);
            subject_index.push(subj);
            elapsed.push(day - first);
        }
    }
    Ok(SynthCorpus { cfg: cfg.clone(), channels: canonical_labels(), sessions, ordinal, subject_index, elapsed })
}

impl SynthCorpus {
    pub fn n_sessions(&self) -> usize {
        self.sessions.len()
    }

    /// Centre frequency and amplitude of every resonator of one channel.
    fn signature(&self, subj: usize, channel: usize) -> Vec<Resonator> {
        let cfg = &self.cfg;
        let (alo, ahi) = cfg.amplitude_range;
        let mut pop = rng_for(cfg.seed, TAG_POPULATION, channel as u64, 0, 0);
        let mut shared = rng_for(cfg.seed, TAG_SIGNATURE, subj as u64, u64::MAX, 0);
        let mut local = rng_for(cfg.seed, TAG_SIGNATURE, subj as u64, channel as u64, 0);
        cfg.resonator_bands
            .iter()
            .map(|&(lo, hi)| {
                let freq = if hi > lo { pop.gen_range(lo..hi) } else { lo };
                let amp = if ahi > alo { pop.gen_range(alo..ahi) } else { alo };
                let (sf, sg): (f64, f64) = (shared.sample(StandardNormal), shared.sample(StandardNormal));
                let (lf, lg): (f64, f64) = (local.sample(StandardNormal), local.sample(StandardNormal));
                Resonator {
                    freq: freq + cfg.subject_freq_sd * (sf + cfg.channel_detail * lf),
                    amp: amp * (cfg.subject_gain_sd * (sg + cfg.channel_detail * lg)).exp(),
                }
            })
            .collect()
    }

    /// Drift state (log-gain, frequency) per resonator at session `ordinal`,
    /// shared by all channels of the subject.
    fn drift(&self, subj: usize, upto: usize) -> Vec<(f64, f64)> {
        let scale = self.cfg.session_drift_scale;
        let n_res = self.cfg.resonator_bands.len();
        let mut walk = vec![(0.0f64, 0.0f64); n_res];
        let mut jitter = vec![(0.0f64, 0.0f64); n_res];
        // sessions of one subject are contiguous in `self.sessions`
        let base = self.subject_index.iter().position(|&s| s == subj).expect("subject present");
        let mut rng = rng_for(self.cfg.seed, TAG_DRIFT, subj as u64, 0, 0);
        let mut prev_day = 0i64;
        for k in 0..=upto {
            let day = self.elapsed[base + k];
            let step = ((day - prev_day) as f64 / 30.0).sqrt();
            prev_day = day;
            for r in 0..n_res {
                let (z1, z2, z3, z4): (f64, f64, f64, f64) = (
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                );
                walk[r].0 += scale * step * z1;
                walk[r].1 += scale * step * z2;
                jitter[r] = (scale * z3, scale * z4);
            }
        }
        walk.iter().zip(&jitter).map(|(w, j)| (w.0 + j.0, w.1 + j.1)).collect()
    }

    /// Effective (frequency, amplitude) per channel and resonator in session `i`.
    fn session_params(&self, i: usize) -> Vec<Vec<(f64, f64)>> {
        let subj = self.subject_index[i];
        let drift = self.drift(subj, self.ordinal[i]);
        let nyq = self.cfg.rate_hz / 2.0;
        (0..self.channels.len())
            .map(|c| {
                self.signature(subj, c)
                    .iter()
                    .zip(&drift)
                    .map(|(res, (log_gain, freq_shift))| {
                        ((res.freq + FREQ_DRIFT_HZ * freq_shift).clamp(0.5, nyq - 0.5), res.amp * log_gain.exp())
                    })
                    .collect()
            })
            .collect()
    }

    /// Continuous recording of session `i`, channels × (epochs · rate) samples.
    pub fn recording(&self, i: usize) -> Array2<f64> {
        let cfg = &self.cfg;
        let meta = &self.sessions[i];
        let subj = self.subject_index[i] as u64;
        let ordinal = self.ordinal[i] as u64;
        let len = cfg.epochs_per_session * cfg.rate_hz.round() as usize;
        let dev_idx = cfg.devices.iter().position(|d| d.name == meta.device_id).expect("device from config");
        let device = &cfg.devices[dev_idx];
        let params = self.session_params(i);

        let rows: Vec<Vec<f64>> = params
            .par_iter()
            .enumerate()
            .map(|(c, channel)| {
                let mut out = vec![0.0; len];
                for (r, &(freq, amp)) in channel.iter().enumerate() {
                    let rho = cfg.pole_radius;
                    let a1 = 2.0 * rho * (2.0 * std::f64::consts::PI * freq / cfg.rate_hz).cos();
                    let a2 = -rho * rho;
                    // innovation variance giving a unit-variance stationary process
                    let var_ratio = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
                    let sigma = amp / var_ratio.sqrt();
                    let mut rng = rng_for(cfg.seed, TAG_INNOVATION, subj, (ordinal << 32) | c as u64, r as u64);
                    let (mut y1, mut y2) = (0.0f64, 0.0f64);
                    for t in 0..BURN_IN + len {
                        let e: f64 = rng.sample(StandardNormal);
                        let y = a1 * y1 + a2 * y2 + sigma * e;
                        y2 = y1;
                        y1 = y;
                        if t >= BURN_IN {
                            out[t - BURN_IN] += y;
                        }
                    }
                }
                let mut drng = rng_for(cfg.seed, TAG_DEVICE, dev_idx as u64, c as u64, 0);
                let (glo, ghi) = device.gain_range;
                let (olo, ohi) = device.offset_range;
                let gain = if ghi > glo { drng.gen_range(glo..ghi) } else { glo };
                let offset = if ohi > olo { drng.gen_range(olo..ohi) } else { olo };
                let mut nrng = rng_for(cfg.seed, TAG_NOISE, subj, (ordinal << 32) | c as u64, 0);
                for v in out.iter_mut() {
                    let n: f64 = nrng.sample(StandardNormal);
                    *v = gain * *v + offset + cfg.noise_scale * n;
                }
                out
            })
            .collect();
        Array2::from_shape_fn((self.channels.len(), len), |(c, t)| rows[c][t])
    }

    /// Session `i` cut into contiguous 1-s epochs.
    pub fn epochs(&self, i: usize) -> Vec<Array2<f64>> {
        let rec = self.recording(i);
        let n = self.cfg.rate_hz.round() as usize;
        (0..self.cfg.epochs_per_session).map(|k| rec.slice(s![.., k * n..(k + 1) * n]).to_owned()).collect()
    }

    /// Write the corpus in manifest + epoch-file form and return its index.
    pub fn write_to(&self, dir: &Path) -> Result<CorpusIndex> {
        let mut w = CorpusWriter::create(dir, self.cfg.rate_hz, self.channels.clone(), false)?;
        for (i, meta) in self.sessions.iter().enumerate() {
            w.write_session(meta, &self.epochs(i))?;
        }
        load_manifest(&w.finish()?)
    }
}
