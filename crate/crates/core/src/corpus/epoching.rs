use ndarray::{s, Array2};

use crate::{Error, Result};

/// Epochs cut from a continuous recording plus counts of rejected stimuli.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStream {
    /// (stimulus offset, channels × rate_hz window)
    pub epochs: Vec<(usize, Array2<f64>)>,
    /// Stimuli starting inside the previous kept epoch.
    pub skipped_overlap: usize,
    /// Stimuli whose 1-s window runs past the end of the recording.
    pub skipped_truncated: usize,
}

impl EpochStream {
    pub fn skipped(&self) -> usize {
        self.skipped_overlap + self.skipped_truncated
    }
}

/// Cut non-overlapping 1-s windows starting at each stimulus offset.
///
/// Overlapping stimuli keep the first window; truncated windows are counted,
/// not fatal.
pub fn epoch_stream(recording: &Array2<f64>, rate_hz: f64, stimuli: &[usize]) -> Result<EpochStream> {
    let len = super::samples_per_epoch(rate_hz)?;
    if stimuli.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::stage("epoching", "stimulus offsets must be strictly increasing"));
    }
    let total = recording.ncols();
    let mut out = EpochStream { epochs: Vec::new(), skipped_overlap: 0, skipped_truncated: 0 };
    let mut next_free = 0usize;
    for &start in stimuli {
        if start < next_free {
            out.skipped_overlap += 1;
            continue;
        }
        if start + len > total {
            out.skipped_truncated += 1;
            continue;
        }
        out.epochs.push((start, recording.slice(s![.., start..start + len]).to_owned()));
        next_free = start + len;
    }
    if out.skipped() > 0 {
        log::warn!(
            "epoching skipped {} overlapping and {} truncated stimuli",
            out.skipped_overlap,
            out.skipped_truncated
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(t: usize) -> Array2<f64> {
        Array2::from_shape_fn((3, t), |(c, i)| (c * 10_000 + i) as f64)
    }

    #[test]
    fn two_stimuli_two_epochs() {
        let out = epoch_stream(&rec(1500), 500.0, &[0, 500]).unwrap();
        assert_eq!(out.epochs.len(), 2);
        assert!(out.epochs.iter().all(|(_, e)| e.ncols() == 500));
        assert_eq!(out.epochs[1].1[[0, 0]], 500.0);
        assert_eq!(out.skipped(), 0);
    }

    #[test]
    fn overlapping_stimulus_skipped() {
        let out = epoch_stream(&rec(1500), 500.0, &[0, 250]).unwrap();
        assert_eq!(out.epochs.len(), 1);
        assert_eq!(out.skipped_overlap, 1);
    }

    #[test]
    fn truncated_stimulus_counted() {
        let out = epoch_stream(&rec(1500), 500.0, &[1400]).unwrap();
        assert!(out.epochs.is_empty());
        assert_eq!(out.skipped_truncated, 1);
    }

    #[test]
    fn non_increasing_offsets_rejected() {
        assert!(epoch_stream(&rec(1500), 500.0, &[500, 500]).is_err());
    }

    proptest! {
        #[test]
        fn epochs_never_overlap(mut stim in proptest::collection::btree_set(0usize..3000, 0..40)) {
            let stim: Vec<usize> = std::mem::take(&mut stim).into_iter().collect();
            let out = epoch_stream(&rec(2500), 100.0, &stim).unwrap();
            for w in out.epochs.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 + 100);
            }
            prop_assert!(out.epochs.iter().all(|(s, e)| e.ncols() == 100 && s + 100 <= 2500));
            prop_assert_eq!(out.epochs.len() + out.skipped(), stim.len());
        }
    }
}
