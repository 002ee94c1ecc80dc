use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrialRow;
use crate::metrics::{compute_eer, mean_std, roc_curve};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectCountRow {
    pub n_subjects: usize,
    pub repeats: usize,
    pub mean_eer: f64,
    /// Population std across repeats.
    pub std_eer: f64,
}

/// EER over random subject subsets of each size in `sizes`.
///
/// Each repeat keeps the trials whose claimed and probe subjects are both in
/// the drawn subset. One generator seeded by `seed` serves all draws.
pub fn bootstrap_subject_count(
    rows: &[TrialRow],
    subjects: &[String],
    sizes: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<SubjectCountRow>> {
    if repeats == 0 {
        return Err(Error::config("repeats must be >= 1"));
    }
    let universe: Vec<&String> = subjects.iter().collect::<BTreeSet<_>>().into_iter().collect();
    for &n in sizes {
        if n < 2 {
            return Err(Error::config(format!(
                "subject count {n} < 2: at least one genuine user and one impostor are required"
            )));
        }
        if n > universe.len() {
            return Err(Error::config(format!("subject count {n} exceeds the {} available subjects", universe.len())));
        }
    }
    let index: std::collections::BTreeMap<&str, usize> =
        universe.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let coded: Vec<(Option<usize>, Option<usize>, bool, f64)> = rows
        .iter()
        .map(|r| (index.get(r.claimed.as_str()).copied(), index.get(r.probe_subject.as_str()).copied(), r.genuine, r.score))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut eers = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let mut member = vec![false; universe.len()];
            for i in sample(&mut rng, universe.len(), n) {
                member[i] = true;
            }
            let inside = |x: Option<usize>| x.map(|i| member[i]).unwrap_or(false);
            let (mut g, mut im) = (Vec::new(), Vec::new());
            for (c, p, genuine, s) in &coded {
                if inside(*c) && inside(*p) {
                    if *genuine {
                        g.push(*s);
                    } else {
                        im.push(*s);
                    }
                }
            }
            eers.push(compute_eer(&roc_curve(&g, &im)?));
        }
        let (mean_eer, std_eer) = mean_std(&eers);
        out.push(SubjectCountRow { n_subjects: n, repeats, mean_eer, std_eer });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rows(n_subj: usize, seed: u64) -> (Vec<TrialRow>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subjects: Vec<String> = (0..n_subj).map(|i| format!("S{i:02}")).collect();
        let mut out = Vec::new();
        for c in &subjects {
            for p in &subjects {
                for b in 0..3 {
                    let genuine = c == p;
                    let score = rng.gen::<f64>() + if genuine { 0.6 } else { 0.0 };
                    out.push(TrialRow {
                        claimed: c.clone(),
                        probe_subject: p.clone(),
                        probe_session: "v".into(),
                        block: b,
                        genuine,
                        score,
                        delta_days: 1,
                        enroll_device: "d".into(),
                        probe_device: "d".into(),
                    });
                }
            }
        }
        (out, subjects)
    }

    #[test]
    fn full_set_has_zero_std() {
        let (r, s) = rows(8, 1);
        let t = bootstrap_subject_count(&r, &s, &[8], 50, 3).unwrap();
        assert_eq!(t[0].std_eer, 0.0);
    }

    #[test]
    fn small_subsets_vary_more() {
        let (r, s) = rows(20, 2);
        let t = bootstrap_subject_count(&r, &s, &[5, 20], 50, 4).unwrap();
        assert!(t[0].std_eer > t[1].std_eer);
    }

    #[test]
    fn one_subject_is_rejected() {
        let (r, s) = rows(4, 1);
        let e = bootstrap_subject_count(&r, &s, &[1], 5, 0).unwrap_err();
        assert!(e.is_validation());
        assert!(bootstrap_subject_count(&r, &s, &[5], 5, 0).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (r, s) = rows(10, 5);
        let a = bootstrap_subject_count(&r, &s, &[2, 3, 6], 20, 9).unwrap();
        let b = bootstrap_subject_count(&r, &s, &[2, 3, 6], 20, 9).unwrap();
        assert_eq!(a, b);
    }
}
