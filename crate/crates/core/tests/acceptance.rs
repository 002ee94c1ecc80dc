//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use eegauth::corpus::{synth_corpus, SessionMeta, SynthConfig};
use eegauth::features::{burg, welch_spectrum, FeatureVector, PsdSpec};
use eegauth::matching::ScorerConfig;
use eegauth::metrics::{compute_eer, frr_at_far, roc_curve};
use eegauth::pipeline::{evaluate, extract_features, PipelineConfig};
use eegauth::preprocess::{
    amplitude_response, apply_car, design_fir, filter_zero_phase, median_iqr, robust_normalize, FilterSpec,
    DEFAULT_IQR_EPSILON,
};
use eegauth::protocol::{
    bootstrap_subject_count, fit_scaling_curve, generate_trials, split_enroll_verify, EnrollRule, FeatureSet,
    ProtocolConfig, TrialRow, VerifyRule,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn eer(g: &[f64], i: &[f64]) -> f64 {
    compute_eer(&roc_curve(g, i).unwrap())
}

/// Rates counted directly at every midpoint between adjacent distinct scores,
/// then linearly interpolated at the first FAR ≥ FRR point.
fn oracle_eer(g: &[f64], i: &[f64]) -> f64 {
    let mut all: Vec<f64> = g.iter().chain(i).copied().collect();
    all.sort_by(|a, b| b.partial_cmp(a).unwrap());
    all.dedup();
    let mut cuts = vec![f64::INFINITY];
    cuts.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    cuts.push(f64::NEG_INFINITY);
    let rates: Vec<(f64, f64)> = cuts
        .iter()
        .map(|t| {
            let far = i.iter().filter(|s| *s > t).count() as f64 / i.len() as f64;
            let frr = g.iter().filter(|s| *s < t).count() as f64 / g.len() as f64;
            (far, frr)
        })
        .collect();
    let k = rates.iter().position(|(a, r)| a - r >= 0.0).unwrap();
    let (a1, r1) = rates[k];
    if a1 == r1 {
        return a1;
    }
    if k == 0 {
        return 0.5 * (a1 + r1);
    }
    let (a0, r0) = rates[k - 1];
    let t = (r0 - a0) / ((a1 - r1) + (r0 - a0));
    (a0 + t * (a1 - a0)).clamp(0.0, 1.0)
}

fn random_set(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let ng = rng.gen_range(5..=500);
    let ni = rng.gen_range(5..=500);
    let shift: f64 = rng.gen_range(0.0..3.0);
    // coarse rounding on some sets produces ties
    let q = if rng.gen_bool(0.3) { 10.0 } else { 1e9 };
    let mut draw = |m: f64, n: usize| -> Vec<f64> {
        (0..n).map(|_| ((m + { let z: f64 = StandardNormal.sample(&mut *rng); z }) * q).round() / q).collect()
    };
    let g = draw(shift, ng);
    let i = draw(0.0, ni);
    (g, i)
}

fn eer_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (g, i) = random_set(&mut rng);
        worst = worst.max((eer(&g, &i) - oracle_eer(&g, &i)).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    check(worst <= 1e-9 && secs < 30.0, format!("max |diff| {worst:.2e} over 1000 sets in {secs:.1}s"))
}

fn monotone_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (g, i) = random_set(&mut rng);
    let base = eer(&g, &i);
    let mut mismatches = 0;
    for _ in 0..100 {
        let a: f64 = rng.gen_range(0.1..5.0);
        let b: f64 = rng.gen_range(-10.0..10.0);
        let c: f64 = rng.gen_range(0.05..1.0);
        let kind = rng.gen_range(0..3);
        let f = |x: f64| match kind {
            0 => a * x + b,
            1 => (c * x).exp() + b,
            _ => a * (c * x).atan() + x.powi(3) + b,
        };
        let gt: Vec<f64> = g.iter().map(|x| f(*x)).collect();
        let it: Vec<f64> = i.iter().map(|x| f(*x)).collect();
        if eer(&gt, &it) != base {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches}/100 transforms changed the EER"))
}

fn frr_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..1000 {
        let (g, i) = random_set(&mut rng);
        let roc = roc_curve(&g, &i).unwrap();
        let (a, b, c) = (frr_at_far(&roc, 1e-4), frr_at_far(&roc, 1e-3), frr_at_far(&roc, 1e-2));
        if !(a >= b && b >= c) {
            bad += 1;
        }
    }
    check(bad == 0, format!("{bad}/1000 sets violate FRR(0.01%) >= FRR(0.1%) >= FRR(1%)"))
}

fn tone(freq: f64, rate: f64, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((1, n), |(_, t)| (2.0 * std::f64::consts::PI * freq * t as f64 / rate).sin())
}

fn db(amp: f64) -> f64 {
    20.0 * amp.abs().max(1e-300).log10()
}

fn dsp_suite() -> Outcome {
    let t0 = Instant::now();
    let rate = 500.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Array2::from_shape_fn((8, 2000), |_| rng.gen_range(-50.0..50.0));
    let car = apply_car(&x).unwrap();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    let worst_mean = car.columns().into_iter().map(|c| c.mean().unwrap().abs()).fold(0.0, f64::max);

    let bp = design_fir(&FilterSpec::eeg_bandpass(), rate).unwrap();
    let stop = [0.2, 100.0].map(|f| -db(amplitude_response(&bp, rate, f)));
    let ripple = [5.0, 10.0, 20.0, 40.0].map(|f| db(amplitude_response(&bp, rate, f)).abs());
    let nt = design_fir(&FilterSpec::notch(50.0), rate).unwrap();
    let notch_stop = -db(amplitude_response(&nt, rate, 50.0));
    let notch_pass = db(amplitude_response(&nt, rate, 40.0)).abs();

    let sig = tone(10.0, rate, 6000);
    let out = filter_zero_phase(&sig, &bp).unwrap();
    let xcorr = |lag: isize| -> f64 { (2000..4000).map(|t| sig[[0, t]] * out[[0, (t as isize + lag) as usize]]).sum() };
    let lag = (-25..=25isize).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();

    let secs = t0.elapsed().as_secs_f64();
    let max_ripple = ripple.iter().cloned().fold(0.0, f64::max);
    let ok = worst_mean < 1e-6 * rms
        && stop.iter().all(|a| *a >= 40.0)
        && max_ripple <= 1.0
        && notch_stop >= 20.0
        && notch_pass <= 1.0
        && lag == 0
        && secs < 60.0;
    check(
        ok,
        format!(
            "CAR mean/rms {:.1e}; stop {:.1}/{:.1} dB; ripple {:.3} dB; notch {:.1} dB, 40 Hz {:.3} dB; lag {lag}; {secs:.1}s",
            worst_mean / rms,
            stop[0],
            stop[1],
            max_ripple,
            notch_stop,
            notch_pass
        ),
    )
}

fn robust_norm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array2::from_shape_fn((4, 1001), |_| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v * 3.0 + 1.0
    });
    let y = robust_normalize(&x, DEFAULT_IQR_EPSILON).unwrap();
    let mut worst_stat = 0.0f64;
    for row in y.rows() {
        let (m, iqr) = median_iqr(row.iter().copied());
        worst_stat = worst_stat.max(m.abs()).max((iqr - 1.0).abs());
    }
    let z = robust_normalize(&x.mapv(|v| 7.5 * v - 40.0), DEFAULT_IQR_EPSILON).unwrap();
    let worst_affine = y.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        worst_stat <= 1e-6 && worst_affine <= 1e-9,
        format!("median/IQR error {worst_stat:.1e}; affine diff {worst_affine:.1e}"),
    )
}

fn ar_recovery() -> Outcome {
    let mut mean = [0.0; 2];
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0f64; 700];
        for t in 2..x.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = 0.75 * x[t - 1] - 0.5 * x[t - 2] + e;
        }
        let fit = burg(&x[200..], 2).unwrap();
        mean[0] += fit.coeffs[0] / 100.0;
        mean[1] += fit.coeffs[1] / 100.0;
    }
    check(
        (mean[0] - 0.75).abs() <= 0.1 && (mean[1] + 0.5).abs() <= 0.1,
        format!("mean a = [{:.4}, {:.4}]", mean[0], mean[1]),
    )
}

fn psd() -> Outcome {
    let spec = PsdSpec::default();
    let rate = 500.0;
    let sig: Vec<f64> = tone(10.0, rate, 500).row(0).to_vec();
    let s = welch_spectrum(&sig, rate, &spec).unwrap();
    let peak = (0..s.len()).max_by(|a, b| s[*a].total_cmp(&s[*b])).unwrap();
    let df = rate / spec.segment_len as f64;
    let expected = (10.0 / df).round() as usize;
    let mut ratio = 0.0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = x.iter().sum::<f64>() / 500.0;
        let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 500.0;
        let total: f64 = welch_spectrum(&x, rate, &spec).unwrap().iter().sum::<f64>() * df;
        ratio += total / var / 50.0;
    }
    check(
        peak == expected && (ratio - 1.0).abs() < 0.1,
        format!("peak bin {peak} (want {expected}); Parseval ratio {ratio:.4}"),
    )
}

fn hand_corpus(layout: &[(&str, &str, i64, usize)]) -> FeatureSet {
    let base = chrono::NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    let mut v = Vec::new();
    for (k, (subj, ses, day, n)) in layout.iter().enumerate() {
        let meta = std::sync::Arc::new(SessionMeta::new(*subj, *ses, "dev", base + chrono::Duration::days(*day)).unwrap());
        for e in 0..*n {
            v.push(FeatureVector { meta: meta.clone(), epoch_index: e, vec: vec![k as f64, e as f64, 1.0], feature_id: "hand".into() });
        }
    }
    FeatureSet::from_vectors(v).unwrap()
}

fn counts(fs: &FeatureSet, cfg: &ProtocolConfig, n: usize) -> (usize, usize, usize) {
    let split = split_enroll_verify(&fs.metas(), cfg).unwrap();
    let ts = generate_trials(fs, &split, n).unwrap();
    (ts.n_genuine(), ts.n_impostor(), ts.probes.len())
}

fn protocol_enumeration() -> Outcome {
    let two = |epochs: usize| hand_corpus(&[("A", "e", 0, 2), ("A", "v", 3, epochs), ("B", "e", 0, 2), ("B", "v", 5, epochs)]);
    let d = ProtocolConfig::default();
    let n1 = counts(&two(2), &d, 1);
    let n2 = counts(&two(5), &d, 2);
    let n4 = counts(&two(3), &d, 4);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut leaks = 0;
    for _ in 0..100 {
        let n_subj = rng.gen_range(2..6);
        let mut layout = Vec::new();
        let names: Vec<String> = (0..n_subj).map(|s| format!("S{s}")).collect();
        let sess: Vec<String> = (0..6).map(|s| format!("x{s}")).collect();
        for name in &names {
            let n_sess = rng.gen_range(1..6);
            let mut day = 0;
            for s in sess.iter().take(n_sess) {
                day += rng.gen_range(1..40);
                layout.push((name.as_str(), s.as_str(), day, rng.gen_range(1..6)));
            }
        }
        let fs = hand_corpus(&layout);
        let cfg = ProtocolConfig {
            enroll_rule: EnrollRule::FirstK(rng.gen_range(1..3)),
            verify_rule: if rng.gen_bool(0.5) { VerifyRule::AllRemaining } else { VerifyRule::NextSessionOnly },
            ..Default::default()
        };
        let Ok(split) = split_enroll_verify(&fs.metas(), &cfg) else { continue };
        let Ok(ts) = generate_trials(&fs, &split, rng.gen_range(1..4)) else { continue };
        for p in &ts.probes {
            let enrolled = split
                .subjects
                .iter()
                .find(|s| s.subject == p.meta.subject_id)
                .map(|s| s.enroll.iter().any(|k| fs.sessions[*k].meta == p.meta))
                .unwrap_or(false);
            if enrolled {
                leaks += 1;
            }
        }
    }
    let ok = (n1.0, n1.1) == (4, 4) && n2.2 == 4 && (n2.0, n2.1) == (4, 4) && n4.2 == 0 && leaks == 0;
    check(
        ok,
        format!(
            "n=1 {}+{}; n=2 (5 epochs) {} probes; n=4 (3 epochs) {} probes; enrollment probes over 100 configs {leaks}",
            n1.0, n1.1, n2.2, n4.2
        ),
    )
}

fn trial_eer(rows: &[TrialRow]) -> f64 {
    let g: Vec<f64> = rows.iter().filter(|r| r.genuine).map(|r| r.score).collect();
    let i: Vec<f64> = rows.iter().filter(|r| !r.genuine).map(|r| r.score).collect();
    eer(&g, &i)
}

fn features(synth: &SynthConfig, preset: Option<&str>) -> FeatureSet {
    let corpus = synth_corpus(synth).unwrap();
    let pipe = PipelineConfig { channel_preset: preset.map(str::to_owned), ..Default::default() };
    extract_features(&corpus, &pipe).unwrap()
}

fn run_eer(fs: &FeatureSet, k: usize, n: usize) -> f64 {
    let p = ProtocolConfig { enroll_rule: EnrollRule::FirstK(k), verification_samples: n, ..Default::default() };
    trial_eer(&evaluate(fs, &p, &ScorerConfig::default()).unwrap().rows)
}

fn synthetic_trends() -> Outcome {
    let t0 = Instant::now();
    let seeds = 10;
    let mut m = [0.0f64; 5];
    for seed in 0..seeds {
        let low = SynthConfig { seed, ..Default::default() };
        let high = SynthConfig { session_drift_scale: 2.0 * low.session_drift_scale, ..low.clone() };
        let full = features(&low, None);
        let vals = [
            run_eer(&full, 1, 1),
            run_eer(&full, 1, 4),
            run_eer(&full, 2, 1),
            run_eer(&features(&high, None), 1, 1),
            run_eer(&features(&low, Some("muse4")), 1, 1),
        ];
        for (a, v) in m.iter_mut().zip(vals) {
            *a += v / seeds as f64;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let [base, n4, k2, drift2, muse4] = m;
    let ok = base <= 0.10 && drift2 > base && n4 < base && k2 <= base && muse4 >= base - 0.005 && secs < 600.0;
    check(
        ok,
        format!(
            "mean EER base {:.2}%, 2x drift {:.2}%, n=4 {:.2}%, 2 enroll {:.2}%, muse4 {:.2}%; {secs:.0}s",
            100.0 * base,
            100.0 * drift2,
            100.0 * n4,
            100.0 * k2,
            100.0 * muse4
        ),
    )
}

fn bootstrap() -> Outcome {
    let fs = features(&SynthConfig::default(), None);
    let ev = evaluate(&fs, &ProtocolConfig::default(), &ScorerConfig::default()).unwrap();
    let subjects = ev.split.subject_names();
    let full = subjects.len();
    let rows = bootstrap_subject_count(&ev.rows, &subjects, &[5, 20, full], 50, 1).unwrap();
    let ok = full == 20 && rows[0].std_eer > rows[1].std_eer && rows[2].std_eer == 0.0;
    check(
        ok,
        format!("std EER N=5 {:.3}%, N=20 {:.3}%, N=full({full}) {}", 100.0 * rows[0].std_eer, 100.0 * rows[1].std_eer, rows[2].std_eer),
    )
}

fn scaling() -> Outcome {
    let exact = fit_scaling_curve(&[(10.0, 0.3), (1000.0, 0.1)]).unwrap();
    let exact_err = (exact.b + 0.1).abs().max((exact.a - 0.4).abs());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pts: Vec<(f64, f64)> = (0..30)
        .map(|k| {
            let n = 10f64.powf(1.0 + 3.0 * k as f64 / 29.0);
            let noise: f64 = StandardNormal.sample(&mut rng);
            (n, 0.35 - 0.06 * n.log10() + 0.005 * noise)
        })
        .collect();
    let noisy = fit_scaling_curve(&pts).unwrap();
    let rel = (noisy.b / -0.06 - 1.0).abs();
    check(exact_err < 1e-12 && rel < 0.1, format!("2-point error {exact_err:.1e}; noisy slope {:.4} (rel err {:.1}%)", noisy.b, 100.0 * rel))
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_eegauth"))
        .args(args)
        .env_remove("EEGAUTH_CONFIG")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let corpus = root.join("synth");
    if !run_cli(&["synth", "--subjects", "6", "--sessions", "3", "--epochs", "6", "--seed", "3", "--out", &s(&corpus)]) {
        return Err("synth failed".into());
    }
    let corpus_dir = s(&corpus.join("corpus"));
    let store = root.join("extract");
    if !run_cli(&["extract", "--corpus", &corpus_dir, "--out", &s(&store)]) {
        return Err("extract failed".into());
    }
    let feats = s(&store.join("features.embd"));
    let points = root.join("points.csv");
    std::fs::write(&points, "n_subjects,eer\n5,0.2\n10,0.16\n20,0.11\n").unwrap();
    let pts = s(&points);
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("evaluate", vec!["evaluate", "--features", &feats]),
        ("time-intervals", vec!["analyze", "time-intervals", "--features", &feats]),
        ("subject-count", vec!["analyze", "subject-count", "--features", &feats, "--repeats", "10"]),
        ("cross-device", vec!["analyze", "cross-device", "--features", &feats]),
        ("channels", vec!["analyze", "channels", "--corpus", &corpus_dir, "--preset", "muse4"]),
        ("scaling", vec!["analyze", "scaling", "--points", &pts]),
        ("enroll-update", vec!["analyze", "enroll-update", "--features", &feats]),
    ];
    let mut failed = Vec::new();
    for (name, args) in &commands {
        let mut outs = Vec::new();
        for run in 0..2 {
            let dir = root.join(format!("{name}-{run}"));
            let mut a = args.clone();
            let d = s(&dir);
            a.extend(["--seed", "11", "--out", &d]);
            if !run_cli(&a) {
                failed.push(format!("{name} exited non-zero"));
            }
            outs.push(files(&dir));
        }
        if outs[0].is_empty() || outs[0] != outs[1] {
            failed.push(format!("{name} differs"));
        }
    }
    check(failed.is_empty(), if failed.is_empty() { format!("{} commands byte-identical across runs", commands.len()) } else { failed.join("; ") })
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("EER oracle equivalence", eer_oracle),
        ("Monotone-transform invariance", monotone_invariance),
        ("FRR@FAR monotonicity", frr_monotone),
        ("DSP suite", dsp_suite),
        ("Robust normalization", robust_norm),
        ("AR recovery", ar_recovery),
        ("PSD", psd),
        ("Protocol enumeration", protocol_enumeration),
        ("End-to-end synthetic trends", synthetic_trends),
        ("Subject-count bootstrap", bootstrap),
        ("Scaling fit", scaling),
        ("Determinism", determinism),
    ];
    let mut failures = 0;
    for (name, f) in criteria {
        match f() {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failures += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("{} criteria, {failures} failed", 12);
    if failures > 0 {
        std::process::exit(1);
    }
}
