use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_eer, frr_at_far, mean_std, roc_curve, split_by_subject, RocCurve, ScoredTrial};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarTarget {
    pub label: &'static str,
    pub value: f64,
}

pub const FAR_TARGETS: [FarTarget; 3] = [
    FarTarget { label: "1%", value: 0.01 },
    FarTarget { label: "0.1%", value: 0.001 },
    FarTarget { label: "0.01%", value: 0.0001 },
];

/// Mean and population std across subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(values);
        Some(Stat { mean, std, n: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub global: f64,
    pub per_subject: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRow {
    pub subject: String,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub eer: f64,
    pub frr_at_far: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub protocol: serde_json::Value,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub eer: RateSummary,
    pub frr_at_far: BTreeMap<String, RateSummary>,
    pub subjects: Vec<SubjectRow>,
    /// Claimed subjects lacking genuine or impostor trials.
    pub excluded_subjects: Vec<String>,
}

/// Build the report for one scenario and return its global curve.
pub fn summarize(scenario: &str, protocol: serde_json::Value, trials: &[ScoredTrial]) -> Result<(EvalReport, RocCurve)> {
    let genuine: Vec<f64> = trials.iter().filter(|t| t.genuine).map(|t| t.score).collect();
    let impostor: Vec<f64> = trials.iter().filter(|t| !t.genuine).map(|t| t.score).collect();
    let roc = roc_curve(&genuine, &impostor)?;

    let mut subjects = Vec::new();
    let mut excluded_subjects = Vec::new();
    for (subject, (g, i)) in split_by_subject(trials) {
        if g.is_empty() || i.is_empty() {
            excluded_subjects.push(subject.to_owned());
            continue;
        }
        let r = roc_curve(&g, &i)?;
        subjects.push(SubjectRow {
            subject: subject.to_owned(),
            n_genuine: g.len(),
            n_impostor: i.len(),
            eer: compute_eer(&r),
            frr_at_far: FAR_TARGETS.iter().map(|t| (t.label.to_owned(), frr_at_far(&r, t.value))).collect(),
        });
    }
    let eers: Vec<f64> = subjects.iter().map(|s| s.eer).collect();
    let eer = RateSummary { global: compute_eer(&roc), per_subject: Stat::of(&eers) };
    let frr = FAR_TARGETS
        .iter()
        .map(|t| {
            let vals: Vec<f64> = subjects.iter().map(|s| s.frr_at_far[t.label]).collect();
            (t.label.to_owned(), RateSummary { global: frr_at_far(&roc, t.value), per_subject: Stat::of(&vals) })
        })
        .collect();
    let report = EvalReport {
        scenario: scenario.to_owned(),
        protocol,
        n_genuine: genuine.len(),
        n_impostor: impostor.len(),
        eer,
        frr_at_far: frr,
        subjects,
        excluded_subjects,
    };
    Ok((report, roc))
}

/// Several scenarios rendered as one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub rows: Vec<EvalReport>,
}

pub fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub fn pct_stat(s: &Option<Stat>) -> String {
    match s {
        Some(s) => format!("{} ± {}", pct(s.mean), pct(s.std)),
        None => "-".into(),
    }
}

impl ReportTable {
    /// Aligned plain-text grid; rates in percent.
    pub fn to_text(&self) -> String {
        let mut header = vec!["scenario".to_string(), "genuine".into(), "impostor".into(), "EER subj".into(), "EER glob".into()];
        for t in FAR_TARGETS {
            header.push(format!("FRR@{} subj", t.label));
            header.push(format!("FRR@{} glob", t.label));
        }
        let mut grid = vec![header];
        for r in &self.rows {
            let mut row = vec![
                r.scenario.clone(),
                r.n_genuine.to_string(),
                r.n_impostor.to_string(),
                pct_stat(&r.eer.per_subject),
                pct(r.eer.global),
            ];
            for t in FAR_TARGETS {
                let s = &r.frr_at_far[t.label];
                row.push(pct_stat(&s.per_subject));
                row.push(pct(s.global));
            }
            grid.push(row);
        }
        let mut out = String::new();
        writeln!(out, "# {}", self.title).unwrap();
        writeln!(out, "# rates in percent; subj = mean ± population std across claimed subjects").unwrap();
        out.push_str(&aligned(&grid));
        let excluded: Vec<String> = self
            .rows
            .iter()
            .filter(|r| !r.excluded_subjects.is_empty())
            .map(|r| format!("{}: {}", r.scenario, r.excluded_subjects.join(",")))
            .collect();
        if !excluded.is_empty() {
            writeln!(out, "# excluded subjects (no genuine or no impostor trials): {}", excluded.join("; ")).unwrap();
        }
        out
    }
}

/// Render rows as space-separated columns; the first column is left-aligned,
/// the rest right-aligned.
pub fn aligned(grid: &[Vec<String>]) -> String {
    let ncol = grid.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..ncol).map(|c| grid.iter().filter_map(|r| r.get(c)).map(|v| v.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in grid {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                let pad = widths[c] - v.chars().count();
                if c == 0 {
                    format!("{v}{}", " ".repeat(pad))
                } else {
                    format!("{}{v}", " ".repeat(pad))
                }
            })
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `<stem>.json` and `<stem>.txt`.
pub fn write_report(dir: &Path, stem: &str, table: &ReportTable) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(format!("{stem}.json")), table)?;
    let txt = dir.join(format!("{stem}.txt"));
    std::fs::write(&txt, table.to_text()).map_err(|e| Error::io(&txt, e))
}

pub fn read_report(path: &Path) -> Result<ReportTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema { path: path.to_owned(), msg: e.to_string() })
}

/// Two-column `far,frr` file, one row per curve point.
pub fn write_curve_csv(path: &Path, roc: &RocCurve) -> Result<()> {
    let mut out = String::from("far,frr\n");
    for (a, b) in roc.far.iter().zip(&roc.frr) {
        writeln!(out, "{a},{b}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials(sep: bool) -> Vec<ScoredTrial> {
        let mut v = Vec::new();
        for s in ["S1", "S2", "S3"] {
            for k in 0..4 {
                let g = if sep { 10.0 + k as f64 } else { k as f64 };
                v.push(ScoredTrial { claimed: s.into(), genuine: true, score: g });
                v.push(ScoredTrial { claimed: s.into(), genuine: false, score: k as f64 * 0.5 });
            }
        }
        v
    }

    #[test]
    fn separated_corpus_gives_zero_cells() {
        let (r, _) = summarize("x", serde_json::json!({}), &trials(true)).unwrap();
        assert_eq!(r.eer.global, 0.0);
        assert_eq!(r.eer.per_subject.as_ref().unwrap().mean, 0.0);
        for s in r.frr_at_far.values() {
            assert_eq!(s.global, 0.0);
            assert_eq!(s.per_subject.as_ref().unwrap().mean, 0.0);
        }
    }

    #[test]
    fn rates_are_bounded() {
        let (r, _) = summarize("x", serde_json::json!({}), &trials(false)).unwrap();
        let mut all = vec![r.eer.global];
        for s in r.frr_at_far.values() {
            all.push(s.global);
            all.push(s.per_subject.as_ref().unwrap().mean);
        }
        assert!(all.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn json_round_trip_and_text() {
        let dir = tempfile::tempdir().unwrap();
        let (r, roc) = summarize("first/others/n=1", serde_json::json!({"n": 1}), &trials(false)).unwrap();
        let table = ReportTable { title: "t".into(), rows: vec![r] };
        write_report(dir.path(), "report", &table).unwrap();
        assert_eq!(read_report(&dir.path().join("report.json")).unwrap(), table);
        let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert!(text.contains("first/others/n=1"));
        let curve = dir.path().join("c.csv");
        write_curve_csv(&curve, &roc).unwrap();
        let body = std::fs::read_to_string(curve).unwrap();
        assert!(body.starts_with("far,frr\n0,1\n"));
        assert!(body.ends_with("1,0\n"));
    }

    #[test]
    fn excluded_subject_reported() {
        let mut t = trials(true);
        t.push(ScoredTrial { claimed: "S9".into(), genuine: true, score: 1.0 });
        let (r, _) = summarize("x", serde_json::json!({}), &t).unwrap();
        assert_eq!(r.excluded_subjects, vec!["S9".to_string()]);
        let text = ReportTable { title: "t".into(), rows: vec![r] }.to_text();
        assert!(text.contains("S9"));
    }
}
