//! Table builders behind the `analyze` subcommands.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::{aligned, pct, pct_stat, summarize, EvalReport, FAR_TARGETS};
use crate::protocol::{
    bin_by_interval, filter_by_device_pair, IntervalBin, ScalingFit, ScalingPrediction, SubjectCountRow, TrialRow,
    UpdateReport,
};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub bin: IntervalBin,
    pub n_genuine: usize,
    pub n_impostor: usize,
    /// `None` when the bin lacks genuine or impostor trials.
    pub report: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTable {
    pub rows: Vec<IntervalRow>,
    /// Genuine trials outside every bin.
    pub unbinned_genuine: usize,
}

/// EER per elapsed-time bin.
pub fn time_intervals(rows: &[TrialRow], bins: &[IntervalBin], protocol: &serde_json::Value) -> Result<IntervalTable> {
    let binned = bin_by_interval(rows, bins)?;
    let unbinned_genuine = rows.iter().filter(|r| r.genuine && !bins.iter().any(|b| b.contains(r.delta_days))).count();
    let mut out = Vec::with_capacity(binned.len());
    for (bin, members) in binned {
        let n_genuine = members.iter().filter(|r| r.genuine).count();
        let n_impostor = members.len() - n_genuine;
        let report = if n_genuine > 0 && n_impostor > 0 {
            Some(summarize(&bin.label, protocol.clone(), &TrialRow::scored(&members))?.0)
        } else {
            None
        };
        out.push(IntervalRow { bin, n_genuine, n_impostor, report });
    }
    Ok(IntervalTable { rows: out, unbinned_genuine })
}

fn eer_cells(r: &Option<EvalReport>) -> [String; 2] {
    match r {
        Some(r) => [pct(r.eer.global), pct_stat(&r.eer.per_subject)],
        None => ["no data".into(), "-".into()],
    }
}

impl IntervalTable {
    pub fn to_text(&self) -> String {
        let mut grid = vec![vec!["bin".to_string(), "days".into(), "genuine".into(), "impostor".into(), "EER glob".into(), "EER subj".into()]];
        for r in &self.rows {
            let [g, s] = eer_cells(&r.report);
            grid.push(vec![
                r.bin.label.clone(),
                format!("{}-{}", r.bin.lo, r.bin.hi),
                r.n_genuine.to_string(),
                r.n_impostor.to_string(),
                g,
                s,
            ]);
        }
        let mut out = String::from("# EER by time since last enrollment; rates in percent\n");
        out.push_str(&aligned(&grid));
        writeln!(out, "# genuine trials outside every bin: {}", self.unbinned_genuine).unwrap();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRow {
    pub enroll_device: String,
    pub probe_device: String,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub no_data: bool,
    pub report: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTable {
    pub rows: Vec<DeviceRow>,
}

/// EER per ordered (enrollment device, probe device) pair; `extra` pairs are
/// reported even when absent from the data.
pub fn cross_device(rows: &[TrialRow], extra: &[(String, String)], protocol: &serde_json::Value) -> Result<DeviceTable> {
    let mut pairs: BTreeSet<(String, String)> =
        rows.iter().map(|r| (r.enroll_device.clone(), r.probe_device.clone())).collect();
    pairs.extend(extra.iter().cloned());
    let mut out = Vec::with_capacity(pairs.len());
    for (e, p) in pairs {
        let f = filter_by_device_pair(rows, &e, &p);
        let report = if f.no_data {
            None
        } else {
            Some(summarize(&format!("{e} -> {p}"), protocol.clone(), &TrialRow::scored(&f.rows))?.0)
        };
        out.push(DeviceRow {
            enroll_device: e,
            probe_device: p,
            n_genuine: f.n_genuine,
            n_impostor: f.n_impostor,
            no_data: f.no_data,
            report,
        });
    }
    Ok(DeviceTable { rows: out })
}

impl DeviceTable {
    pub fn to_text(&self) -> String {
        let mut grid = vec![vec![
            "enroll device".to_string(),
            "probe device".into(),
            "genuine".into(),
            "impostor".into(),
            "EER glob".into(),
            "EER subj".into(),
        ]];
        for r in &self.rows {
            let [g, s] = eer_cells(&r.report);
            grid.push(vec![r.enroll_device.clone(), r.probe_device.clone(), r.n_genuine.to_string(), r.n_impostor.to_string(), g, s]);
        }
        let mut out = String::from("# EER by device pair; rates in percent\n");
        out.push_str(&aligned(&grid));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub preset: String,
    pub n_channels: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTable {
    pub rows: Vec<ChannelRow>,
}

impl ChannelTable {
    pub fn to_text(&self) -> String {
        let mut header = vec!["channels".to_string(), "n".into(), "EER glob".into(), "EER subj".into()];
        for t in FAR_TARGETS {
            header.push(format!("FRR@{}", t.label));
        }
        let mut grid = vec![header];
        for r in &self.rows {
            let mut row = vec![r.preset.clone(), r.n_channels.to_string(), pct(r.report.eer.global), pct_stat(&r.report.eer.per_subject)];
            for t in FAR_TARGETS {
                row.push(pct(r.report.frr_at_far[t.label].global));
            }
            grid.push(row);
        }
        let mut out = String::from("# EER by channel subset; rates in percent\n");
        out.push_str(&aligned(&grid));
        out
    }
}

pub fn subject_count_text(rows: &[SubjectCountRow]) -> String {
    let mut grid = vec![vec!["N".to_string(), "repeats".into(), "mean EER".into(), "std EER".into()]];
    for r in rows {
        grid.push(vec![r.n_subjects.to_string(), r.repeats.to_string(), pct(r.mean_eer), pct(r.std_eer)]);
    }
    let mut out = String::from("# EER over random subject subsets; std is population std across repeats; percent\n");
    out.push_str(&aligned(&grid));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub points: Vec<(f64, f64)>,
    pub fit: ScalingFit,
    pub predictions: Vec<ScalingPrediction>,
}

impl ScalingTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# eer = a + b * log10(n) over {} points", self.fit.n_points).unwrap();
        writeln!(out, "# a = {}  b = {}", self.fit.a, self.fit.b).unwrap();
        let mut grid = vec![vec!["n".to_string(), "predicted eer".into(), "extrapolated".into()]];
        for p in &self.predictions {
            grid.push(vec![p.n.to_string(), format!("{:.4}", p.eer), if p.extrapolated { "yes" } else { "no" }.into()]);
        }
        out.push_str(&aligned(&grid));
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_else(|| "-".into())
}

pub fn enroll_update_text(r: &UpdateReport) -> String {
    let mut out = String::new();
    writeln!(out, "# enrollment update simulation (extension: not a reproduction target); rates in percent").unwrap();
    writeln!(
        out,
        "# policy {:?}, threshold {}, cap {}, updates {}, impostor accepts {} (never added)",
        r.policy,
        r.threshold,
        r.cap.map(|c| c.to_string()).unwrap_or_else(|| "initial size".into()),
        r.n_updates,
        r.n_impostor_accepts
    )
    .unwrap();
    writeln!(out, "# calibration cohort: {}", r.calibration_subjects.join(",")).unwrap();
    let mut grid = vec![vec![
        "bin".to_string(),
        "genuine".into(),
        "impostor".into(),
        "FAR before".into(),
        "FAR after".into(),
        "FRR before".into(),
        "FRR after".into(),
        "EER before".into(),
        "EER after".into(),
    ]];
    for b in std::iter::once(&r.overall).chain(&r.bins) {
        if b.n_genuine == 0 && b.n_impostor == 0 {
            continue;
        }
        grid.push(vec![
            b.label.clone(),
            b.n_genuine.to_string(),
            b.n_impostor.to_string(),
            opt(b.far_before),
            opt(b.far_after),
            opt(b.frr_before),
            opt(b.frr_after),
            opt(b.eer_before),
            opt(b.eer_after),
        ]);
    }
    out.push_str(&aligned(&grid));
    out
}
