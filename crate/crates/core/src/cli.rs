//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 data error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, ChannelRow, ChannelTable, ScalingTable};
use crate::config::{RunConfig, Scenario, CONFIG_ENV};
use crate::corpus::{load_manifest, synth_corpus, CorpusIndex};
use crate::features::{import_embeddings, read_store, write_store, FeatureKind};
use crate::matching::{Metric, ScorerKind};
use crate::metrics::{summarize, write_curve_csv, write_json, write_report, EvalReport, ReportTable};
use crate::pipeline::{evaluate, extract_features, preprocess_corpus, SessionSource};
use crate::protocol::{
    bootstrap_subject_count, fit_scaling_curve, preset, read_trials_csv, simulate_enrollment_update,
    split_enroll_verify, write_trials_csv, EnrollRule, FeatureSet, ProtocolConfig, ThresholdPolicy, TrialRow,
    VerifyRule,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "eegauth", version, about = "Multi-session EEG biometric verification evaluation")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Worker thread cap; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory; defaults to `<paths.output>/<command>-<digest>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-session corpus.
    Synth {
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        drift: Option<f64>,
    },
    /// Run the preprocessing chain over a raw corpus.
    Preprocess {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Compute feature vectors, or import external embeddings.
    Extract {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// psd, ar, psd+ar or external
        #[arg(long, value_parser = serde_enum::<FeatureKind>)]
        kind: Option<FeatureKind>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Score verification trials and write reports.
    Evaluate(EvalArgs),
    /// Run one of the analyses.
    Analyze {
        #[command(subcommand)]
        analysis: Analysis,
    },
    /// Rebuild reports from stored trial tables.
    Report {
        /// Directory written by `evaluate`.
        #[arg(long, conflicts_with = "trials")]
        run: Option<PathBuf>,
        #[arg(long)]
        trials: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum Analysis {
    /// EER by time elapsed since enrollment.
    TimeIntervals(EvalArgs),
    /// EER spread over random subject subsets.
    SubjectCount {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        min: Option<usize>,
        #[arg(long)]
        max: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// EER per enrollment/probe device pair.
    CrossDevice(EvalArgs),
    /// EER for the full montage and channel presets.
    Channels {
        #[command(flatten)]
        eval: EvalArgs,
        /// Compare only this preset against the full montage.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Log-linear fit of EER against subject count.
    Scaling {
        /// CSV with `n_subjects,eer` columns.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Replay verification with template reinforcement.
    EnrollUpdate {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        far_target: Option<f64>,
        #[arg(long)]
        cap: Option<usize>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    /// Feature store from `extract`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Corpus to extract from when no feature store is given.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub verification_samples: Option<usize>,
    /// Enroll the first K sessions of each subject.
    #[arg(long)]
    pub enroll_sessions: Option<usize>,
    /// all_remaining or next_session_only
    #[arg(long, value_parser = serde_enum::<VerifyRule>)]
    pub verify_rule: Option<VerifyRule>,
    /// euclidean, cosine or manhattan
    #[arg(long, value_parser = serde_enum::<Metric>)]
    pub metric: Option<Metric>,
    /// distance, logreg or lda
    #[arg(long, value_parser = serde_enum::<ScorerKind>)]
    pub scorer: Option<ScorerKind>,
    /// ENROLL:PROBE device ids.
    #[arg(long, value_parser = device_pair)]
    pub device_pair: Option<(String, String)>,
    /// Reference cohort, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub reference: Option<Vec<String>>,
}

/// Parse a unit enum variant by its serialized name.
fn serde_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

fn device_pair(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once(':') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_owned(), b.to_owned())),
        _ => Err(format!("expected ENROLL:PROBE, got '{s}'")),
    }
}

/// Subcommands available at the deepest command named in `args`.
fn subcommand_names(args: &[OsString]) -> Vec<String> {
    let mut cmd = Cli::command();
    for a in args.iter().skip(1) {
        let Some(a) = a.to_str() else { continue };
        match cmd.find_subcommand(a) {
            Some(sub) => cmd = sub.clone(),
            None => continue,
        }
    }
    cmd.get_subcommands().map(|c| c.get_name().to_owned()).filter(|n| n != "help").collect()
}

impl EvalArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.features {
            cfg.paths.features = Some(p.clone());
        }
        if let Some(p) = &self.corpus {
            cfg.paths.corpus = Some(p.clone());
        }
        let p = &mut cfg.protocol;
        if let Some(n) = self.verification_samples {
            p.verification_samples = n;
        }
        if let Some(k) = self.enroll_sessions {
            p.enroll_rule = EnrollRule::FirstK(k);
        }
        if let Some(v) = self.verify_rule {
            p.verify_rule = v;
        }
        if let Some(d) = &self.device_pair {
            p.device_pair = Some(d.clone());
        }
        if let Some(r) = &self.reference {
            p.reference_subjects = r.clone();
        }
        for s in &mut cfg.scenarios {
            if let Some(n) = self.verification_samples {
                s.verification_samples = n;
            }
            if let Some(k) = self.enroll_sessions {
                s.enroll_rule = EnrollRule::FirstK(k);
            }
            if let Some(v) = self.verify_rule {
                s.verify_rule = v;
            }
        }
        if let Some(m) = self.metric {
            cfg.scorer.metric = m;
        }
        if let Some(k) = self.scorer {
            cfg.scorer.kind = k;
        }
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            if e.kind() == clap::error::ErrorKind::InvalidSubcommand {
                eprintln!("valid commands: {}", subcommand_names(&args).join(", "));
            }
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_DATA
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    let mut cfg = RunConfig::discover(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let ctx = Ctx { out: cli.out };
    match cli.command {
        Command::Synth { subjects, sessions, epochs, drift } => {
            if let Some(v) = subjects {
                cfg.synth.n_subjects = v;
            }
            if let Some(v) = sessions {
                cfg.synth.sessions_per_subject = v;
            }
            if let Some(v) = epochs {
                cfg.synth.epochs_per_session = v;
            }
            if let Some(v) = drift {
                cfg.synth.session_drift_scale = v;
            }
            cmd_synth(&ctx, cfg.resolve())
        }
        Command::Preprocess { corpus } => {
            if corpus.is_some() {
                cfg.paths.corpus = corpus;
            }
            cmd_preprocess(&ctx, cfg.resolve())
        }
        Command::Extract { corpus, kind, embeddings } => {
            if corpus.is_some() {
                cfg.paths.corpus = corpus;
            }
            if let Some(k) = kind {
                cfg.features.kind = k;
            }
            if embeddings.is_some() {
                cfg.paths.embeddings = embeddings;
            }
            cmd_extract(&ctx, cfg.resolve())
        }
        Command::Evaluate(args) => {
            args.apply(&mut cfg);
            cmd_evaluate(&ctx, cfg.resolve())
        }
        Command::Analyze { analysis } => cmd_analyze(&ctx, cfg, analysis),
        Command::Report { run, trials } => {
            if trials.is_some() {
                cfg.paths.trials = trials;
            }
            cmd_report(&ctx, cfg.resolve(), run)
        }
    }
}

struct Ctx {
    out: Option<PathBuf>,
}

impl Ctx {
    /// Validate, then create the run directory and record the config in it.
    fn prepare(&self, cfg: &RunConfig, command: &str) -> Result<PathBuf> {
        cfg.validate()?;
        check_paths(cfg)?;
        let dir = match &self.out {
            Some(d) => d.clone(),
            None => cfg
                .paths
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from("runs"))
                .join(format!("{}-{}", command.replace(' ', "-"), cfg.digest(command))),
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(dir)
    }
}

fn check_paths(cfg: &RunConfig) -> Result<()> {
    let p = &cfg.paths;
    for (name, path) in [
        ("corpus", &p.corpus),
        ("features", &p.features),
        ("embeddings", &p.embeddings),
        ("trials", &p.trials),
        ("scaling_points", &p.scaling_points),
    ] {
        if let Some(path) = path {
            if !path.exists() {
                return Err(Error::config(format!("paths.{name}: {} does not exist", path.display())));
            }
        }
    }
    Ok(())
}

fn announce(path: &Path) {
    println!("{}", path.display());
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    announce(path);
    Ok(())
}

#[derive(Serialize)]
struct Stamped<'a, T> {
    analysis: &'a str,
    seed: u64,
    result: &'a T,
}

/// `<stem>.json` and `<stem>.txt`, both headed by the analysis name and seed.
fn write_analysis<T: Serialize>(dir: &Path, stem: &str, name: &str, seed: u64, value: &T, text: &str) -> Result<()> {
    let json = dir.join(format!("{stem}.json"));
    write_json(&json, &Stamped { analysis: name, seed, result: value })?;
    announce(&json);
    write_text(&dir.join(format!("{stem}.txt")), &format!("# {name}, seed {}\n{text}", seed))
}

fn cmd_synth(ctx: &Ctx, cfg: RunConfig) -> Result<()> {
    cfg.synth.validate()?;
    let dir = ctx.prepare(&cfg, "synth")?;
    let corpus = synth_corpus(&cfg.synth)?;
    let index = corpus.write_to(&dir.join("corpus"))?;
    let epochs: usize = index.sessions.iter().map(|s| s.n_epochs).sum();
    println!("subjects {} sessions {} epochs {}", index.subjects().len(), index.sessions.len(), epochs);
    announce(&index.root.join(crate::corpus::MANIFEST_NAME));
    Ok(())
}

fn require_corpus(cfg: &RunConfig) -> Result<CorpusIndex> {
    let path = cfg.paths.corpus.as_ref().ok_or_else(|| Error::config("no corpus given (--corpus or paths.corpus)"))?;
    load_manifest(path)
}

fn cmd_preprocess(ctx: &Ctx, cfg: RunConfig) -> Result<()> {
    cfg.validate()?;
    check_paths(&cfg)?;
    let src = require_corpus(&cfg)?;
    if src.preprocessed {
        return Err(Error::config(format!("corpus {} is already preprocessed", src.root.display())));
    }
    cfg.preprocess.validate(src.rate_hz)?;
    let dir = ctx.prepare(&cfg, "preprocess")?;
    let out = preprocess_corpus(&src, &dir.join("corpus"), &cfg.preprocess)?;
    println!("sessions {} preprocessed", out.sessions.len());
    announce(&out.root.join(crate::corpus::MANIFEST_NAME));
    Ok(())
}

/// Corpus from `paths.corpus`, else the configured synthetic corpus.
fn with_source<R>(cfg: &RunConfig, f: impl FnOnce(&dyn SessionSource) -> Result<R>) -> Result<R> {
    match &cfg.paths.corpus {
        Some(p) => f(&load_manifest(p)?),
        None => {
            log::info!("no corpus given; using the synthetic corpus from the config");
            f(&synth_corpus(&cfg.synth)?)
        }
    }
}

fn cmd_extract(ctx: &Ctx, cfg: RunConfig) -> Result<()> {
    cfg.validate()?;
    check_paths(&cfg)?;
    let vectors = if cfg.features.kind == FeatureKind::External {
        let path = cfg
            .paths
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::config("external features need --embeddings or paths.embeddings"))?;
        let corpus = cfg.paths.corpus.as_deref().map(load_manifest).transpose()?;
        let v = import_embeddings(path, corpus.as_ref())?;
        FeatureSet::from_vectors(v)?
    } else {
        with_source(&cfg, |src| {
            cfg.features.validate(src.rate_hz())?;
            extract_features(src, &cfg.pipeline())
        })?
    };
    let dir = ctx.prepare(&cfg, "extract")?;
    let path = dir.join("features.embd");
    let flat: Vec<_> = vectors.sessions.iter().flat_map(|s| s.vectors.iter().cloned()).collect();
    write_store(&path, &flat)?;
    println!("feature_id {} dim {} vectors {}", vectors.feature_id, vectors.dim, flat.len());
    announce(&path);
    Ok(())
}

/// Feature store if given, otherwise extracted from the corpus source.
fn load_features(cfg: &RunConfig) -> Result<FeatureSet> {
    match &cfg.paths.features {
        Some(p) => FeatureSet::from_vectors(read_store(p)?),
        None => with_source(cfg, |src| extract_features(src, &cfg.pipeline())),
    }
}

fn scenario_json(cfg: &RunConfig, p: &ProtocolConfig, feature_id: &str) -> serde_json::Value {
    serde_json::json!({
        "seed": cfg.seed,
        "feature_id": feature_id,
        "protocol": p,
        "scorer": cfg.scorer,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TrialsIndex {
    title: String,
    curves: bool,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    scenario: String,
    protocol: serde_json::Value,
    trials: String,
}

fn report_title(seed: u64) -> String {
    format!("verification report, seed {seed}")
}

/// Reports and curves for stored trial tables.
fn write_reports(dir: &Path, index: &TrialsIndex, rows: &[Vec<TrialRow>]) -> Result<()> {
    let mut reports: Vec<EvalReport> = Vec::with_capacity(rows.len());
    for (k, (entry, rows)) in index.entries.iter().zip(rows).enumerate() {
        let (report, roc) = summarize(&entry.scenario, entry.protocol.clone(), &TrialRow::scored(rows))?;
        if index.curves {
            let cdir = dir.join("curves");
            std::fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
            let path = cdir.join(format!("roc_{k:02}.csv"));
            write_curve_csv(&path, &roc)?;
            announce(&path);
        }
        reports.push(report);
    }
    write_report(dir, "report", &ReportTable { title: index.title.clone(), rows: reports })?;
    announce(&dir.join("report.json"));
    announce(&dir.join("report.txt"));
    Ok(())
}

fn scenarios(cfg: &RunConfig) -> Vec<Scenario> {
    if cfg.scenarios.is_empty() {
        vec![Scenario::of(&cfg.protocol)]
    } else {
        cfg.scenarios.clone()
    }
}

fn cmd_evaluate(ctx: &Ctx, cfg: RunConfig) -> Result<()> {
    cfg.validate()?;
    check_paths(&cfg)?;
    let fs = load_features(&cfg)?;
    let scenarios = scenarios(&cfg);
    let mut all_rows = Vec::with_capacity(scenarios.len());
    let mut index = TrialsIndex { title: report_title(cfg.seed), curves: cfg.report.curves, entries: Vec::new() };
    for (k, sc) in scenarios.iter().enumerate() {
        let p = sc.apply(&cfg.protocol);
        let ev = evaluate(&fs, &p, &cfg.scorer)?;
        let file = if scenarios.len() == 1 { "trials.csv".to_owned() } else { format!("trials_{k:02}.csv") };
        index.entries.push(IndexEntry { scenario: sc.label(), protocol: scenario_json(&cfg, &p, &fs.feature_id), trials: file });
        all_rows.push(ev.rows);
    }
    // scoring is done before anything is written
    let dir = ctx.prepare(&cfg, "evaluate")?;
    for (entry, rows) in index.entries.iter().zip(&all_rows) {
        let path = dir.join(&entry.trials);
        write_trials_csv(&path, rows)?;
        announce(&path);
    }
    write_json(&dir.join("trials_index.json"), &index)?;
    write_reports(&dir, &index, &all_rows)
}

fn cmd_report(ctx: &Ctx, cfg: RunConfig, run: Option<PathBuf>) -> Result<()> {
    let (index, base) = match (&run, &cfg.paths.trials) {
        (Some(r), _) => {
            let path = r.join("trials_index.json");
            if !path.exists() {
                return Err(Error::config(format!("{} not found", path.display())));
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let index: TrialsIndex =
                serde_json::from_str(&text).map_err(|e| Error::Schema { path: path.clone(), msg: e.to_string() })?;
            (index, r.clone())
        }
        (None, Some(t)) => {
            let name = t.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let stem = t.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let index = TrialsIndex {
                title: report_title(cfg.seed),
                curves: cfg.report.curves,
                entries: vec![IndexEntry { scenario: stem, protocol: serde_json::Value::Null, trials: name }],
            };
            (index, t.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        (None, None) => return Err(Error::config("report needs --run or --trials")),
    };
    let rows = index.entries.iter().map(|e| read_trials_csv(&base.join(&e.trials))).collect::<Result<Vec<_>>>()?;
    let dir = ctx.prepare(&cfg, "report")?;
    write_reports(&dir, &index, &rows)
}

fn cmd_analyze(ctx: &Ctx, mut cfg: RunConfig, analysis: Analysis) -> Result<()> {
    let name = match &analysis {
        Analysis::TimeIntervals(_) => "time-intervals",
        Analysis::SubjectCount { .. } => "subject-count",
        Analysis::CrossDevice(_) => "cross-device",
        Analysis::Channels { .. } => "channels",
        Analysis::Scaling { .. } => "scaling",
        Analysis::EnrollUpdate { .. } => "enroll-update",
    };
    match &analysis {
        Analysis::TimeIntervals(a) | Analysis::CrossDevice(a) => a.apply(&mut cfg),
        Analysis::SubjectCount { eval, min, max, repeats } => {
            eval.apply(&mut cfg);
            let sc = &mut cfg.analysis.subject_count;
            if let Some(v) = min {
                sc.min = *v;
            }
            if max.is_some() {
                sc.max = *max;
            }
            if let Some(v) = repeats {
                sc.repeats = *v;
            }
        }
        Analysis::Channels { eval, preset: p } => {
            eval.apply(&mut cfg);
            if let Some(p) = p {
                cfg.analysis.channel_presets = vec![p.clone()];
            }
        }
        Analysis::Scaling { points } => {
            if points.is_some() {
                cfg.paths.scaling_points = points.clone();
            }
        }
        Analysis::EnrollUpdate { eval, far_target, cap } => {
            eval.apply(&mut cfg);
            if let Some(t) = far_target {
                cfg.analysis.enroll_update.policy = ThresholdPolicy::FarTarget(*t);
            }
            if cap.is_some() {
                cfg.analysis.enroll_update.cap = *cap;
            }
        }
    }
    let cfg = cfg.resolve();
    cfg.validate()?;
    check_paths(&cfg)?;
    let command = format!("analyze {name}");
    let seed = cfg.seed;
    let p = &cfg.protocol;
    match analysis {
        Analysis::TimeIntervals(_) => {
            let fs = load_features(&cfg)?;
            let ev = evaluate(&fs, p, &cfg.scorer)?;
            let table = analysis::time_intervals(&ev.rows, &p.interval_bins, &scenario_json(&cfg, p, &fs.feature_id))?;
            let dir = ctx.prepare(&cfg, &command)?;
            write_analysis(&dir, "time_intervals", name, seed, &table, &table.to_text())
        }
        Analysis::SubjectCount { .. } => {
            let sc = &cfg.analysis.subject_count;
            if let Some(m) = sc.max {
                if m < sc.min {
                    return Err(Error::config(format!("subject-count max {m} is below min {}", sc.min)));
                }
            }
            let fs = load_features(&cfg)?;
            let ev = evaluate(&fs, p, &cfg.scorer)?;
            let subjects = ev.split.subject_names();
            let max = sc.max.unwrap_or(subjects.len());
            let sizes: Vec<usize> = (sc.min..=max).collect();
            let rows = bootstrap_subject_count(&ev.rows, &subjects, &sizes, sc.repeats, seed)?;
            let dir = ctx.prepare(&cfg, &command)?;
            write_analysis(&dir, "subject_count", name, seed, &rows, &analysis::subject_count_text(&rows))
        }
        Analysis::CrossDevice(_) => {
            let fs = load_features(&cfg)?;
            let unfiltered = ProtocolConfig { device_pair: None, ..p.clone() };
            let ev = evaluate(&fs, &unfiltered, &cfg.scorer)?;
            let devices: BTreeSet<String> = fs.metas().iter().map(|m| m.device_id.clone()).collect();
            let mut pairs: Vec<(String, String)> =
                devices.iter().flat_map(|a| devices.iter().map(move |b| (a.clone(), b.clone()))).collect();
            if let Some(dp) = &p.device_pair {
                pairs.push(dp.clone());
            }
            let table = analysis::cross_device(&ev.rows, &pairs, &scenario_json(&cfg, &unfiltered, &fs.feature_id))?;
            let dir = ctx.prepare(&cfg, &command)?;
            write_analysis(&dir, "cross_device", name, seed, &table, &table.to_text())
        }
        Analysis::Channels { .. } => {
            if cfg.paths.features.is_some() {
                return Err(Error::config("the channels analysis re-extracts features; give a corpus, not a feature store"));
            }
            if cfg.features.kind == FeatureKind::External {
                return Err(Error::config("the channels analysis needs handcrafted features"));
            }
            let mut variants: Vec<Option<String>> = vec![None];
            variants.extend(cfg.analysis.channel_presets.iter().cloned().map(Some));
            let rows = with_source(&cfg, |src| {
                variants
                    .iter()
                    .map(|v| {
                        let mut pipe = cfg.pipeline();
                        pipe.channel_preset = v.clone();
                        let fs = extract_features(src, &pipe)?;
                        let ev = evaluate(&fs, p, &cfg.scorer)?;
                        let label = v.clone().unwrap_or_else(|| "full".into());
                        let n_channels = match v {
                            Some(n) => preset(n)?.labels.len(),
                            None => src.channels().len(),
                        };
                        let (report, _) =
                            summarize(&label, scenario_json(&cfg, p, &fs.feature_id), &TrialRow::scored(&ev.rows))?;
                        Ok(ChannelRow { preset: label, n_channels, report })
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let table = ChannelTable { rows };
            let dir = ctx.prepare(&cfg, &command)?;
            write_analysis(&dir, "channels", name, seed, &table, &table.to_text())
        }
        Analysis::Scaling { .. } => {
            let path = cfg
                .paths
                .scaling_points
                .as_ref()
                .ok_or_else(|| Error::config("scaling needs --points or paths.scaling_points"))?;
            let points = read_points(path)?;
            let fit = fit_scaling_curve(&points)?;
            let predictions = cfg.analysis.scaling_predict.iter().map(|n| fit.predict(*n)).collect();
            let table = ScalingTable { points, fit, predictions };
            let dir = ctx.prepare(&cfg, &command)?;
            write_analysis(&dir, "scaling", name, seed, &table, &table.to_text())
        }
        Analysis::EnrollUpdate { .. } => {
            let fs = load_features(&cfg)?;
            let split = split_enroll_verify(&fs.metas(), p)?;
            let eu = &cfg.analysis.enroll_update;
            let calibration = if eu.calibration_subjects.is_empty() {
                let names = split.subject_names();
                let q = (names.len() / 4).max(2);
                names.into_iter().take(q).collect()
            } else {
                eu.calibration_subjects.clone()
            };
            let report = simulate_enrollment_update(
                &fs,
                &split,
                &calibration,
                eu.policy,
                eu.cap,
                &cfg.scorer,
                p.verification_samples,
                &p.interval_bins,
            )?;
            let dir = ctx.prepare(&cfg, &command)?;
            write_analysis(&dir, "enroll_update", name, seed, &report, &analysis::enroll_update_text(&report))
        }
    }
}

#[derive(Deserialize)]
struct PointRow {
    n_subjects: f64,
    eer: f64,
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    r.deserialize::<PointRow>()
        .map(|row| {
            row.map(|p| (p.n_subjects, p.eer))
                .map_err(|e| Error::Schema { path: path.to_owned(), msg: e.to_string() })
        })
        .collect()
}
