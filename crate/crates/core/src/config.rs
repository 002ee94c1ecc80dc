//! Run configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SynthConfig;
use crate::features::FeatureSpec;
use crate::matching::ScorerConfig;
use crate::pipeline::PipelineConfig;
use crate::preprocess::PreprocessConfig;
use crate::protocol::{EnrollRule, ProtocolConfig, ThresholdPolicy, VerifyRule};
use crate::{Error, Result};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "EEGAUTH_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Feature store written by `extract`.
    pub features: Option<PathBuf>,
    /// External embeddings to import.
    pub embeddings: Option<PathBuf>,
    /// Scored trial table for `report`.
    pub trials: Option<PathBuf>,
    /// `n_train_subjects,eer` points for the scaling analysis.
    pub scaling_points: Option<PathBuf>,
}

/// One row of a multi-scenario evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub enroll_rule: EnrollRule,
    pub verify_rule: VerifyRule,
    pub verification_samples: usize,
}

impl Scenario {
    pub fn label(&self) -> String {
        let e = match &self.enroll_rule {
            EnrollRule::FirstK(k) => format!("first{k}"),
            EnrollRule::Explicit(_) => "explicit".into(),
        };
        let v = match self.verify_rule {
            VerifyRule::AllRemaining => "all-remaining",
            VerifyRule::NextSessionOnly => "next-session",
        };
        format!("enroll={e} verify={v} n={}", self.verification_samples)
    }

    pub fn of(p: &ProtocolConfig) -> Self {
        Scenario { enroll_rule: p.enroll_rule.clone(), verify_rule: p.verify_rule, verification_samples: p.verification_samples }
    }

    pub fn apply(&self, p: &ProtocolConfig) -> ProtocolConfig {
        ProtocolConfig {
            enroll_rule: self.enroll_rule.clone(),
            verify_rule: self.verify_rule,
            verification_samples: self.verification_samples,
            ..p.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubjectCountConfig {
    pub min: usize,
    /// `None` means every evaluation subject.
    pub max: Option<usize>,
    pub repeats: usize,
}

impl Default for SubjectCountConfig {
    fn default() -> Self {
        SubjectCountConfig { min: 2, max: None, repeats: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrollUpdateConfig {
    pub policy: ThresholdPolicy,
    pub cap: Option<usize>,
    /// Defaults to the first quarter (at least 2) of the evaluation subjects.
    pub calibration_subjects: Vec<String>,
}

impl Default for EnrollUpdateConfig {
    fn default() -> Self {
        EnrollUpdateConfig { policy: ThresholdPolicy::FarTarget(0.01), cap: None, calibration_subjects: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub subject_count: SubjectCountConfig,
    pub enroll_update: EnrollUpdateConfig,
    /// Presets compared by the channel analysis, besides the full montage.
    pub channel_presets: Vec<String>,
    /// Subject counts at which the fitted scaling curve is evaluated.
    pub scaling_predict: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            subject_count: SubjectCountConfig::default(),
            enroll_update: EnrollUpdateConfig::default(),
            channel_presets: vec!["emotiv14".into(), "dsi7".into(), "muse4".into()],
            scaling_predict: vec![100.0, 1000.0, 10000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Write `far,frr` curve files next to reports.
    pub curves: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { curves: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives every stochastic step; copied into `synth` and `protocol`.
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub features: FeatureSpec,
    pub scorer: ScorerConfig,
    pub protocol: ProtocolConfig,
    /// Extra evaluation rows; empty means the `protocol` row only.
    pub scenarios: Vec<Scenario>,
    pub analysis: AnalysisConfig,
    pub report: ReportConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::config(format!("config file {} not found", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Load `path`, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn discover(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    /// Propagate the global seed and shared fields.
    pub fn resolve(mut self) -> Self {
        self.synth.seed = self.seed;
        self.protocol.seed = self.seed;
        self
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            preprocess: self.preprocess.clone(),
            features: self.features.clone(),
            channel_preset: self.protocol.channel_preset.clone(),
            reference_subjects: self.protocol.reference_subjects.clone(),
        }
    }

    /// Checks that do not need data on disk.
    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.scorer.validate()?;
        for s in &self.scenarios {
            s.apply(&self.protocol).validate()?;
        }
        for p in &self.analysis.channel_presets {
            crate::protocol::preset(p)?;
        }
        if self.analysis.subject_count.repeats == 0 {
            return Err(Error::config("analysis.subject_count.repeats must be >= 1"));
        }
        if self.analysis.subject_count.min < 2 {
            return Err(Error::config("analysis.subject_count.min must be >= 2"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Short digest of the resolved config, used to name run directories.
    pub fn digest(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(self.to_toml().as_bytes());
        hex::encode(h.finalize())[..12].to_owned()
    }
}
