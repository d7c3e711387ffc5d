use std::fs;
use std::path::{Path, PathBuf};

use ase_fd::ase::TrainSpec;
use ase_fd::classify::ClassifierKind;
use ase_fd::eval::FrontEnd;
use ase_fd::preprocess::MAX_ALPHA;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Which front ends to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AseMode {
    Off,
    On,
    Both,
}

impl AseMode {
    pub fn front_ends(self) -> Vec<FrontEnd> {
        match self {
            AseMode::Off => vec![FrontEnd::Original],
            AseMode::On => vec![FrontEnd::Ase],
            AseMode::Both => vec![FrontEnd::Original, FrontEnd::Ase],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub subjects: usize,
    pub trials_per_subject: usize,
    pub rate_hz: f64,
    pub duration_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 6,
            trials_per_subject: 20,
            rate_hz: 200.0,
            duration_s: 6.0,
        }
    }
}

/// Everything a command needs. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// JSON manifest of CSV trials. When absent, a synthetic dataset is used.
    pub manifest: Option<PathBuf>,
    pub synthetic: SynthConfig,
    pub alphas: Vec<u32>,
    pub classifiers: Vec<ClassifierKind>,
    pub ase: AseMode,
    pub l2_weight: f64,
    pub dropout_p: f64,
    pub train: TrainSpec,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            synthetic: SynthConfig::default(),
            alphas: (0..=MAX_ALPHA).collect(),
            classifiers: vec![ClassifierKind::Svm, ClassifierKind::Knn],
            ase: AseMode::Both,
            l2_weight: 0.0,
            dropout_p: 0.0,
            train: TrainSpec::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| ase_fd::Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for a in &self.alphas {
            if *a > MAX_ALPHA {
                v.push(format!("alphas: {a} exceeds {MAX_ALPHA}"));
            }
        }
        let mut sorted = self.alphas.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.alphas.len() {
            v.push("alphas: duplicate entries".into());
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            v.push(format!("l2_weight: {} must be a non-negative number", self.l2_weight));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            v.push(format!("dropout_p: {} outside [0, 1)", self.dropout_p));
        }
        let t = &self.train;
        if t.max_epochs == 0 {
            v.push("train.max_epochs: must be positive".into());
        }
        if t.batch_size == 0 {
            v.push("train.batch_size: must be positive".into());
        }
        if t.patience == 0 {
            v.push("train.patience: must be positive".into());
        }
        if !(t.step_size > 0.0 && t.step_size.is_finite()) {
            v.push(format!("train.step_size: {} must be positive", t.step_size));
        }
        if self.jobs == 0 {
            v.push("jobs: must be at least 1".into());
        }
        if self.manifest.is_none() {
            let s = &self.synthetic;
            if s.subjects < 2 {
                v.push(format!("synthetic.subjects: {} is fewer than 2", s.subjects));
            }
            if s.trials_per_subject < 2 {
                v.push(format!("synthetic.trials_per_subject: {} is fewer than 2", s.trials_per_subject));
            }
            if !(s.rate_hz > 0.0 && s.rate_hz.is_finite()) {
                v.push(format!("synthetic.rate_hz: {} must be positive", s.rate_hz));
            }
            if !(s.duration_s >= 4.0) {
                v.push(format!("synthetic.duration_s: {} is shorter than 4", s.duration_s));
            }
        }
        v
    }
}

/// `0..7` (inclusive), `3` or `0,2,7`.
pub fn parse_alphas(s: &str) -> Result<Vec<u32>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|e| format!("bad range start `{a}`: {e}"))?;
        let b: u32 = b.trim_start_matches('=').trim().parse().map_err(|e| format!("bad range end `{b}`: {e}"))?;
        if a > b {
            return Err(format!("empty range {a}..{b}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("bad alpha `{p}`: {e}")))
        .collect()
}

pub fn parse_classifiers(s: &str) -> Result<Vec<ClassifierKind>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|e: ase_fd::Error| e.to_string()))
        .collect()
}
