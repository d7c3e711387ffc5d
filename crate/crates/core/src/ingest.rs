//! Trial loading, synthetic trial generation, and leave-one-subject-out
//! partitioning.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sanity bound on any acceleration component, in g.
pub const MAX_ABS_G: f64 = 32.0;

/// One tri-axial accelerometer reading in g.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sample {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl Sample {
    pub const ZERO: Sample = Sample {
        ax: 0.0,
        ay: 0.0,
        az: 0.0,
    };

    pub fn new(ax: f64, ay: f64, az: f64) -> Self {
        Self { ax, ay, az }
    }

    /// Euclidean norm of the three components.
    pub fn norm(&self) -> f64 {
        (self.ax * self.ax + self.ay * self.ay + self.az * self.az).sqrt()
    }

    pub fn component(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.ax,
            Axis::Y => self.ay,
            Axis::Z => self.az,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.ax, self.ay, self.az] {
            if !v.is_finite() || v.abs() > MAX_ABS_G {
                return Err(Error::InvalidSample(format!(
                    "component {v} is not finite or exceeds {MAX_ABS_G} g"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Fall,
    Adl,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Fall => "FALL",
            Label::Adl => "ADL",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FALL" => Ok(Label::Fall),
            "ADL" => Ok(Label::Adl),
            _ => Err(Error::InvalidArgument(format!("unknown label `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn others(&self) -> [Axis; 2] {
        match self {
            Axis::X => [Axis::Y, Axis::Z],
            Axis::Y => [Axis::X, Axis::Z],
            Axis::Z => [Axis::X, Axis::Y],
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(Error::InvalidArgument(format!("unknown axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Sisfall,
    Fallalld,
    Synthetic,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Sisfall => "sisfall",
            DatasetKind::Fallalld => "fallalld",
            DatasetKind::Synthetic => "synthetic",
        }
    }

    pub fn default_vertical_axis(&self) -> Axis {
        match self {
            DatasetKind::Sisfall | DatasetKind::Synthetic => Axis::Z,
            DatasetKind::Fallalld => Axis::Y,
        }
    }

    /// Backward and forward window lengths in seconds.
    pub fn default_window_s(&self) -> (f64, f64) {
        match self {
            DatasetKind::Sisfall | DatasetKind::Synthetic => (1.44, 2.0),
            DatasetKind::Fallalld => (1.23, 2.0),
        }
    }

    pub fn native_rate_hz(&self) -> f64 {
        match self {
            DatasetKind::Sisfall | DatasetKind::Synthetic => 200.0,
            DatasetKind::Fallalld => 238.0,
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sisfall" => Ok(DatasetKind::Sisfall),
            "fallalld" | "fallaild" => Ok(DatasetKind::Fallalld),
            "synthetic" => Ok(DatasetKind::Synthetic),
            _ => Err(Error::InvalidArgument(format!("unknown dataset `{s}`"))),
        }
    }
}

/// One labeled recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub subject_id: String,
    pub activity_code: String,
    pub label: Label,
    pub rate_hz: f64,
    pub samples: Vec<Sample>,
}

impl Trial {
    pub fn new(
        subject_id: impl Into<String>,
        activity_code: impl Into<String>,
        label: Label,
        rate_hz: f64,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("trial samples"));
        }
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sampling rate must be positive, got {rate_hz}"
            )));
        }
        for s in &samples {
            s.validate()?;
        }
        Ok(Self {
            subject_id: subject_id.into(),
            activity_code: activity_code.into(),
            label,
            rate_hz,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Prefix rule mapping an activity code to a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixRule {
    pub prefix: String,
    pub label: Label,
}

/// Activity code → label map. The first matching prefix wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub rules: Vec<PrefixRule>,
}

impl Default for LabelMap {
    fn default() -> Self {
        let rule = |prefix: &str, label| PrefixRule {
            prefix: prefix.to_string(),
            label,
        };
        Self {
            rules: vec![
                rule("F", Label::Fall),
                rule("A", Label::Adl),
                rule("D", Label::Adl),
            ],
        }
    }
}

impl LabelMap {
    pub fn label_of(&self, code: &str) -> Result<Label> {
        self.rules
            .iter()
            .find(|r| code.starts_with(&r.prefix))
            .map(|r| r.label)
            .ok_or_else(|| Error::UnknownActivityCode(code.to_string()))
    }
}

/// A CSV column, addressed by header name or by zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub has_header: bool,
    pub delimiter: char,
    pub t: Option<Column>,
    pub ax: Column,
    pub ay: Column,
    pub az: Column,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            has_header: true,
            delimiter: ',',
            t: Some(Column::Name("t".into())),
            ax: Column::Name("ax".into()),
            ay: Column::Name("ay".into()),
            az: Column::Name("az".into()),
        }
    }
}

impl CsvSchema {
    /// Raw SisFall layout: no header, first three columns are the ADXL345
    /// accelerometer counts.
    pub fn sisfall_raw() -> Self {
        Self {
            has_header: false,
            delimiter: ',',
            t: None,
            ax: Column::Index(0),
            ay: Column::Index(1),
            az: Column::Index(2),
        }
    }
}

/// Raw-count → g conversion: `g = (2 * range_g / 2^resolution_bits) * raw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcSpec {
    pub range_g: f64,
    pub resolution_bits: u32,
}

impl AdcSpec {
    pub fn new(range_g: f64, resolution_bits: u32) -> Result<Self> {
        if !(8..=16).contains(&resolution_bits) {
            return Err(Error::InvalidArgument(format!(
                "ADC resolution {resolution_bits} outside [8, 16] bits"
            )));
        }
        if !(range_g > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ADC range must be positive, got {range_g}"
            )));
        }
        Ok(Self {
            range_g,
            resolution_bits,
        })
    }

    pub fn to_g(&self, raw: f64) -> f64 {
        (2.0 * self.range_g / f64::from(1u32 << self.resolution_bits)) * raw
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub schema: CsvSchema,
    pub adc: Option<AdcSpec>,
    pub rate_hz: f64,
    pub label_map: LabelMap,
    /// Defaults to the second `_`-separated token of the file stem.
    pub subject_id: Option<String>,
    /// Defaults to the first `_`-separated token of the file stem.
    pub activity_code: Option<String>,
}

fn resolve_column(col: &Column, headers: Option<&csv::StringRecord>, path: &Path) -> Result<usize> {
    match (col, headers) {
        (Column::Index(i), _) => Ok(*i),
        (Column::Name(name), Some(h)) => h
            .iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| Error::MalformedRow {
                path: path.to_path_buf(),
                line: 1,
                reason: format!("no column named `{name}`"),
            }),
        (Column::Name(name), None) => Err(Error::InvalidArgument(format!(
            "column `{name}` addressed by name but the schema has no header"
        ))),
    }
}

/// Loads one trial from a delimited text file.
pub fn load_trial_csv(path: &Path, opts: &LoadOptions) -> Result<Trial> {
    if let Some(adc) = opts.adc {
        AdcSpec::new(adc.range_g, adc.resolution_bits)?;
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let mut tokens = stem.split('_');
    let code = opts
        .activity_code
        .clone()
        .unwrap_or_else(|| tokens.next().unwrap_or_default().to_string());
    let subject = opts
        .subject_id
        .clone()
        .unwrap_or_else(|| tokens.next().unwrap_or("unknown").to_string());
    let label = opts.label_map.label_of(&code)?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.schema.has_header)
        .delimiter(opts.schema.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = if opts.schema.has_header {
        Some(reader.headers()?.clone())
    } else {
        None
    };
    let cx = resolve_column(&opts.schema.ax, headers.as_ref(), path)?;
    let cy = resolve_column(&opts.schema.ay, headers.as_ref(), path)?;
    let cz = resolve_column(&opts.schema.az, headers.as_ref(), path)?;
    let ct = match &opts.schema.t {
        Some(c) => Some(resolve_column(c, headers.as_ref(), path)?),
        None => None,
    };

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.trim_end_matches(';').is_empty()) {
            continue;
        }
        let field = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).ok_or_else(|| Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("missing column {idx}"),
            })?;
            raw.trim_end_matches(';')
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::MalformedRow {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("non-numeric value `{raw}`"),
                })
        };
        if let Some(ct) = ct {
            field(ct)?;
        }
        let mut v = [field(cx)?, field(cy)?, field(cz)?];
        if let Some(adc) = opts.adc {
            v = v.map(|raw| adc.to_g(raw));
        }
        let s = Sample::new(v[0], v[1], v[2]);
        s.validate().map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        samples.push(s);
    }
    if samples.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Trial::new(subject, code, label, opts.rate_hz, samples)
}

/// Writes a trial as `t,ax,ay,az` CSV in g.
pub fn write_trial_csv(trial: &Trial, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "ax", "ay", "az"])?;
    for (j, s) in trial.samples.iter().enumerate() {
        let t = j as f64 / trial.rate_hz;
        w.write_record([t, s.ax, s.ay, s.az].map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A loaded dataset with the settings the pipeline needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: DatasetKind,
    pub trials: Vec<Trial>,
    pub vertical_axis: Axis,
    pub window_backward_s: f64,
    pub window_forward_s: f64,
}

impl DatasetManifest {
    pub fn new(dataset_name: DatasetKind, trials: Vec<Trial>) -> Self {
        let (b, f) = dataset_name.default_window_s();
        Self {
            dataset_name,
            trials,
            vertical_axis: dataset_name.default_vertical_axis(),
            window_backward_s: b,
            window_forward_s: f,
        }
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        self.trials
            .iter()
            .map(|t| t.subject_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_backward_s > 0.0 && self.window_forward_s > 0.0) {
            return Err(Error::InvalidArgument(
                "window sizes must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Nominal sampling rate: the rate of the first trial.
    pub fn rate_hz(&self) -> Option<f64> {
        self.trials.first().map(|t| t.rate_hz)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject_id: String,
    pub activity_code: String,
}

/// On-disk JSON manifest. Trial paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub dataset: DatasetKind,
    pub rate_hz: f64,
    #[serde(default)]
    pub vertical_axis: Option<Axis>,
    #[serde(default)]
    pub window_backward_s: Option<f64>,
    #[serde(default)]
    pub window_forward_s: Option<f64>,
    #[serde(default)]
    pub schema: CsvSchema,
    #[serde(default)]
    pub adc: Option<AdcSpec>,
    #[serde(default)]
    pub label_map: LabelMap,
    #[serde(default)]
    pub exclude_subjects: Vec<String>,
    pub trials: Vec<ManifestEntry>,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let trials = file
        .trials
        .par_iter()
        .filter(|e| !file.exclude_subjects.contains(&e.subject_id))
        .map(|e| {
            let opts = LoadOptions {
                schema: file.schema.clone(),
                adc: file.adc,
                rate_hz: file.rate_hz,
                label_map: file.label_map.clone(),
                subject_id: Some(e.subject_id.clone()),
                activity_code: Some(e.activity_code.clone()),
            };
            load_trial_csv(&base.join(&e.path), &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = DatasetManifest::new(file.dataset, trials);
    if let Some(axis) = file.vertical_axis {
        manifest.vertical_axis = axis;
    }
    if let Some(b) = file.window_backward_s {
        manifest.window_backward_s = b;
    }
    if let Some(f) = file.window_forward_s {
        manifest.window_forward_s = f;
    }
    manifest.validate()?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    FallLike,
    AdlWalk,
    AdlStill,
}

impl SynthKind {
    pub fn activity_code(&self) -> &'static str {
        match self {
            SynthKind::FallLike => "F01",
            SynthKind::AdlWalk => "A01",
            SynthKind::AdlStill => "A02",
        }
    }

    fn salt(&self) -> u64 {
        match self {
            SynthKind::FallLike => 0x9e37_79b9_7f4a_7c15,
            SynthKind::AdlWalk => 0xbf58_476d_1ce4_e5b9,
            SynthKind::AdlStill => 0x94d0_49bb_1331_11eb,
        }
    }
}

fn clipped(rng: &mut ChaCha8Rng, sd: f64, bound: f64) -> f64 {
    Normal::new(0.0, sd).unwrap().sample(rng).clamp(-bound, bound)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Generates a deterministic synthetic trial of the given kind.
pub fn synth_trial(kind: SynthKind, seed: u64, rate_hz: f64, duration_s: f64) -> Result<Trial> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sampling rate must be positive, got {rate_hz}"
        )));
    }
    if !(duration_s >= 4.0 && duration_s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "synthetic trials need at least 4 s, got {duration_s}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind.salt());
    let n = (rate_hz * duration_s).round() as usize;
    let t = |j: usize| j as f64 / rate_hz;

    let samples = match kind {
        SynthKind::AdlStill => {
            let tilt: f64 = rng.random_range(0.0..0.2);
            let heading = rng.random_range(0.0..2.0 * PI);
            let g = [tilt.sin() * heading.cos(), tilt.sin() * heading.sin(), tilt.cos()];
            (0..n)
                .map(|_| {
                    Sample::new(
                        g[0] + clipped(&mut rng, 0.01, 0.05),
                        g[1] + clipped(&mut rng, 0.01, 0.05),
                        g[2] + clipped(&mut rng, 0.01, 0.05),
                    )
                })
                .collect()
        }
        SynthKind::AdlWalk => {
            let f = rng.random_range(1.0..2.0);
            let amp = rng.random_range(0.25..0.55);
            let [p1, p2, p3] = [(); 3].map(|_| rng.random_range(0.0..2.0 * PI));
            (0..n)
                .map(|j| {
                    let w = 2.0 * PI * f * t(j);
                    Sample::new(
                        0.35 * amp * (w + p1).sin() + clipped(&mut rng, 0.03, 0.1),
                        0.2 * amp * (0.5 * w + p3).sin() + clipped(&mut rng, 0.03, 0.1),
                        1.0 + amp * w.sin()
                            + 0.3 * amp * (2.0 * w + p2).sin()
                            + clipped(&mut rng, 0.03, 0.1),
                    )
                })
                .collect()
        }
        SynthKind::FallLike => synth_fall(&mut rng, n, rate_hz, duration_s),
    };
    Trial::new(
        "synthetic",
        kind.activity_code(),
        if kind == SynthKind::FallLike {
            Label::Fall
        } else {
            Label::Adl
        },
        rate_hz,
        samples,
    )
}

fn synth_fall(rng: &mut ChaCha8Rng, n: usize, rate_hz: f64, duration_s: f64) -> Vec<Sample> {
    let t = |j: usize| j as f64 / rate_hz;
    let impact = ((duration_s * rng.random_range(0.45..0.55)) * rate_hz).round() as usize;
    let impact = impact.clamp(1, n - 2);
    let t_impact = t(impact);
    let free_fall = rng.random_range(0.3..0.5);
    let floor = rng.random_range(0.1..0.35);
    let peak = rng.random_range(3.5..6.0);
    let width = 0.02;
    let dir = {
        let d: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.3..1.0),
        ];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        d.map(|c| c / len)
    };
    let lying = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let sway_phase = rng.random_range(0.0..2.0 * PI);

    let mut samples: Vec<Sample> = (0..n)
        .map(|j| {
            let tj = t(j);
            let dt = tj - t_impact;
            // gravity rotates from z (upright) to x (lying) around the impact
            let turn = smoothstep((dt + 0.1) / 0.3);
            let mut g = [
                lying * turn,
                0.0,
                (1.0 - turn) + 0.05 * (2.0 * PI * 1.5 * tj + sway_phase).sin() * (1.0 - turn),
            ];
            let ff = 1.0 - (1.0 - floor) * smoothstep((dt + free_fall) / (0.6 * free_fall));
            let ff = if dt < 0.0 { ff } else { 1.0 };
            g.iter_mut().for_each(|c| *c *= ff);
            let pulse = peak * (-(dt * dt) / (2.0 * width * width)).exp();
            let vib = if dt > 0.0 {
                0.8 * (-dt / 0.15).exp() * (2.0 * PI * 6.0 * dt).sin()
            } else {
                0.0
            };
            let noise = if dt > 0.5 { 0.01 } else { 0.02 };
            Sample::new(
                g[0] + (pulse + vib) * dir[0] + clipped(rng, noise, 0.06),
                g[1] + (pulse + vib) * dir[1] + clipped(rng, noise, 0.06),
                g[2] + (pulse + vib) * dir[2] + clipped(rng, noise, 0.06),
            )
        })
        .collect();

    // the impact sample must be the unique global maximum of the norm
    let others = samples
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != impact)
        .map(|(_, s)| s.norm())
        .fold(0.0, f64::max);
    let s = samples[impact];
    let target = s.norm().max(others + 0.25).max(3.0);
    let scale = target / s.norm();
    samples[impact] = Sample::new(s.ax * scale, s.ay * scale, s.az * scale);
    samples
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Synthetic dataset: half of each subject's trials are falls, the rest
/// alternate between walking and standing still.
pub fn synth_dataset(
    subjects: usize,
    trials_per_subject: usize,
    seed: u64,
    rate_hz: f64,
    duration_s: f64,
) -> Result<DatasetManifest> {
    let mut trials = Vec::with_capacity(subjects * trials_per_subject);
    for s in 0..subjects {
        for k in 0..trials_per_subject {
            let kind = match k % 4 {
                0 | 2 => SynthKind::FallLike,
                1 => SynthKind::AdlWalk,
                _ => SynthKind::AdlStill,
            };
            let mut trial = synth_trial(kind, mix(seed, s as u64, k as u64), rate_hz, duration_s)?;
            trial.subject_id = format!("S{:02}", s + 1);
            trials.push(trial);
        }
    }
    Ok(DatasetManifest::new(DatasetKind::Synthetic, trials))
}

/// One leave-one-subject-out fold, holding trial indices into the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per distinct subject, in sorted subject order.
pub fn partition_loso(manifest: &DatasetManifest) -> Result<Vec<Fold>> {
    let subjects = manifest.subjects();
    if subjects.len() < 2 {
        return Err(Error::SingleSubject(subjects.len()));
    }
    Ok(subjects
        .into_iter()
        .map(|subject| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..manifest.trials.len())
                .partition(|&i| manifest.trials[i].subject_id == subject);
            Fold {
                test_subject: subject,
                train,
                test,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn opts() -> LoadOptions {
        LoadOptions {
            rate_hz: 200.0,
            ..Default::default()
        }
    }

    #[test]
    fn adc_conversion() {
        let adc = AdcSpec::new(16.0, 13).unwrap();
        assert_eq!(adc.to_g(4096.0), 16.0);
        assert_eq!(adc.to_g(0.0), 0.0);
        assert!(AdcSpec::new(16.0, 7).is_err());
        assert!(AdcSpec::new(16.0, 17).is_err());
    }

    #[test]
    fn loads_g_csv_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "F14_SA01_R01.csv", "t,ax,ay,az\n0,0.1,-0.98,0.05\n0.005,0,0,1\n");
        let trial = load_trial_csv(&p, &opts()).unwrap();
        assert_eq!(trial.samples[0], Sample::new(0.1, -0.98, 0.05));
        assert_eq!(trial.activity_code, "F14");
        assert_eq!(trial.subject_id, "SA01");
        assert_eq!(trial.label, Label::Fall);
        assert_eq!(trial.len(), 2);
    }

    #[test]
    fn loads_raw_sisfall_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "D01_SA02_R01.txt",
            "  4096,0,-4096,1,2,3,4,5,6;\n  0,0,0,1,2,3,4,5,6;\n",
        );
        let o = LoadOptions {
            schema: CsvSchema::sisfall_raw(),
            adc: Some(AdcSpec::new(16.0, 13).unwrap()),
            ..opts()
        };
        let trial = load_trial_csv(&p, &o).unwrap();
        assert_eq!(trial.samples[0], Sample::new(16.0, 0.0, -16.0));
        assert_eq!(trial.samples[1], Sample::ZERO);
        assert_eq!(trial.label, Label::Adl);
    }

    #[test]
    fn load_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let missing = load_trial_csv(&dir.path().join("F01_S_R.csv"), &opts());
        assert!(matches!(missing, Err(Error::MissingFile(_))));

        let p = write(dir.path(), "F01_S1_R1.csv", "t,ax,ay,az\n0,abc,0,0\n");
        assert!(matches!(load_trial_csv(&p, &opts()), Err(Error::MalformedRow { .. })));

        let p = write(dir.path(), "F02_S1_R1.csv", "t,ax,ay,az\n");
        assert!(matches!(load_trial_csv(&p, &opts()), Err(Error::EmptyFile(_))));

        let p = write(dir.path(), "X01_S1_R1.csv", "t,ax,ay,az\n0,0,0,1\n");
        assert!(matches!(
            load_trial_csv(&p, &opts()),
            Err(Error::UnknownActivityCode(_))
        ));
    }

    #[test]
    fn loading_is_pure() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "A03_S9_R1.csv", "t,ax,ay,az\n0,0.5,0.25,1\n1,0,0,1\n");
        assert_eq!(load_trial_csv(&p, &opts()).unwrap(), load_trial_csv(&p, &opts()).unwrap());
    }

    #[test]
    fn label_map_prefixes() {
        let m = LabelMap::default();
        assert_eq!(m.label_of("Fall").unwrap(), Label::Fall);
        assert_eq!(m.label_of("ADL").unwrap(), Label::Adl);
        assert_eq!(m.label_of("D17").unwrap(), Label::Adl);
        assert!(m.label_of("Q").is_err());
    }

    #[test]
    fn manifest_roundtrip_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = Vec::new();
        for (i, kind) in [SynthKind::FallLike, SynthKind::AdlStill].iter().enumerate() {
            for s in ["S1", "S2"] {
                let t = synth_trial(*kind, i as u64, 50.0, 4.0).unwrap();
                let name = format!("{}_{s}.csv", kind.activity_code());
                write_trial_csv(&t, &dir.path().join(&name)).unwrap();
                entries.push(ManifestEntry {
                    path: name.into(),
                    subject_id: s.into(),
                    activity_code: kind.activity_code().into(),
                });
            }
        }
        let file = ManifestFile {
            dataset: DatasetKind::Synthetic,
            rate_hz: 50.0,
            vertical_axis: Some(Axis::Y),
            window_backward_s: None,
            window_forward_s: Some(1.5),
            schema: CsvSchema::default(),
            adc: None,
            label_map: LabelMap::default(),
            exclude_subjects: vec!["S2".into()],
            trials: entries,
        };
        let mp = dir.path().join("manifest.json");
        fs::write(&mp, serde_json::to_string(&file).unwrap()).unwrap();
        let m = load_manifest(&mp).unwrap();
        assert_eq!(m.trials.len(), 2);
        assert_eq!(m.vertical_axis, Axis::Y);
        assert_eq!(m.window_backward_s, 1.44);
        assert_eq!(m.window_forward_s, 1.5);
        assert_eq!(m.trials[0].label, Label::Fall);
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_trial(SynthKind::FallLike, 7, 200.0, 10.0).unwrap();
        let b = synth_trial(SynthKind::FallLike, 7, 200.0, 10.0).unwrap();
        assert_eq!(a, b);
        let c = synth_trial(SynthKind::FallLike, 8, 200.0, 10.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_amplitude_bounds() {
        let max_norm = |t: &Trial| t.samples.iter().map(Sample::norm).fold(0.0, f64::max);
        for seed in 0..20 {
            let still = synth_trial(SynthKind::AdlStill, seed, 200.0, 10.0).unwrap();
            assert!(max_norm(&still) < 1.5);
            let fall = synth_trial(SynthKind::FallLike, seed, 200.0, 10.0).unwrap();
            assert!(max_norm(&fall) >= 3.0);
            let walk = synth_trial(SynthKind::AdlWalk, seed, 200.0, 10.0).unwrap();
            assert!(max_norm(&walk) < 3.0);
        }
    }

    #[test]
    fn synth_fall_has_unique_interior_peak() {
        for seed in 0..30 {
            for (rate, dur) in [(200.0, 4.0), (238.0, 10.0), (50.0, 6.0)] {
                let t = synth_trial(SynthKind::FallLike, seed, rate, dur).unwrap();
                let norms: Vec<f64> = t.samples.iter().map(Sample::norm).collect();
                let max = norms.iter().cloned().fold(f64::MIN, f64::max);
                let at: Vec<usize> = (0..norms.len()).filter(|&j| norms[j] == max).collect();
                assert_eq!(at.len(), 1);
                assert!(at[0] > 0 && at[0] < norms.len() - 1);
            }
        }
    }

    #[test]
    fn synth_rejects_bad_args() {
        assert!(synth_trial(SynthKind::AdlWalk, 1, 0.0, 10.0).is_err());
        assert!(synth_trial(SynthKind::AdlWalk, 1, 200.0, 3.0).is_err());
        assert!(synth_trial(SynthKind::AdlWalk, 1, 200.0, -1.0).is_err());
    }

    #[test]
    fn loso_folds() {
        let m = synth_dataset(3, 4, 1, 50.0, 4.0).unwrap();
        let folds = partition_loso(&m).unwrap();
        assert_eq!(folds.len(), 3);
        let total: usize = folds.iter().map(|f| f.test.len()).sum();
        assert_eq!(total, m.trials.len());
        for f in &folds {
            assert!(f.train.iter().all(|&i| m.trials[i].subject_id != f.test_subject));
            assert!(f.test.iter().all(|&i| m.trials[i].subject_id == f.test_subject));
        }

        let m21 = synth_dataset(21, 2, 1, 50.0, 4.0).unwrap();
        assert_eq!(partition_loso(&m21).unwrap().len(), 21);

        let single = synth_dataset(1, 4, 1, 50.0, 4.0).unwrap();
        assert!(matches!(partition_loso(&single), Err(Error::SingleSubject(1))));
    }
}
