//! Six derived channels per sample and the 54 statistical features computed
//! from them.
//!
//! Conventions: sample (N − 1) standard deviation and variance; kurtosis
//! `m4 / m2²` and skewness `m3 / m2^1.5` from population central moments.
//! A channel with zero spread has kurtosis, skewness and every correlation
//! involving it equal to 0.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Axis, Label};
use crate::preprocess::Frame;

pub const FEATURE_COUNT: usize = 54;

pub const CHANNEL_NAMES: [&str; 6] = ["ax", "ay", "az", "anorm", "averti", "ahorti"];
const STAT_NAMES: [&str; 8] = ["mean", "std", "var", "max", "min", "range", "kurt", "skew"];
/// Index pairs into the six channels for the correlation features.
const CORR_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)];

/// Per-sample `a_x, a_y, a_z, a_norm, a_verti, a_horti`, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SixChannelFrame {
    pub channels: [Vec<f64>; 6],
}

impl SixChannelFrame {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn derive_channels(frame: &Frame, vertical_axis: Axis) -> Result<SixChannelFrame> {
    if frame.is_normalized() {
        return Err(Error::InvalidArgument(
            "features are computed on denormalized frames".into(),
        ));
    }
    let [h1, h2] = vertical_axis.others();
    let samples = frame.samples();
    let mut ch: [Vec<f64>; 6] = Default::default();
    for s in &samples {
        let (a, b) = (s.component(h1), s.component(h2));
        ch[0].push(s.ax);
        ch[1].push(s.ay);
        ch[2].push(s.az);
        ch[3].push(s.norm());
        ch[4].push(s.component(vertical_axis).abs());
        ch[5].push((a * a + b * b).sqrt());
    }
    Ok(SixChannelFrame { channels: ch })
}

/// Feature names in vector order, e.g. `mean_ax`, …, `corr_averti_ahorti`.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for stat in STAT_NAMES {
        for ch in CHANNEL_NAMES {
            names.push(format!("{stat}_{ch}"));
        }
    }
    for (a, b) in CORR_PAIRS {
        names.push(format!("corr_{}_{}", CHANNEL_NAMES[a], CHANNEL_NAMES[b]));
    }
    names
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(#[serde(with = "fixed54")] pub [f64; FEATURE_COUNT]);

mod fixed54 {
    use super::FEATURE_COUNT;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; FEATURE_COUNT], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; FEATURE_COUNT], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f64>| D::Error::invalid_length(v.len(), &"54 features"))
    }
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ChannelStats {
    mean: f64,
    std: f64,
    max: f64,
    min: f64,
    kurtosis: f64,
    skewness: f64,
}

fn channel_stats(xs: &[f64]) -> ChannelStats {
    let n = xs.len() as f64;
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == min {
        return ChannelStats {
            mean: xs[0],
            std: 0.0,
            max,
            min,
            kurtosis: 0.0,
            skewness: 0.0,
        };
    }
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = (m2 / (n - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (kurtosis, skewness) = if m2 > 0.0 {
        (m4 / (m2 * m2), m3 / m2.powf(1.5))
    } else {
        (0.0, 0.0)
    };
    ChannelStats {
        mean,
        std,
        max,
        min,
        kurtosis,
        skewness,
    }
}

fn pearson(a: &[f64], ma: f64, b: &[f64], mb: f64) -> f64 {
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa.sqrt() * sbb.sqrt())
    } else {
        0.0
    }
}

pub fn extract(scf: &SixChannelFrame) -> Result<FeatureVector> {
    if scf.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            found: scf.len(),
        });
    }
    let stats: Vec<ChannelStats> = scf.channels.iter().map(|c| channel_stats(c)).collect();
    let mut f = [0.0; FEATURE_COUNT];
    for (c, s) in stats.iter().enumerate() {
        f[c] = s.mean;
        f[6 + c] = s.std;
        f[12 + c] = s.std * s.std;
        f[18 + c] = s.max;
        f[24 + c] = s.min;
        f[30 + c] = s.max - s.min;
        f[36 + c] = s.kurtosis;
        f[42 + c] = s.skewness;
    }
    for (k, (a, b)) in CORR_PAIRS.iter().enumerate() {
        f[48 + k] = if stats[*a].std == 0.0 || stats[*b].std == 0.0 {
            0.0
        } else {
            pearson(&scf.channels[*a], stats[*a].mean, &scf.channels[*b], stats[*b].mean)
        };
    }
    Ok(FeatureVector(f))
}

/// Convenience: derive channels and extract features from a denormalized frame.
pub fn frame_features(frame: &Frame, vertical_axis: Axis) -> Result<FeatureVector> {
    extract(&derive_channels(frame, vertical_axis)?)
}

/// One row of the exported feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub subject_id: String,
    pub label: Label,
    pub features: FeatureVector,
}

/// Writes `subject_id,label,<54 named columns>` CSV.
pub fn write_feature_csv(rows: &[FeatureRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["subject_id".to_string(), "label".to_string()];
    header.extend(feature_names());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.subject_id.clone(), r.label.as_str().to_string()];
        rec.extend(r.features.0.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::MissingFile(path.to_path_buf())
        }
        _ => Error::Csv(e),
    })?;
    let headers = r.headers()?.clone();
    if headers.len() != FEATURE_COUNT + 2 {
        return Err(Error::format(
            "feature csv",
            format!("expected {} columns, found {}", FEATURE_COUNT + 2, headers.len()),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let malformed = |reason: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line: i + 2,
            reason,
        };
        let label: Label = rec[1].parse().map_err(|e: Error| malformed(e.to_string()))?;
        let mut f = [0.0; FEATURE_COUNT];
        for (k, v) in f.iter_mut().enumerate() {
            *v = rec[k + 2]
                .parse()
                .map_err(|_| malformed(format!("non-numeric feature `{}`", &rec[k + 2])))?;
        }
        rows.push(FeatureRow {
            subject_id: rec[0].to_string(),
            label,
            features: FeatureVector(f),
        });
    }
    Ok(rows)
}
