//! Impact-defined windowing, dyadic downsampling, fixed frame geometry and
//! min-max normalization.
//!
//! The pipeline order is: window the full-rate trial, downsample the window,
//! resample it to a frame, normalize the frame.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Sample, Trial};

/// Per-axis length of a full-rate frame.
pub const FRAME_LEN: usize = 256;
pub const AXES: usize = 3;
pub const MAX_ALPHA: u32 = 7;

const FRAME_MAGIC: &[u8; 4] = b"ASEF";
const FRAME_VERSION: u8 = 1;

pub fn check_alpha(alpha: u32) -> Result<()> {
    if alpha > MAX_ALPHA {
        Err(Error::AlphaOutOfRange(alpha))
    } else {
        Ok(())
    }
}

/// Per-axis frame length for downsampling exponent `alpha`: `256 / 2^alpha`.
pub fn frame_len(alpha: u32) -> Result<usize> {
    check_alpha(alpha)?;
    Ok(FRAME_LEN >> alpha)
}

/// Inverse of [`frame_len`].
pub fn alpha_for_len(per_axis_len: usize) -> Result<u32> {
    (0..=MAX_ALPHA)
        .find(|&a| FRAME_LEN >> a == per_axis_len)
        .ok_or(Error::GeometryMismatch {
            expected: FRAME_LEN,
            found: per_axis_len,
        })
}

/// Keeps every `2^alpha`-th element starting with the first.
pub fn decimate<T: Clone>(values: &[T], alpha: u32) -> Result<Vec<T>> {
    check_alpha(alpha)?;
    Ok(values.iter().step_by(1 << alpha).cloned().collect())
}

/// Dyadic downsampling by pure sample dropping; the output rate is `R / 2^alpha`.
pub fn downsample(trial: &Trial, alpha: u32) -> Result<Trial> {
    if trial.is_empty() {
        return Err(Error::EmptyInput("trial samples"));
    }
    Ok(Trial {
        samples: decimate(&trial.samples, alpha)?,
        rate_hz: trial.rate_hz / f64::from(1u32 << alpha),
        ..trial.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub ws_backward_s: f64,
    pub ws_forward_s: f64,
}

impl WindowSpec {
    pub fn new(ws_backward_s: f64, ws_forward_s: f64) -> Result<Self> {
        if !(ws_backward_s > 0.0 && ws_forward_s > 0.0) {
            return Err(Error::InvalidArgument(
                "window sizes must be positive".into(),
            ));
        }
        Ok(Self {
            ws_backward_s,
            ws_forward_s,
        })
    }

    /// Backward and forward sample counts at `rate_hz`.
    pub fn extents(&self, rate_hz: f64) -> (usize, usize) {
        (
            (self.ws_backward_s * rate_hz).round() as usize,
            (self.ws_forward_s * rate_hz).round() as usize,
        )
    }

    pub fn len_at(&self, rate_hz: f64) -> usize {
        let (b, f) = self.extents(rate_hz);
        b + 1 + f
    }
}

/// Index of the largest-norm sample; ties go to the first occurrence.
pub fn impact_index(samples: &[Sample]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, s) in samples.iter().enumerate() {
        let n = s.norm();
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((j, n));
        }
    }
    best.map(|(j, _)| j)
}

/// Window of `round(WS_b·R) + 1 + round(WS_f·R)` samples centred on the impact
/// sample. Positions outside the trial are zero.
pub fn impact_window(trial: &Trial, spec: &WindowSpec) -> Result<Vec<Sample>> {
    let impact = impact_index(&trial.samples).ok_or(Error::EmptyInput("trial samples"))?;
    let (back, fwd) = spec.extents(trial.rate_hz);
    let start = impact as isize - back as isize;
    Ok((0..back + 1 + fwd)
        .map(|k| {
            let idx = start + k as isize;
            if idx >= 0 && (idx as usize) < trial.samples.len() {
                trial.samples[idx as usize]
            } else {
                Sample::ZERO
            }
        })
        .collect())
}

/// Linear resampling of `xs` onto `len` points spanning the same interval.
pub fn resample_linear(xs: &[f64], len: usize) -> Vec<f64> {
    let n = xs.len();
    if n == 0 || len == 0 {
        return Vec::new();
    }
    if n == 1 || len == 1 {
        return vec![xs[0]; len];
    }
    let step = (n - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|i| {
            let pos = i as f64 * step;
            let i0 = (pos.floor() as usize).min(n - 2);
            let frac = pos - i0 as f64;
            xs[i0] + (xs[i0 + 1] - xs[i0]) * frac
        })
        .collect()
}

/// Nearest-neighbour resampling onto `len` points.
pub fn resample_nearest(xs: &[f64], len: usize) -> Vec<f64> {
    let n = xs.len();
    if n == 0 || len == 0 {
        return Vec::new();
    }
    if len == 1 {
        return vec![xs[0]];
    }
    let step = (n - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|i| xs[((i as f64 * step).round() as usize).min(n - 1)])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: f64,
    pub max: f64,
}

/// Tri-axial frame stored axis-major: all x values, then y, then z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    per_axis_len: usize,
    values: Vec<f64>,
    norm: Option<NormParams>,
    source_rate_hz: f64,
}

impl Frame {
    pub fn new(per_axis_len: usize, values: Vec<f64>, source_rate_hz: f64) -> Result<Self> {
        alpha_for_len(per_axis_len)?;
        if values.len() != AXES * per_axis_len {
            return Err(Error::GeometryMismatch {
                expected: per_axis_len,
                found: values.len() / AXES,
            });
        }
        Ok(Self {
            per_axis_len,
            values,
            norm: None,
            source_rate_hz,
        })
    }

    pub(crate) fn with_norm(mut self, norm: Option<NormParams>) -> Self {
        self.norm = norm;
        self
    }

    pub fn per_axis_len(&self) -> usize {
        self.per_axis_len
    }

    pub fn alpha(&self) -> u32 {
        alpha_for_len(self.per_axis_len).expect("frame geometry validated on construction")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.values[axis * self.per_axis_len..(axis + 1) * self.per_axis_len]
    }

    pub fn norm_params(&self) -> Option<NormParams> {
        self.norm
    }

    pub fn is_normalized(&self) -> bool {
        self.norm.is_some()
    }

    pub fn source_rate_hz(&self) -> f64 {
        self.source_rate_hz
    }

    pub fn samples(&self) -> Vec<Sample> {
        (0..self.per_axis_len)
            .map(|j| Sample::new(self.axis(0)[j], self.axis(1)[j], self.axis(2)[j]))
            .collect()
    }

    /// Resamples every axis to `per_axis_len` points, keeping normalization
    /// parameters and source rate.
    pub fn resampled(&self, per_axis_len: usize) -> Result<Frame> {
        let values = (0..AXES)
            .flat_map(|a| resample_linear(self.axis(a), per_axis_len))
            .collect();
        Ok(Frame::new(per_axis_len, values, self.source_rate_hz)?.with_norm(self.norm))
    }

    /// `ASEF` magic, version, alpha, `u32` per-axis length, `f64` rate, the
    /// values as little-endian `f64`, then a flag byte and optional min/max.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + 8 * self.values.len() + 17);
        out.extend_from_slice(FRAME_MAGIC);
        out.push(FRAME_VERSION);
        out.push(self.alpha() as u8);
        out.extend_from_slice(&(self.per_axis_len as u32).to_le_bytes());
        out.extend_from_slice(&self.source_rate_hz.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        match self.norm {
            Some(p) => {
                out.push(1);
                out.extend_from_slice(&p.min.to_le_bytes());
                out.extend_from_slice(&p.max.to_le_bytes());
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Frame> {
        let bad = |reason: &str| Error::format("frame", reason);
        let mut r = ByteReader::new(bytes);
        if r.take(4).ok_or_else(|| bad("truncated header"))? != FRAME_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u8().ok_or_else(|| bad("truncated header"))?;
        if version != FRAME_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let alpha = r.u8().ok_or_else(|| bad("truncated header"))?;
        let len = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
        if frame_len(u32::from(alpha)).ok() != Some(len) {
            return Err(bad(&format!("alpha {alpha} inconsistent with length {len}")));
        }
        let rate = r.f64().ok_or_else(|| bad("truncated header"))?;
        let values = (0..AXES * len)
            .map(|_| r.f64())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("truncated values"))?;
        let norm = match r.u8().ok_or_else(|| bad("missing normalization flag"))? {
            0 => None,
            1 => Some(NormParams {
                min: r.f64().ok_or_else(|| bad("truncated normalization"))?,
                max: r.f64().ok_or_else(|| bad("truncated normalization"))?,
            }),
            f => return Err(bad(&format!("bad normalization flag {f}"))),
        };
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Frame::new(len, values, rate)?.with_norm(norm))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Frame> {
        Frame::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes }
    }

    pub(crate) fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.bytes.len() < n {
            return None;
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Some(head)
    }

    pub(crate) fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Option<f32> {
        self.take(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// Resamples each axis of `window` to `256 / 2^alpha` points.
pub fn to_frame(window: &[Sample], alpha: u32, source_rate_hz: f64) -> Result<Frame> {
    let len = frame_len(alpha)?;
    if window.is_empty() {
        return Err(Error::EmptyInput("window"));
    }
    let mut values = Vec::with_capacity(AXES * len);
    for axis in [|s: &Sample| s.ax, |s: &Sample| s.ay, |s: &Sample| s.az] {
        let xs: Vec<f64> = window.iter().map(axis).collect();
        values.extend(resample_linear(&xs, len));
    }
    Frame::new(len, values, source_rate_hz)
}

/// Global min-max scaling over all three axes. A constant frame maps to zeros.
pub fn minmax_normalize(frame: &Frame) -> Result<Frame> {
    if frame.is_normalized() {
        return Err(Error::AlreadyNormalized);
    }
    let min = frame.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = frame.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let values = if span > 0.0 {
        frame.values.iter().map(|v| (v - min) / span).collect()
    } else {
        vec![0.0; frame.values.len()]
    };
    Ok(Frame {
        values,
        norm: Some(NormParams { min, max }),
        ..frame.clone()
    })
}

pub fn denormalize(frame: &Frame) -> Result<Frame> {
    let p = frame.norm.ok_or(Error::MissingNormParams)?;
    let span = p.max - p.min;
    Ok(Frame {
        values: frame.values.iter().map(|v| v * span + p.min).collect(),
        norm: None,
        ..frame.clone()
    })
}

/// Window → downsample → frame → normalize, for the full-rate frame (`alpha = 0`)
/// and the low-resolution frame at `alpha`.
pub fn frame_pair(trial: &Trial, spec: &WindowSpec, alpha: u32) -> Result<(Frame, Frame)> {
    let window = impact_window(trial, spec)?;
    let hr = minmax_normalize(&to_frame(&window, 0, trial.rate_hz)?)?;
    let lr_window = decimate(&window, alpha)?;
    let lr_rate = trial.rate_hz / f64::from(1u32 << alpha);
    let lr = minmax_normalize(&to_frame(&lr_window, alpha, lr_rate)?)?;
    Ok((lr, hr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;
    use proptest::prelude::*;

    fn trial_from(samples: Vec<Sample>, rate: f64) -> Trial {
        Trial::new("s", "A01", Label::Adl, rate, samples).unwrap()
    }

    fn ramp(n: usize) -> Vec<Sample> {
        (0..n).map(|j| Sample::new(j as f64 * 0.01, 0.0, 1.0)).collect()
    }

    #[test]
    fn downsample_keeps_first_of_every_block() {
        let t = trial_from(ramp(5), 200.0);
        let d = downsample(&t, 1).unwrap();
        assert_eq!(d.samples, vec![t.samples[0], t.samples[2], t.samples[4]]);
        assert_eq!(d.rate_hz, 100.0);
        assert_eq!(downsample(&t, 0).unwrap(), t);
        assert!(matches!(downsample(&t, 8), Err(Error::AlphaOutOfRange(8))));
    }

    #[test]
    fn downsample_table_sizes() {
        let values: Vec<u32> = (0..768).collect();
        assert_eq!(decimate(&values, 7).unwrap().len(), 6);
    }

    #[test]
    fn window_geometry() {
        let mut samples = vec![Sample::new(0.0, 0.0, 1.0); 1200];
        samples[400] = Sample::new(3.0, 0.0, 1.0);
        let t = trial_from(samples, 200.0);
        let spec = WindowSpec::new(1.44, 2.0).unwrap();
        let w = impact_window(&t, &spec).unwrap();
        assert_eq!(w.len(), 689);
        assert_eq!(w[288], t.samples[400]);
        assert_eq!(w[0], t.samples[112]);
        assert_eq!(w[688], t.samples[800]);
    }

    #[test]
    fn window_zero_pads_at_edges() {
        let mut samples = vec![Sample::new(0.0, 0.0, 1.0); 300];
        samples[0] = Sample::new(5.0, 0.0, 0.0);
        let t = trial_from(samples, 200.0);
        let spec = WindowSpec::new(1.44, 2.0).unwrap();
        let w = impact_window(&t, &spec).unwrap();
        assert_eq!(w.len(), 689);
        assert!(w[..288].iter().all(|s| *s == Sample::ZERO));
        assert_eq!(w[288], t.samples[0]);
        assert!(w[288 + 300..].iter().all(|s| *s == Sample::ZERO));
    }

    #[test]
    fn impact_tie_breaks_to_first() {
        let t = trial_from(vec![Sample::new(0.0, 0.0, 1.0); 10], 10.0);
        assert_eq!(impact_index(&t.samples), Some(0));
    }

    #[test]
    fn frame_sizes() {
        let w = ramp(689);
        let f0 = to_frame(&w, 0, 200.0).unwrap();
        assert_eq!(f0.values().len(), 768);
        let f7 = to_frame(&w, 7, 200.0 / 128.0).unwrap();
        assert_eq!(f7.values().len(), 6);
        assert_eq!(f7.alpha(), 7);
        assert!(to_frame(&w, 8, 1.0).is_err());
        assert!(to_frame(&[], 0, 1.0).is_err());
    }

    #[test]
    fn constant_and_ramp_reproduced() {
        let c = vec![Sample::new(0.1, -0.3, 0.7); 37];
        let f = to_frame(&c, 2, 50.0).unwrap();
        assert!(f.axis(0).iter().all(|&v| v == 0.1));
        assert!(f.axis(1).iter().all(|&v| v == -0.3));
        assert!(f.axis(2).iter().all(|&v| v == 0.7));

        let xs: Vec<f64> = (0..101).map(|j| 2.0 + 0.5 * j as f64).collect();
        let r = resample_linear(&xs, 11);
        for (i, v) in r.iter().enumerate() {
            assert!((v - (2.0 + 5.0 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_examples() {
        let f = Frame::new(2, vec![0.0, 5.0, 10.0, 0.0, 5.0, 10.0], 1.0).unwrap();
        let n = minmax_normalize(&f).unwrap();
        assert_eq!(n.values(), &[0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
        assert!(minmax_normalize(&n).is_err());

        let f = Frame::new(2, vec![-2.0, 0.0, 6.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(minmax_normalize(&f).unwrap().values()[1], 0.25);

        let c = Frame::new(2, vec![3.5; 6], 1.0).unwrap();
        let n = minmax_normalize(&c).unwrap();
        assert!(n.values().iter().all(|&v| v == 0.0));
        assert_eq!(n.norm_params(), Some(NormParams { min: 3.5, max: 3.5 }));
        assert_eq!(denormalize(&n).unwrap().values(), &[3.5; 6]);
    }

    #[test]
    fn denormalize_examples() {
        let f = Frame::new(2, vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0], 1.0)
            .unwrap()
            .with_norm(Some(NormParams { min: 0.0, max: 10.0 }));
        assert_eq!(denormalize(&f).unwrap().values(), &[0.0, 5.0, 10.0, 0.0, 5.0, 10.0]);
        let raw = Frame::new(2, vec![0.0; 6], 1.0).unwrap();
        assert!(matches!(denormalize(&raw), Err(Error::MissingNormParams)));
    }

    #[test]
    fn frame_bytes_reject_garbage() {
        let f = to_frame(&ramp(50), 5, 6.25).unwrap();
        let mut bytes = f.to_bytes();
        assert!(Frame::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(Frame::from_bytes(&bytes).is_err());
        let mut bytes = f.to_bytes();
        bytes[5] = 3; // alpha no longer matches the stored length
        assert!(Frame::from_bytes(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn frame_bytes_roundtrip(vals in prop::collection::vec(-16.0f64..16.0, 24), norm in any::<bool>()) {
            let f = Frame::new(8, vals, 12.5).unwrap();
            let f = if norm { minmax_normalize(&f).unwrap() } else { f };
            let back = Frame::from_bytes(&f.to_bytes()).unwrap();
            prop_assert_eq!(back, f);
        }

        #[test]
        fn normalize_roundtrip(vals in prop::collection::vec(-16.0f64..16.0, 48)) {
            let f = Frame::new(16, vals, 25.0).unwrap();
            let n = minmax_normalize(&f).unwrap();
            prop_assert!(n.values().iter().all(|v| (0.0..=1.0).contains(v)));
            let back = denormalize(&n).unwrap();
            let span = n.norm_params().map(|p| p.max - p.min).unwrap();
            prop_assume!(span > 0.0);
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(span));
            }
        }

        #[test]
        fn window_length_independent_of_impact(pos in 0usize..500, n in 1usize..500) {
            let pos = pos % n;
            let mut samples = vec![Sample::new(0.0, 0.0, 1.0); n];
            samples[pos] = Sample::new(0.0, 4.0, 0.0);
            let t = trial_from(samples, 200.0);
            let spec = WindowSpec::new(1.44, 2.0).unwrap();
            prop_assert_eq!(impact_window(&t, &spec).unwrap().len(), spec.len_at(200.0));
        }

        #[test]
        fn downsample_composes(n in 1usize..600, a1 in 0u32..=7, a2 in 0u32..=7) {
            prop_assume!(a1 + a2 <= 7);
            let t = trial_from(ramp(n), 200.0);
            let twice = downsample(&downsample(&t, a1).unwrap(), a2).unwrap();
            prop_assert_eq!(twice, downsample(&t, a1 + a2).unwrap());
        }
    }
}
