use std::fs;
use std::path::Path;

use super::config::AseConfig;
use super::model::{AseModel, Params};
use crate::error::{Error, Result};
use crate::preprocess::ByteReader;

const MAGIC: &[u8; 4] = b"ASEM";
const VERSION: u8 = 1;

fn bad(reason: impl Into<String>) -> Error {
    Error::format("model checkpoint", reason)
}

impl AseModel {
    /// `ASEM` magic, version byte, configuration, then each tensor as a `u32`
    /// length followed by little-endian `f32` values, in declaration order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.config();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(c.alpha as u8);
        for v in [c.in_per_axis, c.conv_channels, c.out_per_axis, c.encoder_dense_widths.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for &w in &c.encoder_dense_widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.extend_from_slice(&c.l2_weight.to_le_bytes());
        out.extend_from_slice(&c.dropout_p.to_le_bytes());
        for (t, _) in self.params().tensors() {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            for v in t {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<AseModel> {
        let mut r = ByteReader::new(bytes);
        if r.take(4) != Some(MAGIC.as_slice()) {
            return Err(bad("bad magic"));
        }
        match r.u8() {
            Some(VERSION) => {}
            Some(v) => return Err(bad(format!("unsupported version {v}"))),
            None => return Err(bad("truncated header")),
        }
        let alpha = r.u8().ok_or_else(|| bad("truncated header"))?;
        let mut next = || r.u32().map(|v| v as usize).ok_or_else(|| bad("truncated header"));
        let in_per_axis = next()?;
        let conv_channels = next()?;
        let out_per_axis = next()?;
        let n_dense = next()?;
        if n_dense > 64 {
            return Err(bad(format!("implausible dense layer count {n_dense}")));
        }
        let widths = (0..n_dense).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let l2 = r.f64().ok_or_else(|| bad("truncated header"))?;
        let dropout = r.f64().ok_or_else(|| bad("truncated header"))?;
        let config = AseConfig::custom(in_per_axis, conv_channels, widths, out_per_axis, l2, dropout)
            .map_err(|e| bad(format!("invalid configuration: {e}")))?;
        if config.alpha != u32::from(alpha) {
            return Err(bad(format!("alpha {alpha} inconsistent with layer geometry")));
        }

        let mut params = Params::zeros(&config);
        for (k, (t, _)) in params.tensors_mut().into_iter().enumerate() {
            let len = r.u32().ok_or_else(|| bad(format!("truncated tensor {k}")))? as usize;
            if len != t.len() {
                return Err(bad(format!(
                    "tensor {k} has {len} values, configuration implies {}",
                    t.len()
                )));
            }
            for v in t.iter_mut() {
                *v = f64::from(r.f32().ok_or_else(|| bad(format!("truncated tensor {k}")))?);
            }
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        if !params.all_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(AseModel::from_parts(config, params))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<AseModel> {
        AseModel::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
