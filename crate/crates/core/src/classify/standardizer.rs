use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature z-scoring fitted on training rows. Features with zero spread
/// map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Sample (N − 1) standard deviation; a single row gives zero spread.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("feature matrix"))?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged feature matrix".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; d];
        if rows.len() > 1 {
            for r in rows {
                std.iter_mut()
                    .zip(r.iter().zip(&mean))
                    .for_each(|(s, (x, m))| *s += (x - m) * (x - m));
            }
            std.iter_mut().for_each(|s| *s = (*s / (n - 1.0)).sqrt());
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}
