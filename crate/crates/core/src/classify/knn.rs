use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;

pub const DEFAULT_K: usize = 3;

/// Euclidean k-nearest-neighbour majority vote. Equal distances are ordered
/// by training index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl KnnModel {
    pub fn train(x: &[Vec<f64>], y: &[Label], k: usize) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("k must be odd, got {k}")));
        }
        if x.len() != y.len() {
            return Err(Error::InvalidArgument("feature/label count mismatch".into()));
        }
        if x.len() < k {
            return Err(Error::TooFewPoints {
                needed: k,
                found: x.len(),
            });
        }
        Ok(Self {
            k,
            points: x.to_vec(),
            labels: y.to_vec(),
        })
    }

    /// Indices of the `k` nearest training points, nearest first.
    pub fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (sq_dist(p, x), i))
            .collect();
        let k = self.k;
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(k);
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        let falls = self
            .neighbours(x)
            .iter()
            .filter(|&&i| self.labels[i] == Label::Fall)
            .count();
        if 2 * falls > self.k {
            Label::Fall
        } else {
            Label::Adl
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_beats_nearest() {
        let x = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.5, 0.0], vec![9.0, 9.0]];
        let y = vec![Label::Fall, Label::Fall, Label::Adl, Label::Adl];
        let m = KnnModel::train(&x, &y, 3).unwrap();
        assert_eq!(m.predict(&[0.0, 0.0]), Label::Fall);
    }

    #[test]
    fn ties_break_by_index() {
        let x = vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]];
        let y = vec![Label::Fall, Label::Adl, Label::Fall, Label::Adl];
        let m = KnnModel::train(&x, &y, 3).unwrap();
        assert_eq!(m.neighbours(&[0.0]), vec![0, 1, 2]);
        assert_eq!(m.predict(&[0.0]), Label::Fall);
    }

    #[test]
    fn training_point_with_agreeing_neighbours() {
        let x = vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0], vec![5.1]];
        let y = vec![Label::Adl, Label::Adl, Label::Adl, Label::Fall, Label::Fall];
        let m = KnnModel::train(&x, &y, 3).unwrap();
        for (xi, yi) in x.iter().zip(&y).take(3) {
            assert_eq!(m.predict(xi), *yi);
        }
    }

    #[test]
    fn errors() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![Label::Adl, Label::Fall];
        assert!(matches!(KnnModel::train(&x, &y, 3), Err(Error::TooFewPoints { .. })));
        assert!(KnnModel::train(&x, &y, 2).is_err());
    }
}
