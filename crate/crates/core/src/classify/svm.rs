use serde::{Deserialize, Serialize};

use super::knn::sq_dist;
use crate::error::{Error, Result};
use crate::ingest::Label;

/// Soft-margin SVM hyperparameters. The RBF kernel is
/// `exp(-‖u − v‖² / kernel_scale²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub box_constraint: f64,
    pub kernel_scale: f64,
    /// Stop when the maximal KKT violation drops below this.
    pub tolerance: f64,
    /// Alphas within this distance of a bound are snapped onto it.
    pub clip_eps: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            box_constraint: 1.0,
            kernel_scale: 1.0,
            tolerance: 1e-3,
            clip_eps: 1e-12,
            max_iter: 10_000_000,
        }
    }
}

pub fn rbf(u: &[f64], v: &[f64], scale: f64) -> f64 {
    (-sq_dist(u, v) / (scale * scale)).exp()
}

fn sign_of(label: Label) -> f64 {
    match label {
        Label::Fall => 1.0,
        Label::Adl => -1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub params: SvmParams,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final `max_up(−y∇) − min_low(−y∇)` gap.
    pub kkt_gap: f64,
}

impl SvmModel {
    /// SMO on the dual, selecting the maximal-violating pair each iteration.
    pub fn train(x: &[Vec<f64>], y: &[Label], params: SvmParams) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument("feature/label count mismatch".into()));
        }
        if x.is_empty() {
            return Err(Error::EmptyInput("svm training set"));
        }
        if !y.contains(&Label::Fall) || !y.contains(&Label::Adl) {
            return Err(Error::SingleClass);
        }
        if !(params.box_constraint > 0.0 && params.kernel_scale > 0.0) {
            return Err(Error::InvalidArgument(
                "box constraint and kernel scale must be positive".into(),
            ));
        }
        let n = x.len();
        let c = params.box_constraint;
        let ys: Vec<f64> = y.iter().map(|&l| sign_of(l)).collect();
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            kernel[i * n + i] = 1.0;
            for j in 0..i {
                let k = rbf(&x[i], &x[j], params.kernel_scale);
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
        }
        let k = |i: usize, j: usize| kernel[i * n + j];

        let mut alpha = vec![0.0; n];
        // gradient of ½αᵀQα − eᵀα
        let mut grad = vec![-1.0; n];
        let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
        let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

        let mut iterations = 0;
        let mut gap;
        loop {
            let mut i_best = None;
            let mut m_up = f64::NEG_INFINITY;
            let mut j_best = None;
            let mut m_low = f64::INFINITY;
            for t in 0..n {
                let v = -ys[t] * grad[t];
                if in_up(alpha[t], ys[t]) && v > m_up {
                    m_up = v;
                    i_best = Some(t);
                }
                if in_low(alpha[t], ys[t]) && v < m_low {
                    m_low = v;
                    j_best = Some(t);
                }
            }
            gap = m_up - m_low;
            let (Some(i), Some(j)) = (i_best, j_best) else {
                break;
            };
            if gap < params.tolerance || iterations >= params.max_iter {
                break;
            }
            iterations += 1;

            let quad = (k(i, i) + k(j, j) - 2.0 * k(i, j)).max(1e-12);
            let (old_i, old_j) = (alpha[i], alpha[j]);
            if ys[i] != ys[j] {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            for a in [i, j] {
                if alpha[a] < params.clip_eps {
                    alpha[a] = 0.0;
                } else if alpha[a] > c - params.clip_eps {
                    alpha[a] = c;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += ys[t] * (ys[i] * k(t, i) * di + ys[j] * k(t, j) * dj);
            }
        }

        // bias: mean of −y∇ over free vectors, midpoint of the bounds otherwise
        let mut free_sum = 0.0;
        let mut free = 0usize;
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..n {
            let v = -ys[t] * grad[t];
            if alpha[t] > 0.0 && alpha[t] < c {
                free_sum += v;
                free += 1;
            } else if in_up(alpha[t], ys[t]) {
                lb = lb.max(v);
            } else {
                ub = ub.min(v);
            }
        }
        let bias = if free > 0 {
            free_sum / free as f64
        } else if ub.is_finite() && lb.is_finite() {
            (ub + lb) / 2.0
        } else if ub.is_finite() {
            ub
        } else {
            lb
        };

        let (support_vectors, dual_coef) = (0..n)
            .filter(|&t| alpha[t] > 0.0)
            .map(|t| (x[t].clone(), alpha[t] * ys[t]))
            .unzip();
        Ok(Self {
            params,
            support_vectors,
            dual_coef,
            bias,
            iterations,
            converged: gap < params.tolerance,
            kkt_gap: gap,
        })
    }

    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, coef)| coef * rbf(sv, x, self.params.kernel_scale))
            .sum::<f64>()
            + self.bias
    }

    /// Label and decision value; positive values are falls.
    pub fn predict(&self, x: &[f64]) -> (Label, f64) {
        let d = self.decision_value(x);
        (if d > 0.0 { Label::Fall } else { Label::Adl }, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair() {
        let x = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let y = vec![Label::Fall, Label::Adl];
        let m = SvmModel::train(&x, &y, SvmParams::default()).unwrap();
        assert!(m.decision_value(&[0.0, 0.0]).abs() < 1e-6);
        assert_eq!(m.predict(&[2.0, 0.0]).0, Label::Fall);
        assert_eq!(m.predict(&[-2.0, 0.0]).0, Label::Adl);
        let sum: f64 = m.dual_coef.iter().sum();
        assert!(sum.abs() < 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            SvmModel::train(&x, &[Label::Adl, Label::Adl], SvmParams::default()),
            Err(Error::SingleClass)
        ));
    }
}
