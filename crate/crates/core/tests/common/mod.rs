//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use ase_fd::ingest::Label;

/// Indices kept when keeping one sample in every `2^alpha`, by enumeration.
pub fn kept_indices(n: usize, alpha: u32) -> Vec<usize> {
    let step = 1usize << alpha;
    let mut out = Vec::new();
    for j in 0..n {
        if j % step == 0 {
            out.push(j);
        }
    }
    out
}

/// Per-rate architecture: (input values, conv channels, dense widths).
pub const ARCH_REFERENCE: [(usize, usize, &[usize]); 8] = [
    (768, 40, &[768, 768, 768, 768, 768]),
    (384, 35, &[384, 384, 384, 384, 768, 768]),
    (192, 30, &[192, 192, 192, 384, 768, 768]),
    (96, 25, &[96, 96, 96, 96, 192, 384, 768, 768]),
    (48, 20, &[48, 48, 48, 96, 192, 384, 768, 768]),
    (24, 15, &[24, 24, 48, 96, 192, 384, 768, 768]),
    (12, 10, &[12, 24, 48, 96, 192, 384, 768, 768]),
    (6, 5, &[12, 24, 48, 96, 192, 384, 768, 768]),
];

fn naive_mean(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in xs {
        s += x;
    }
    s / xs.len() as f64
}

fn central_moment(xs: &[f64], k: i32) -> f64 {
    let m = naive_mean(xs);
    let mut s = 0.0;
    for x in xs {
        s += (x - m).powi(k);
    }
    s / xs.len() as f64
}

fn naive_corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (naive_mean(a), naive_mean(b));
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    if da == 0.0 || db == 0.0 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}

/// 54 features of a tri-axial signal given per-axis values, with the
/// vertical axis index (0, 1 or 2).
pub fn feature_oracle(x: &[f64], y: &[f64], z: &[f64], vertical: usize) -> Vec<f64> {
    let n = x.len();
    let axes = [x, y, z];
    let mut norm = vec![0.0; n];
    let mut verti = vec![0.0; n];
    let mut horti = vec![0.0; n];
    for j in 0..n {
        norm[j] = (x[j] * x[j] + y[j] * y[j] + z[j] * z[j]).sqrt();
        verti[j] = axes[vertical][j].abs();
        let mut h = 0.0;
        for (k, a) in axes.iter().enumerate() {
            if k != vertical {
                h += a[j] * a[j];
            }
        }
        horti[j] = h.sqrt();
    }
    let channels: [&[f64]; 6] = [x, y, z, &norm, &verti, &horti];
    let mut per_stat: Vec<[f64; 6]> = vec![[0.0; 6]; 8];
    for (c, ch) in channels.iter().enumerate() {
        let mut hi = ch[0];
        let mut lo = ch[0];
        for &v in ch.iter() {
            if v > hi {
                hi = v;
            }
            if v < lo {
                lo = v;
            }
        }
        let constant = hi == lo;
        let mean = if constant { ch[0] } else { naive_mean(ch) };
        let var = if constant {
            0.0
        } else {
            central_moment(ch, 2) * n as f64 / (n as f64 - 1.0)
        };
        let m2 = central_moment(ch, 2);
        let kurt = if constant { 0.0 } else { central_moment(ch, 4) / (m2 * m2) };
        let skew = if constant { 0.0 } else { central_moment(ch, 3) / m2.powf(1.5) };
        per_stat[0][c] = mean;
        per_stat[1][c] = var.sqrt();
        per_stat[2][c] = var.sqrt() * var.sqrt();
        per_stat[3][c] = hi;
        per_stat[4][c] = lo;
        per_stat[5][c] = hi - lo;
        per_stat[6][c] = kurt;
        per_stat[7][c] = skew;
    }
    let mut out: Vec<f64> = per_stat.iter().flat_map(|s| s.iter().copied()).collect();
    for (a, b) in [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)] {
        out.push(naive_corr(channels[a], channels[b]));
    }
    out
}

fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

/// Exhaustive-scan k-nearest-neighbour vote; ties in distance go to the
/// lower training index.
pub fn knn_oracle(points: &[Vec<f64>], labels: &[Label], k: usize, q: &[f64]) -> (Vec<usize>, Label) {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (sq_euclid(p, q), i)).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nearest: Vec<usize> = all.iter().take(k).map(|&(_, i)| i).collect();
    let falls = nearest.iter().filter(|&&i| labels[i] == Label::Fall).count();
    let label = if 2 * falls > nearest.len() { Label::Fall } else { Label::Adl };
    (nearest, label)
}

/// `Σ c_i exp(-‖s_i − x‖² / σ²) + b`.
pub fn kernel_sum(svs: &[Vec<f64>], coef: &[f64], bias: f64, sigma: f64, x: &[f64]) -> f64 {
    let mut s = bias;
    for (sv, c) in svs.iter().zip(coef) {
        s += c * (-sq_euclid(sv, x) / (sigma * sigma)).exp();
    }
    s
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}
