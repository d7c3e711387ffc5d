//! FLOP counts for the enhancement model and their mapping to power draw,
//! battery life and response time on a small microcontroller.

use serde::{Deserialize, Serialize};

use crate::ase::AseConfig;
use crate::preprocess::AXES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerShape {
    /// 3×3 same-padded convolution over `in_ch × rows × cols`.
    Conv3x3 {
        in_ch: usize,
        out_ch: usize,
        rows: usize,
        cols: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        bias: bool,
        relu: bool,
    },
}

impl LayerShape {
    /// 2 FLOPs per multiply-accumulate, 1 per bias add, 1 per ReLU.
    pub fn flops(&self) -> u64 {
        match *self {
            LayerShape::Conv3x3 {
                in_ch,
                out_ch,
                rows,
                cols,
            } => {
                let outputs = (out_ch * rows * cols) as u64;
                outputs * (2 * 9 * in_ch as u64 + 1)
            }
            LayerShape::Dense {
                inputs,
                outputs,
                bias,
                relu,
            } => {
                let (i, o) = (inputs as u64, outputs as u64);
                2 * i * o + if bias { o } else { 0 } + if relu { o } else { 0 }
            }
        }
    }
}

/// Layer shapes of one forward pass, in execution order.
pub fn config_layers(config: &AseConfig) -> Vec<LayerShape> {
    let c = config.conv_channels;
    let mut layers = vec![
        LayerShape::Conv3x3 {
            in_ch: 1,
            out_ch: c,
            rows: AXES,
            cols: config.in_per_axis,
        },
        LayerShape::Conv3x3 {
            in_ch: c,
            out_ch: c,
            rows: AXES,
            cols: config.in_per_axis,
        },
    ];
    let mut inputs = config.conv_flat_len();
    for &w in &config.encoder_dense_widths {
        layers.push(LayerShape::Dense {
            inputs,
            outputs: w,
            bias: true,
            relu: true,
        });
        inputs = w;
    }
    layers.push(LayerShape::Conv3x3 {
        in_ch: 1,
        out_ch: 1,
        rows: AXES,
        cols: config.out_per_axis,
    });
    let out = config.decoder_dense_width();
    layers.push(LayerShape::Dense {
        inputs: out,
        outputs: out,
        bias: true,
        relu: false,
    });
    layers
}

pub fn count_flops(layers: &[LayerShape]) -> u64 {
    layers.iter().map(LayerShape::flops).sum()
}

/// Millions of FLOPs for one forward pass of `config`.
pub fn count_mflops(config: &AseConfig) -> f64 {
    count_flops(&config_layers(config)) as f64 / 1e6
}

/// Simulated microcontroller: clock, battery capacity and two linear
/// coefficients fitted to reference per-rate measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub clock_hz: f64,
    pub battery_mah: f64,
    pub ma_per_mflop: f64,
    pub cycles_per_flop: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            clock_hz: 80e6,
            battery_mah: 1000.0,
            ma_per_mflop: 1.283,
            cycles_per_flop: 7.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub power_ma: f64,
    /// `None` when the power draw is zero (unbounded battery life).
    pub battery_life_h: Option<f64>,
    pub response_time_s: f64,
}

impl CostModel {
    pub fn estimate(&self, mflops: f64) -> CostEstimate {
        let power_ma = self.ma_per_mflop * mflops;
        CostEstimate {
            power_ma,
            battery_life_h: (power_ma > 0.0).then(|| self.battery_mah / power_ma),
            response_time_s: mflops * 1e6 * self.cycles_per_flop / self.clock_hz,
        }
    }
}

/// Reference per-rate measurements for the eight model sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub alpha: u32,
    pub sisfall_hz: f64,
    pub fallalld_hz: f64,
    pub mflops: f64,
    pub power_mah: f64,
    pub battery_h: f64,
    pub response_s: f64,
}

const fn row(alpha: u32, s: f64, f: f64, m: f64, p: f64, b: f64, r: f64) -> ReferenceRow {
    ReferenceRow {
        alpha,
        sisfall_hz: s,
        fallalld_hz: f,
        mflops: m,
        power_mah: p,
        battery_h: b,
        response_s: r,
    }
}

pub const REFERENCE_TABLE: [ReferenceRow; 8] = [
    row(0, 200.0, 238.0, 915.0, 1173.5, 0.9, 80.2),
    row(1, 100.0, 119.0, 456.0, 585.2, 1.7, 40.0),
    row(2, 50.0, 59.5, 227.0, 291.1, 3.4, 19.9),
    row(3, 25.0, 29.75, 112.0, 144.0, 6.9, 9.8),
    row(4, 12.5, 14.88, 54.9, 70.5, 14.2, 4.8),
    row(5, 6.25, 7.44, 26.3, 33.7, 29.7, 2.3),
    row(6, 3.13, 3.72, 11.9, 15.3, 65.3, 1.0),
    row(7, 1.56, 1.86, 4.8, 6.1, 163.1, 0.4),
];

/// Least-squares slopes through the origin for (MFLOPs → mA) and
/// (MFLOPs → cycles per FLOP at `clock_hz`).
pub fn fit_coefficients(rows: &[ReferenceRow], clock_hz: f64) -> (f64, f64) {
    let mm: f64 = rows.iter().map(|r| r.mflops * r.mflops).sum();
    let mp: f64 = rows.iter().map(|r| r.mflops * r.power_mah).sum();
    let mr: f64 = rows.iter().map(|r| r.mflops * r.response_s).sum();
    (mp / mm, mr / mm * clock_hz / 1e6)
}
