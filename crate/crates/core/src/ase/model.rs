use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::AseConfig;
use crate::error::{Error, Result};
use crate::preprocess::{Frame, AXES};

/// 3×3 same-padded, stride-1 convolution over `channels × 3 × cols` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `[out][in][3][3]`, row-major.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv3x3 {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel: vec![0.0; out_ch * in_ch * 9],
            bias: vec![0.0; out_ch],
        }
    }

    #[inline]
    fn tap(&self, o: usize, i: usize, dr: usize, dc: usize) -> usize {
        ((o * self.in_ch + i) * 3 + dr) * 3 + dc
    }

    pub fn forward(&self, input: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
        let plane = rows * cols;
        for o in 0..self.out_ch {
            let ob = &mut out[o * plane..(o + 1) * plane];
            ob.fill(self.bias[o]);
            for i in 0..self.in_ch {
                let ib = &input[i * plane..(i + 1) * plane];
                for dr in 0..3 {
                    for dc in 0..3 {
                        let w = self.kernel[self.tap(o, i, dr, dc)];
                        for_each_overlap(rows, cols, dr, dc, |o_at, i_at, n| {
                            for (y, x) in ob[o_at..o_at + n].iter_mut().zip(&ib[i_at..i_at + n]) {
                                *y += w * x;
                            }
                        });
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients into `grad` and, when requested, the
    /// input gradient into `din`.
    pub fn backward(
        &self,
        input: &[f64],
        dout: &[f64],
        rows: usize,
        cols: usize,
        grad: &mut Conv3x3,
        mut din: Option<&mut [f64]>,
    ) {
        let plane = rows * cols;
        for o in 0..self.out_ch {
            let gb = &dout[o * plane..(o + 1) * plane];
            grad.bias[o] += gb.iter().sum::<f64>();
            for i in 0..self.in_ch {
                let ib = &input[i * plane..(i + 1) * plane];
                for dr in 0..3 {
                    for dc in 0..3 {
                        let t = self.tap(o, i, dr, dc);
                        let w = self.kernel[t];
                        let mut acc = 0.0;
                        for_each_overlap(rows, cols, dr, dc, |o_at, i_at, n| {
                            acc += gb[o_at..o_at + n]
                                .iter()
                                .zip(&ib[i_at..i_at + n])
                                .map(|(g, x)| g * x)
                                .sum::<f64>();
                        });
                        grad.kernel[t] += acc;
                        if let Some(din) = din.as_deref_mut() {
                            let db = &mut din[i * plane..(i + 1) * plane];
                            for_each_overlap(rows, cols, dr, dc, |o_at, i_at, n| {
                                for (d, g) in db[i_at..i_at + n].iter_mut().zip(&gb[o_at..o_at + n]) {
                                    *d += w * g;
                                }
                            });
                        }
                    }
                }
            }
        }
    }
}

/// For kernel tap `(dr, dc)`, calls `f(out_offset, in_offset, run_len)` for
/// each output row whose shifted input row lies inside the grid.
#[inline]
fn for_each_overlap(rows: usize, cols: usize, dr: usize, dc: usize, mut f: impl FnMut(usize, usize, usize)) {
    let c_lo = usize::from(dc == 0);
    let c_hi = if dc == 2 { cols - 1 } else { cols };
    if c_hi <= c_lo {
        return;
    }
    for r in 0..rows {
        let rr = r + dr;
        if rr == 0 || rr > rows {
            continue;
        }
        let rr = rr - 1;
        f(r * cols + c_lo, rr * cols + c_lo + dc - 1, c_hi - c_lo);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `outputs × inputs`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub enc_conv1: Conv3x3,
    pub enc_conv2: Conv3x3,
    pub enc_dense: Vec<Dense>,
    pub dec_conv: Conv3x3,
    pub dec_dense: Dense,
}

impl Params {
    pub fn zeros(config: &AseConfig) -> Self {
        let c = config.conv_channels;
        let mut enc_dense = Vec::with_capacity(config.encoder_dense_widths.len());
        let mut inputs = config.conv_flat_len();
        for &w in &config.encoder_dense_widths {
            enc_dense.push(Dense::zeros(inputs, w));
            inputs = w;
        }
        let out = config.decoder_dense_width();
        Self {
            enc_conv1: Conv3x3::zeros(1, c),
            enc_conv2: Conv3x3::zeros(c, c),
            enc_dense,
            dec_conv: Conv3x3::zeros(1, 1),
            dec_dense: Dense::zeros(out, out),
        }
    }

    /// Every tensor in declaration order, each paired with `true` for weights
    /// (kernels and matrices) and `false` for biases.
    pub fn tensors(&self) -> Vec<(&[f64], bool)> {
        let mut v: Vec<(&[f64], bool)> = vec![
            (&self.enc_conv1.kernel, true),
            (&self.enc_conv1.bias, false),
            (&self.enc_conv2.kernel, true),
            (&self.enc_conv2.bias, false),
        ];
        for d in &self.enc_dense {
            v.push((d.weight.as_slice().expect("standard layout"), true));
            v.push((d.bias.as_slice().expect("standard layout"), false));
        }
        v.push((&self.dec_conv.kernel, true));
        v.push((&self.dec_conv.bias, false));
        v.push((self.dec_dense.weight.as_slice().expect("standard layout"), true));
        v.push((self.dec_dense.bias.as_slice().expect("standard layout"), false));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        let mut v: Vec<(&mut [f64], bool)> = vec![
            (&mut self.enc_conv1.kernel, true),
            (&mut self.enc_conv1.bias, false),
            (&mut self.enc_conv2.kernel, true),
            (&mut self.enc_conv2.bias, false),
        ];
        for d in &mut self.enc_dense {
            v.push((d.weight.as_slice_mut().expect("standard layout"), true));
            v.push((d.bias.as_slice_mut().expect("standard layout"), false));
        }
        v.push((&mut self.dec_conv.kernel, true));
        v.push((&mut self.dec_conv.bias, false));
        v.push((self.dec_dense.weight.as_slice_mut().expect("standard layout"), true));
        v.push((self.dec_dense.bias.as_slice_mut().expect("standard layout"), false));
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(t, _)| t.len()).sum()
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_sq_sum(&self) -> f64 {
        self.tensors()
            .iter()
            .filter(|(_, is_w)| *is_w)
            .flat_map(|(t, _)| t.iter())
            .map(|w| w * w)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(t, _)| t.iter().all(|v| v.is_finite()))
    }

    /// Rounds every value to the nearest 32-bit float so the checkpoint
    /// format stores the parameters exactly.
    pub fn round_to_f32(&mut self) {
        for (t, _) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
    }
}

/// Intermediate activations kept for backpropagation.
struct Tape {
    x: Array2<f64>,
    c1: Array2<f64>,
    c2: Array2<f64>,
    /// Pre-activations of each encoder dense layer.
    z: Vec<Array2<f64>>,
    /// Post-activation (and post-dropout) outputs of each encoder dense layer.
    h: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    u: Array2<f64>,
    out: Array2<f64>,
}

/// The enhancement autoencoder: configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AseModel {
    config: AseConfig,
    params: Params,
}

impl AseModel {
    /// Uniform fan-in initialisation from a seeded generator; biases start at
    /// zero. ReLU layers use a `sqrt(6 / fan_in)` bound, linear ones `sqrt(3 / fan_in)`.
    pub fn new(config: AseConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&config);
        let mut fill = |xs: &mut [f64], fan_in: usize, gain: f64| {
            let bound = (gain / fan_in as f64).sqrt();
            xs.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        };
        let c = config.conv_channels;
        fill(&mut params.enc_conv1.kernel, 9, 3.0);
        fill(&mut params.enc_conv2.kernel, 9 * c, 3.0);
        for d in &mut params.enc_dense {
            let fan_in = d.inputs();
            fill(d.weight.as_slice_mut().unwrap(), fan_in, 6.0);
        }
        fill(&mut params.dec_conv.kernel, 9, 3.0);
        let fan_in = params.dec_dense.inputs();
        fill(params.dec_dense.weight.as_slice_mut().unwrap(), fan_in, 3.0);
        params.round_to_f32();
        Ok(Self { config, params })
    }

    pub fn zeros(config: AseConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::zeros(&config);
        Ok(Self { config, params })
    }

    pub(crate) fn from_parts(config: AseConfig, params: Params) -> Self {
        Self { config, params }
    }

    pub fn config(&self) -> &AseConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub(crate) fn check_input(&self, frame: &Frame) -> Result<()> {
        if frame.per_axis_len() != self.config.in_per_axis {
            return Err(Error::GeometryMismatch {
                expected: self.config.in_per_axis,
                found: frame.per_axis_len(),
            });
        }
        if !frame.is_normalized() {
            return Err(Error::NotNormalized);
        }
        Ok(())
    }

    fn check_target(&self, frame: &Frame) -> Result<()> {
        if frame.per_axis_len() != self.config.out_per_axis {
            return Err(Error::GeometryMismatch {
                expected: self.config.out_per_axis,
                found: frame.per_axis_len(),
            });
        }
        Ok(())
    }

    /// Runs the network on a batch (one frame per row). With `dropout`,
    /// inverted dropout masks are drawn for every encoder dense layer.
    fn run(&self, x: Array2<f64>, dropout: Option<(&mut ChaCha8Rng, f64)>) -> Tape {
        let p = &self.params;
        let batch = x.nrows();
        let in_cols = self.config.in_per_axis;
        let out_cols = self.config.out_per_axis;
        let flat = self.config.conv_flat_len();

        let mut c1 = Array2::zeros((batch, flat));
        let mut c2 = Array2::zeros((batch, flat));
        for b in 0..batch {
            let xb = x.row(b);
            let c1b = c1.row_mut(b).into_slice().unwrap();
            p.enc_conv1.forward(xb.as_slice().unwrap(), AXES, in_cols, c1b);
            let c2b = c2.row_mut(b).into_slice().unwrap();
            p.enc_conv2.forward(c1.row(b).as_slice().unwrap(), AXES, in_cols, c2b);
        }

        let mut rng_p = dropout.filter(|(_, rate)| *rate > 0.0);
        let mut z = Vec::with_capacity(p.enc_dense.len());
        let mut h: Vec<Array2<f64>> = Vec::with_capacity(p.enc_dense.len());
        let mut masks = Vec::with_capacity(p.enc_dense.len());
        for (k, layer) in p.enc_dense.iter().enumerate() {
            let prev = if k == 0 { &c2 } else { &h[k - 1] };
            let zk = layer.forward(prev);
            let mut hk = zk.mapv(|v| v.max(0.0));
            let mask = rng_p.as_mut().map(|(rng, rate)| {
                let keep = 1.0 / (1.0 - *rate);
                Array2::from_shape_simple_fn(hk.raw_dim(), || {
                    if rng.random::<f64>() < *rate {
                        0.0
                    } else {
                        keep
                    }
                })
            });
            if let Some(m) = &mask {
                hk *= m;
            }
            z.push(zk);
            h.push(hk);
            masks.push(mask);
        }

        let last = h.last().expect("at least one dense layer");
        let mut u = Array2::zeros((batch, AXES * out_cols));
        for b in 0..batch {
            let ub = u.row_mut(b).into_slice().unwrap();
            p.dec_conv.forward(last.row(b).as_slice().unwrap(), AXES, out_cols, ub);
        }
        let out = p.dec_dense.forward(&u);
        Tape {
            x,
            c1,
            c2,
            z,
            h,
            masks,
            u,
            out,
        }
    }

    fn backward(&self, tape: &Tape, dout: &Array2<f64>) -> Params {
        let p = &self.params;
        let mut g = Params::zeros(&self.config);
        let batch = dout.nrows();
        let in_cols = self.config.in_per_axis;
        let out_cols = self.config.out_per_axis;

        g.dec_dense.weight = dout.t().dot(&tape.u);
        g.dec_dense.bias = dout.sum_axis(Axis(0));
        let du = dout.dot(&p.dec_dense.weight);

        let last = tape.h.last().unwrap();
        let mut dh = Array2::zeros(last.raw_dim());
        for b in 0..batch {
            p.dec_conv.backward(
                last.row(b).as_slice().unwrap(),
                du.row(b).as_slice().unwrap(),
                AXES,
                out_cols,
                &mut g.dec_conv,
                Some(dh.row_mut(b).into_slice().unwrap()),
            );
        }

        for k in (0..p.enc_dense.len()).rev() {
            let mut dz = dh;
            if let Some(m) = &tape.masks[k] {
                dz *= m;
            }
            dz.zip_mut_with(&tape.z[k], |d, &zv| {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            });
            let prev = if k == 0 { &tape.c2 } else { &tape.h[k - 1] };
            g.enc_dense[k].weight = dz.t().dot(prev);
            g.enc_dense[k].bias = dz.sum_axis(Axis(0));
            dh = dz.dot(&p.enc_dense[k].weight);
        }

        let mut dc1 = Array2::zeros(tape.c1.raw_dim());
        for b in 0..batch {
            p.enc_conv2.backward(
                tape.c1.row(b).as_slice().unwrap(),
                dh.row(b).as_slice().unwrap(),
                AXES,
                in_cols,
                &mut g.enc_conv2,
                Some(dc1.row_mut(b).into_slice().unwrap()),
            );
            p.enc_conv1.backward(
                tape.x.row(b).as_slice().unwrap(),
                dc1.row(b).as_slice().unwrap(),
                AXES,
                in_cols,
                &mut g.enc_conv1,
                None,
            );
        }
        g
    }

    /// Inference over a batch of flattened input frames (dropout off).
    pub fn forward_batch(&self, x: Array2<f64>) -> Array2<f64> {
        self.run(x, None).out
    }

    /// Enhanced frame for `lr_frame`, carrying the input's normalization
    /// parameters. Raw network output; see [`AseModel::enhance`] for the
    /// clamped variant used downstream.
    pub fn forward(&self, lr_frame: &Frame) -> Result<Frame> {
        self.check_input(lr_frame)?;
        let x = Array2::from_shape_vec((1, self.config.in_len()), lr_frame.values().to_vec())
            .expect("length checked");
        let out = self.forward_batch(x);
        Ok(Frame::new(
            self.config.out_per_axis,
            out.into_raw_vec_and_offset().0,
            lr_frame.source_rate_hz(),
        )?
        .with_norm(lr_frame.norm_params()))
    }

    /// [`AseModel::forward`] with outputs clamped into the normalized range,
    /// so the result is a valid normalized frame.
    pub fn enhance(&self, lr_frame: &Frame) -> Result<Frame> {
        let raw = self.forward(lr_frame)?;
        let values = raw.values().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Frame::new(raw.per_axis_len(), values, raw.source_rate_hz())?.with_norm(raw.norm_params()))
    }

    pub fn enhance_batch(&self, frames: &[&Frame]) -> Result<Vec<Frame>> {
        if frames.is_empty() {
            return Ok(Vec::new());
        }
        for f in frames {
            self.check_input(f)?;
        }
        let x = stack(frames, self.config.in_len());
        let out = self.forward_batch(x);
        frames
            .iter()
            .zip(out.rows())
            .map(|(f, row)| {
                let values = row.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                Ok(Frame::new(self.config.out_per_axis, values, f.source_rate_hz())?
                    .with_norm(f.norm_params()))
            })
            .collect()
    }

    /// MAE over the batch plus `l2_weight * Σ w²`, and its gradient.
    ///
    /// The MAE subgradient at a zero residual is taken as zero.
    pub(crate) fn step_gradients(
        &self,
        x: Array2<f64>,
        target: &Array2<f64>,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> (f64, f64, Params) {
        let rate = self.config.dropout_p;
        let tape = self.run(x, dropout.map(|r| (r, rate)));
        let n = tape.out.len() as f64;
        let diff = &tape.out - target;
        let data = diff.iter().map(|d| d.abs()).sum::<f64>() / n;
        let dout = diff.mapv(|d| {
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        });
        let mut grads = self.backward(&tape, &dout);
        let lambda = self.config.l2_weight;
        let mut reg = 0.0;
        if lambda > 0.0 {
            reg = lambda * self.params.weight_sq_sum();
            for ((g, is_w), (w, _)) in grads.tensors_mut().into_iter().zip(self.params.tensors()) {
                if is_w {
                    g.iter_mut().zip(w).for_each(|(g, w)| *g += 2.0 * lambda * w);
                }
            }
        }
        (data, reg, grads)
    }

    /// Regularized objective for one pair (dropout off).
    pub fn objective(&self, lr_frame: &Frame, target_hr: &Frame) -> Result<f64> {
        Ok(self.gradients(lr_frame, target_hr)?.0)
    }

    /// Objective value and exact gradients for one pair (dropout off).
    pub fn gradients(&self, lr_frame: &Frame, target_hr: &Frame) -> Result<(f64, Params)> {
        self.check_input(lr_frame)?;
        self.check_target(target_hr)?;
        let x = stack(&[lr_frame], self.config.in_len());
        let t = stack(&[target_hr], self.config.decoder_dense_width());
        let (data, reg, g) = self.step_gradients(x, &t, None);
        Ok((data + reg, g))
    }
}

pub(crate) fn stack(frames: &[&Frame], width: usize) -> Array2<f64> {
    let mut x = Array2::zeros((frames.len(), width));
    for (mut row, f) in x.rows_mut().into_iter().zip(frames) {
        row.assign(&ndarray::ArrayView1::from(f.values()));
    }
    x
}

/// Mean absolute error between two frames of the same geometry.
pub fn mae_loss(enhanced: &Frame, target_hr: &Frame) -> Result<f64> {
    if enhanced.per_axis_len() != target_hr.per_axis_len() {
        return Err(Error::GeometryMismatch {
            expected: target_hr.per_axis_len(),
            found: enhanced.per_axis_len(),
        });
    }
    let n = enhanced.values().len() as f64;
    Ok(enhanced
        .values()
        .iter()
        .zip(target_hr.values())
        .map(|(e, h)| (h - e).abs())
        .sum::<f64>()
        / n)
}
