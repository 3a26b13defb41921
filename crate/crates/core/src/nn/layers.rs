//! Layer kernels: convolution, transposed convolution, dense, activations,
//! pooling and a two-conv residual block.
//!
//! Convolutions are written as shifted-axpy loops over contiguous rows so the
//! stride-1 inner loops vectorize. Everything is f64.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Declarative layer description; builds into a [`Layer`] with allocated
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv { in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize },
    ConvTranspose { in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize },
    Relu,
    MaxPool { size: usize },
    AvgPool { size: usize },
    Flatten,
    Dense { in_dim: usize, out_dim: usize },
    /// Two same-channel 3x3 convolutions with a skip connection.
    Residual { channels: usize },
}

impl LayerSpec {
    /// Output shape for a given input shape, or a contract error when the
    /// shapes are incompatible.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let chw = |label: &str| -> Result<(usize, usize, usize)> {
            if input.len() != 3 {
                return Err(Error::Contract(format!("{label} expects a [C,H,W] input, got {input:?}")));
            }
            Ok((input[0], input[1], input[2]))
        };
        match *self {
            LayerSpec::Conv { in_ch, out_ch, kernel, stride, padding } => {
                let (c, h, w) = chw("conv")?;
                if c != in_ch {
                    return Err(Error::Contract(format!("conv expects {in_ch} channels, got {c}")));
                }
                let oh = conv_out(h, kernel, stride, padding)?;
                let ow = conv_out(w, kernel, stride, padding)?;
                Ok(vec![out_ch, oh, ow])
            }
            LayerSpec::ConvTranspose { in_ch, out_ch, kernel, stride, padding } => {
                let (c, h, w) = chw("conv-transpose")?;
                if c != in_ch {
                    return Err(Error::Contract(format!(
                        "conv-transpose expects {in_ch} channels, got {c}"
                    )));
                }
                let oh = (h - 1) * stride + kernel;
                let ow = (w - 1) * stride + kernel;
                if oh < 2 * padding || ow < 2 * padding {
                    return Err(Error::Contract("conv-transpose padding exceeds output".into()));
                }
                Ok(vec![out_ch, oh - 2 * padding, ow - 2 * padding])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool { size } | LayerSpec::AvgPool { size } => {
                let (c, h, w) = chw("pool")?;
                if size == 0 || h % size != 0 || w % size != 0 {
                    return Err(Error::Contract(format!(
                        "pool size {size} does not divide {h}x{w}"
                    )));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { in_dim, out_dim } => {
                if input != [in_dim] {
                    return Err(Error::Contract(format!(
                        "dense expects [{in_dim}] input, got {input:?}"
                    )));
                }
                Ok(vec![out_dim])
            }
            LayerSpec::Residual { channels } => {
                let (c, _, _) = chw("residual")?;
                if c != channels {
                    return Err(Error::Contract(format!(
                        "residual expects {channels} channels, got {c}"
                    )));
                }
                Ok(input.to_vec())
            }
        }
    }
}

fn conv_out(dim: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = dim + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return Err(Error::Contract(format!(
            "conv geometry (dim {dim}, kernel {kernel}, stride {stride}, pad {padding}) is degenerate"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out_ch][in_ch][k][k]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[in_ch][out_ch][k][k]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out_dim][in_dim]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    ConvTranspose(ConvTranspose2d),
    Relu,
    MaxPool(usize),
    AvgPool(usize),
    Flatten,
    Dense(Dense),
    Residual(ResidualBlock),
}

/// Per-layer forward cache needed by the backward pass, beyond the layer
/// input itself.
#[derive(Debug, Clone)]
pub enum Aux {
    None,
    /// Flat input index chosen per output element.
    MaxPool(Vec<u32>),
    /// Residual internals: conv1 output, relu(conv1), and the pre-activation
    /// sum.
    Residual(Box<ResidualAux>),
}

#[derive(Debug, Clone)]
pub struct ResidualAux {
    pub a1: Tensor,
    pub r1: Tensor,
    pub sum: Tensor,
}

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, count: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..count).map(|_| rng.random_range(-limit..limit)).collect()
}

impl Layer {
    /// Builds a layer from its spec, drawing parameters from `rng`
    /// (fan-in-scaled uniform, zero biases).
    pub fn build(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Layer {
        match *spec {
            LayerSpec::Conv { in_ch, out_ch, kernel, stride, padding } => Layer::Conv(Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
                weights: he_uniform(rng, in_ch * kernel * kernel, out_ch * in_ch * kernel * kernel),
                bias: vec![0.0; out_ch],
            }),
            LayerSpec::ConvTranspose { in_ch, out_ch, kernel, stride, padding } => {
                Layer::ConvTranspose(ConvTranspose2d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    padding,
                    weights: he_uniform(
                        rng,
                        in_ch * kernel * kernel,
                        in_ch * out_ch * kernel * kernel,
                    ),
                    bias: vec![0.0; out_ch],
                })
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::MaxPool { size } => Layer::MaxPool(size),
            LayerSpec::AvgPool { size } => Layer::AvgPool(size),
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dense { in_dim, out_dim } => Layer::Dense(Dense {
                in_dim,
                out_dim,
                weights: he_uniform(rng, in_dim, out_dim * in_dim),
                bias: vec![0.0; out_dim],
            }),
            LayerSpec::Residual { channels } => {
                let conv = |rng: &mut ChaCha8Rng| Conv2d {
                    in_ch: channels,
                    out_ch: channels,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                    weights: he_uniform(rng, channels * 9, channels * channels * 9),
                    bias: vec![0.0; channels],
                };
                Layer::Residual(ResidualBlock { conv1: conv(rng), conv2: conv(rng) })
            }
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(c) => LayerSpec::Conv {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
            },
            Layer::ConvTranspose(c) => LayerSpec::ConvTranspose {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::MaxPool(size) => LayerSpec::MaxPool { size: *size },
            Layer::AvgPool(size) => LayerSpec::AvgPool { size: *size },
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense(d) => LayerSpec::Dense { in_dim: d.in_dim, out_dim: d.out_dim },
            Layer::Residual(r) => LayerSpec::Residual { channels: r.conv1.in_ch },
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.weights.len() + c.bias.len(),
            Layer::ConvTranspose(c) => c.weights.len() + c.bias.len(),
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            Layer::Residual(r) => {
                r.conv1.weights.len() + r.conv1.bias.len() + r.conv2.weights.len() + r.conv2.bias.len()
            }
            _ => 0,
        }
    }

    /// Copies this layer's parameters into `out` (canonical order: weights
    /// then bias, residual conv1 before conv2).
    pub fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            Layer::Conv(c) => {
                out.extend_from_slice(&c.weights);
                out.extend_from_slice(&c.bias);
            }
            Layer::ConvTranspose(c) => {
                out.extend_from_slice(&c.weights);
                out.extend_from_slice(&c.bias);
            }
            Layer::Dense(d) => {
                out.extend_from_slice(&d.weights);
                out.extend_from_slice(&d.bias);
            }
            Layer::Residual(r) => {
                out.extend_from_slice(&r.conv1.weights);
                out.extend_from_slice(&r.conv1.bias);
                out.extend_from_slice(&r.conv2.weights);
                out.extend_from_slice(&r.conv2.bias);
            }
            _ => {}
        }
    }

    /// Loads this layer's parameters from `params`, returning the rest.
    pub fn read_params<'a>(&mut self, params: &'a [f64]) -> &'a [f64] {
        fn take<'a>(dst: &mut [f64], src: &'a [f64]) -> &'a [f64] {
            dst.copy_from_slice(&src[..dst.len()]);
            &src[dst.len()..]
        }
        match self {
            Layer::Conv(c) => {
                let rest = take(&mut c.weights, params);
                take(&mut c.bias, rest)
            }
            Layer::ConvTranspose(c) => {
                let rest = take(&mut c.weights, params);
                take(&mut c.bias, rest)
            }
            Layer::Dense(d) => {
                let rest = take(&mut d.weights, params);
                take(&mut d.bias, rest)
            }
            Layer::Residual(r) => {
                let rest = take(&mut r.conv1.weights, params);
                let rest = take(&mut r.conv1.bias, rest);
                let rest = take(&mut r.conv2.weights, rest);
                take(&mut r.conv2.bias, rest)
            }
            _ => params,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Aux)> {
        let out_shape = self.spec().output_shape(input.shape())?;
        match self {
            Layer::Conv(c) => {
                let mut out = Tensor::zeros(&out_shape);
                conv2d_forward(c, input, &mut out);
                Ok((out, Aux::None))
            }
            Layer::ConvTranspose(c) => {
                let mut out = Tensor::zeros(&out_shape);
                convt2d_forward(c, input, &mut out);
                Ok((out, Aux::None))
            }
            Layer::Relu => {
                let mut out = input.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                Ok((out, Aux::None))
            }
            Layer::MaxPool(size) => {
                let (out, idx) = maxpool_forward(input, *size, &out_shape);
                Ok((out, Aux::MaxPool(idx)))
            }
            Layer::AvgPool(size) => Ok((avgpool_forward(input, *size, &out_shape), Aux::None)),
            Layer::Flatten => Ok((input.clone().reshaped(&out_shape)?, Aux::None)),
            Layer::Dense(d) => {
                let mut out = Tensor::zeros(&out_shape);
                dense_forward(d, input.data(), out.data_mut());
                Ok((out, Aux::None))
            }
            Layer::Residual(r) => {
                let mut a1 = Tensor::zeros(input.shape());
                conv2d_forward(&r.conv1, input, &mut a1);
                let mut r1 = a1.clone();
                for v in r1.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                let mut sum = Tensor::zeros(input.shape());
                conv2d_forward(&r.conv2, &r1, &mut sum);
                for (s, x) in sum.data_mut().iter_mut().zip(input.data()) {
                    *s += x;
                }
                let mut out = sum.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                Ok((out, Aux::Residual(Box::new(ResidualAux { a1, r1, sum }))))
            }
        }
    }

    /// Backward pass: writes parameter gradients into `param_grads` (laid out
    /// like [`Layer::write_params`]) and returns the input gradient.
    pub fn backward(
        &self,
        input: &Tensor,
        aux: &Aux,
        out_grad: &Tensor,
        param_grads: &mut [f64],
    ) -> Result<Tensor> {
        match self {
            Layer::Conv(c) => {
                let (dw, db) = param_grads.split_at_mut(c.weights.len());
                let mut din = Tensor::zeros(input.shape());
                conv2d_backward(c, input, out_grad, dw, db, &mut din);
                Ok(din)
            }
            Layer::ConvTranspose(c) => {
                let (dw, db) = param_grads.split_at_mut(c.weights.len());
                let mut din = Tensor::zeros(input.shape());
                convt2d_backward(c, input, out_grad, dw, db, &mut din);
                Ok(din)
            }
            Layer::Relu => {
                let mut din = out_grad.clone();
                for (g, x) in din.data_mut().iter_mut().zip(input.data()) {
                    if *x <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok(din)
            }
            Layer::MaxPool(_) => {
                let Aux::MaxPool(indices) = aux else {
                    return Err(Error::Contract("max-pool backward needs its forward cache".into()));
                };
                let mut din = Tensor::zeros(input.shape());
                for (g, &src) in out_grad.data().iter().zip(indices) {
                    din.data_mut()[src as usize] += g;
                }
                Ok(din)
            }
            Layer::AvgPool(size) => {
                let mut din = Tensor::zeros(input.shape());
                avgpool_backward(out_grad, *size, &mut din);
                Ok(din)
            }
            Layer::Flatten => Ok(out_grad.clone().reshaped(input.shape())?),
            Layer::Dense(d) => {
                let (dw, db) = param_grads.split_at_mut(d.weights.len());
                let mut din = Tensor::zeros(input.shape());
                dense_backward(d, input.data(), out_grad.data(), dw, db, din.data_mut());
                Ok(din)
            }
            Layer::Residual(r) => {
                let Aux::Residual(cache) = aux else {
                    return Err(Error::Contract("residual backward needs its forward cache".into()));
                };
                let w1 = r.conv1.weights.len() + r.conv1.bias.len();
                let (g1, g2) = param_grads.split_at_mut(w1);
                let (dw1, db1) = g1.split_at_mut(r.conv1.weights.len());
                let (dw2, db2) = g2.split_at_mut(r.conv2.weights.len());

                // Through the output ReLU.
                let mut g_sum = out_grad.clone();
                for (g, s) in g_sum.data_mut().iter_mut().zip(cache.sum.data()) {
                    if *s <= 0.0 {
                        *g = 0.0;
                    }
                }
                // Branch: conv2 then inner ReLU then conv1.
                let mut g_r1 = Tensor::zeros(input.shape());
                conv2d_backward(&r.conv2, &cache.r1, &g_sum, dw2, db2, &mut g_r1);
                for (g, a) in g_r1.data_mut().iter_mut().zip(cache.a1.data()) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
                let mut din = Tensor::zeros(input.shape());
                conv2d_backward(&r.conv1, input, &g_r1, dw1, db1, &mut din);
                // Skip connection.
                for (d, g) in din.data_mut().iter_mut().zip(g_sum.data()) {
                    *d += g;
                }
                Ok(din)
            }
        }
    }
}

fn conv2d_forward(c: &Conv2d, input: &Tensor, output: &mut Tensor) {
    let (ih, iw) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = (output.shape()[1], output.shape()[2]);
    let out = output.data_mut();
    // Bias fill.
    for o in 0..c.out_ch {
        out[o * oh * ow..(o + 1) * oh * ow].fill(c.bias[o]);
    }
    let inp = input.data();
    let k = c.kernel;
    for o in 0..c.out_ch {
        for i in 0..c.in_ch {
            for kh in 0..k {
                for kw in 0..k {
                    let wv = c.weights[((o * c.in_ch + i) * k + kh) * k + kw];
                    let (oh_lo, oh_hi) = out_range(oh, ih, kh, c.stride, c.padding);
                    let (ow_lo, ow_hi) = out_range(ow, iw, kw, c.stride, c.padding);
                    if oh_lo >= oh_hi || ow_lo >= ow_hi {
                        continue;
                    }
                    for oy in oh_lo..oh_hi {
                        let iy = oy * c.stride + kh - c.padding;
                        let in_row = &inp[(i * ih + iy) * iw..(i * ih + iy + 1) * iw];
                        let out_row = &mut out[(o * oh + oy) * ow..(o * oh + oy + 1) * ow];
                        if c.stride == 1 {
                            let start = ow_lo + kw - c.padding;
                            let n = ow_hi - ow_lo;
                            for (ov, iv) in
                                out_row[ow_lo..ow_hi].iter_mut().zip(&in_row[start..start + n])
                            {
                                *ov += wv * iv;
                            }
                        } else {
                            for ox in ow_lo..ow_hi {
                                let ix = ox * c.stride + kw - c.padding;
                                out_row[ox] += wv * in_row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Dot product with four independent accumulators so the loop vectorizes;
/// the summation order is fixed by the chunking and identical on all targets.
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let base = i * 4;
        acc[0] += a[base] * b[base];
        acc[1] += a[base + 1] * b[base + 1];
        acc[2] += a[base + 2] * b[base + 2];
        acc[3] += a[base + 3] * b[base + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(out: &mut [f64], x: &[f64], w: f64) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += w * v;
    }
}

fn conv2d_backward(
    c: &Conv2d,
    input: &Tensor,
    out_grad: &Tensor,
    dw: &mut [f64],
    db: &mut [f64],
    din: &mut Tensor,
) {
    let (ih, iw) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_grad.shape()[1], out_grad.shape()[2]);
    let g = out_grad.data();
    let inp = input.data();
    let di = din.data_mut();
    let k = c.kernel;
    for o in 0..c.out_ch {
        db[o] += g[o * oh * ow..(o + 1) * oh * ow].iter().sum::<f64>();
    }
    for o in 0..c.out_ch {
        for i in 0..c.in_ch {
            for kh in 0..k {
                for kw in 0..k {
                    let widx = ((o * c.in_ch + i) * k + kh) * k + kw;
                    let wv = c.weights[widx];
                    let (oh_lo, oh_hi) = out_range(oh, ih, kh, c.stride, c.padding);
                    let (ow_lo, ow_hi) = out_range(ow, iw, kw, c.stride, c.padding);
                    if oh_lo >= oh_hi || ow_lo >= ow_hi {
                        continue;
                    }
                    let mut wg = 0.0;
                    for oy in oh_lo..oh_hi {
                        let iy = oy * c.stride + kh - c.padding;
                        let in_row = &inp[(i * ih + iy) * iw..(i * ih + iy + 1) * iw];
                        let di_row = &mut di[(i * ih + iy) * iw..(i * ih + iy + 1) * iw];
                        let g_row = &g[(o * oh + oy) * ow..(o * oh + oy + 1) * ow];
                        if c.stride == 1 {
                            let start = ow_lo + kw - c.padding;
                            let n = ow_hi - ow_lo;
                            let gs = &g_row[ow_lo..ow_hi];
                            wg += dot4(gs, &in_row[start..start + n]);
                            axpy(&mut di_row[start..start + n], gs, wv);
                        } else {
                            for ox in ow_lo..ow_hi {
                                let ix = ox * c.stride + kw - c.padding;
                                let gv = g_row[ox];
                                wg += gv * in_row[ix];
                                di_row[ix] += wv * gv;
                            }
                        }
                    }
                    dw[widx] += wg;
                }
            }
        }
    }
}

fn convt2d_forward(c: &ConvTranspose2d, input: &Tensor, output: &mut Tensor) {
    let (oh, ow) = (output.shape()[1], output.shape()[2]);
    let out = output.data_mut();
    for o in 0..c.out_ch {
        out[o * oh * ow..(o + 1) * oh * ow].fill(c.bias[o]);
    }
    if c.stride == 2 {
        convt2d_forward_s2(c, input, out, oh, ow);
    } else {
        convt2d_forward_general(c, input, out, oh, ow);
    }
}

/// Stride-2 specialization: per output row, the contributing kernel taps are
/// grouped by the parity of the written column, accumulated into two
/// contiguous half-row buffers, then interleaved once.
fn convt2d_forward_s2(c: &ConvTranspose2d, input: &Tensor, out: &mut [f64], oh: usize, ow: usize) {
    let (ih, iw) = (input.shape()[1], input.shape()[2]);
    let inp = input.data();
    let k = c.kernel;
    let p = c.padding as isize;
    let ow_even = ow.div_ceil(2);
    let ow_odd = ow / 2;
    let mut even_buf = vec![0.0f64; ow_even];
    let mut odd_buf = vec![0.0f64; ow_odd];
    for o in 0..c.out_ch {
        for oy in 0..oh {
            even_buf.fill(0.0);
            odd_buf.fill(0.0);
            let mut touched = false;
            for kh in 0..k {
                let num = oy as isize + p - kh as isize;
                if num < 0 || num % 2 != 0 {
                    continue;
                }
                let iy = (num / 2) as usize;
                if iy >= ih {
                    continue;
                }
                for i in 0..c.in_ch {
                    let in_row = &inp[(i * ih + iy) * iw..(i * ih + iy + 1) * iw];
                    for kw in 0..k {
                        let wv = c.weights[((i * c.out_ch + o) * k + kh) * k + kw];
                        let t = kw as isize - p;
                        let (buf, cap): (&mut [f64], usize) = if t.rem_euclid(2) == 0 {
                            (&mut even_buf, ow_even)
                        } else {
                            (&mut odd_buf, ow_odd)
                        };
                        let d = t.div_euclid(2);
                        let ix_lo = (-d).max(0) as usize;
                        let ix_hi = ((cap as isize - d).min(iw as isize)).max(0) as usize;
                        if ix_lo >= ix_hi {
                            continue;
                        }
                        touched = true;
                        let m0 = (ix_lo as isize + d) as usize;
                        let n = ix_hi - ix_lo;
                        axpy(&mut buf[m0..m0 + n], &in_row[ix_lo..ix_hi], wv);
                    }
                }
            }
            if !touched {
                continue;
            }
            let out_row = &mut out[(o * oh + oy) * ow..(o * oh + oy + 1) * ow];
            for (m, v) in even_buf.iter().enumerate() {
                out_row[2 * m] += v;
            }
            for (m, v) in odd_buf.iter().enumerate() {
                out_row[2 * m + 1] += v;
            }
        }
    }
}

fn convt2d_forward_general(
    c: &ConvTranspose2d,
    input: &Tensor,
    out: &mut [f64],
    oh: usize,
    ow: usize,
) {
    let (ih, iw) = (input.shape()[1], input.shape()[2]);
    let inp = input.data();
    let k = c.kernel;
    for i in 0..c.in_ch {
        for o in 0..c.out_ch {
            for kh in 0..k {
                for kw in 0..k {
                    let wv = c.weights[((i * c.out_ch + o) * k + kh) * k + kw];
                    let (ih_lo, ih_hi) = in_range_t(ih, oh, kh, c.stride, c.padding);
                    let (iw_lo, iw_hi) = in_range_t(iw, ow, kw, c.stride, c.padding);
                    if ih_lo >= ih_hi || iw_lo >= iw_hi {
                        continue;
                    }
                    for iy in ih_lo..ih_hi {
                        let oy = iy * c.stride + kh - c.padding;
                        let in_row = &inp[(i * ih + iy) * iw..(i * ih + iy + 1) * iw];
                        let out_row = &mut out[(o * oh + oy) * ow..(o * oh + oy + 1) * ow];
                        for ix in iw_lo..iw_hi {
                            let oxx = ix * c.stride + kw - c.padding;
                            out_row[oxx] += wv * in_row[ix];
                        }
                    }
                }
            }
        }
    }
}

fn convt2d_backward(
    c: &ConvTranspose2d,
    input: &Tensor,
    out_grad: &Tensor,
    dw: &mut [f64],
    db: &mut [f64],
    din: &mut Tensor,
) {
    let (oh, ow) = (out_grad.shape()[1], out_grad.shape()[2]);
    let g = out_grad.data();
    for o in 0..c.out_ch {
        db[o] += g[o * oh * ow..(o + 1) * oh * ow].iter().sum::<f64>();
    }
    if c.stride == 2 {
        convt2d_backward_s2(c, input, out_grad, dw, din);
    } else {
        convt2d_backward_general(c, input, out_grad, dw, din);
    }
}

/// Stride-2 specialization: each output-gradient channel is de-interleaved
/// into even/odd column planes once, turning the strided gathers into
/// contiguous dot products and axpys.
fn convt2d_backward_s2(
    c: &ConvTranspose2d,
    input: &Tensor,
    out_grad: &Tensor,
    dw: &mut [f64],
    din: &mut Tensor,
) {
    let (ih, iw) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_grad.shape()[1], out_grad.shape()[2]);
    let g = out_grad.data();
    let inp = input.data();
    let di = din.data_mut();
    let k = c.kernel;
    let p = c.padding as isize;
    let ow_even = ow.div_ceil(2);
    let ow_odd = ow / 2;
    let mut g_even = vec![0.0f64; oh * ow_even];
    let mut g_odd = vec![0.0f64; oh * ow_odd];
    for o in 0..c.out_ch {
        for oy in 0..oh {
            let g_row = &g[(o * oh + oy) * ow..(o * oh + oy + 1) * ow];
            let ge = &mut g_even[oy * ow_even..(oy + 1) * ow_even];
            let go = &mut g_odd[oy * ow_odd..(oy + 1) * ow_odd];
            for (m, v) in ge.iter_mut().enumerate() {
                *v = g_row[2 * m];
            }
            for (m, v) in go.iter_mut().enumerate() {
                *v = g_row[2 * m + 1];
            }
        }
        for i in 0..c.in_ch {
            for kh in 0..k {
                for iy in 0..ih {
                    let oy = iy as isize * 2 + kh as isize - p;
                    if oy < 0 || oy >= oh as isize {
                        continue;
                    }
                    let oy = oy as usize;
                    let in_row = &inp[(i * ih + iy) * iw..(i * ih + iy + 1) * iw];
                    let di_row = &mut di[(i * ih + iy) * iw..(i * ih + iy + 1) * iw];
                    for kw in 0..k {
                        let widx = ((i * c.out_ch + o) * k + kh) * k + kw;
                        let wv = c.weights[widx];
                        let t = kw as isize - p;
                        let (plane, cap): (&[f64], usize) = if t.rem_euclid(2) == 0 {
                            (&g_even[oy * ow_even..(oy + 1) * ow_even], ow_even)
                        } else {
                            (&g_odd[oy * ow_odd..(oy + 1) * ow_odd], ow_odd)
                        };
                        let d = t.div_euclid(2);
                        let ix_lo = (-d).max(0) as usize;
                        let ix_hi = ((cap as isize - d).min(iw as isize)).max(0) as usize;
                        if ix_lo >= ix_hi {
                            continue;
                        }
                        let m0 = (ix_lo as isize + d) as usize;
                        let n = ix_hi - ix_lo;
                        dw[widx] += dot4(&in_row[ix_lo..ix_hi], &plane[m0..m0 + n]);
                        axpy(&mut di_row[ix_lo..ix_hi], &plane[m0..m0 + n], wv);
                    }
                }
            }
        }
    }
}

fn convt2d_backward_general(
    c: &ConvTranspose2d,
    input: &Tensor,
    out_grad: &Tensor,
    dw: &mut [f64],
    din: &mut Tensor,
) {
    let (ih, iw) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_grad.shape()[1], out_grad.shape()[2]);
    let g = out_grad.data();
    let inp = input.data();
    let di = din.data_mut();
    let k = c.kernel;
    for i in 0..c.in_ch {
        for o in 0..c.out_ch {
            for kh in 0..k {
                for kw in 0..k {
                    let widx = ((i * c.out_ch + o) * k + kh) * k + kw;
                    let wv = c.weights[widx];
                    let (ih_lo, ih_hi) = in_range_t(ih, oh, kh, c.stride, c.padding);
                    let (iw_lo, iw_hi) = in_range_t(iw, ow, kw, c.stride, c.padding);
                    if ih_lo >= ih_hi || iw_lo >= iw_hi {
                        continue;
                    }
                    let mut wg = 0.0;
                    for iy in ih_lo..ih_hi {
                        let oy = iy * c.stride + kh - c.padding;
                        let in_row = &inp[(i * ih + iy) * iw..(i * ih + iy + 1) * iw];
                        let di_row = &mut di[(i * ih + iy) * iw..(i * ih + iy + 1) * iw];
                        let g_row = &g[(o * oh + oy) * ow..(o * oh + oy + 1) * ow];
                        for ix in iw_lo..iw_hi {
                            let oxx = ix * c.stride + kw - c.padding;
                            let gv = g_row[oxx];
                            wg += gv * in_row[ix];
                            di_row[ix] += wv * gv;
                        }
                    }
                    dw[widx] += wg;
                }
            }
        }
    }
}

/// Output rows `[lo, hi)` whose source row `oy*stride + kh - padding` lands
/// inside `[0, in_dim)`.
fn out_range(out_dim: usize, in_dim: usize, kh: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if kh >= padding { 0 } else { (padding - kh).div_ceil(stride) };
    let max_src = in_dim as isize - 1 + padding as isize - kh as isize;
    if max_src < 0 {
        return (lo, lo);
    }
    let hi = ((max_src as usize) / stride + 1).min(out_dim);
    (lo, hi.max(lo))
}

/// Input rows `[lo, hi)` whose target row `iy*stride + kh - padding` lands
/// inside `[0, out_dim)` for the transposed convolution.
fn in_range_t(in_dim: usize, out_dim: usize, kh: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if kh >= padding { 0 } else { (padding - kh).div_ceil(stride) };
    let max_src = out_dim as isize - 1 + padding as isize - kh as isize;
    if max_src < 0 {
        return (lo, lo);
    }
    let hi = ((max_src as usize) / stride + 1).min(in_dim);
    (lo, hi.max(lo))
}

fn maxpool_forward(input: &Tensor, size: usize, out_shape: &[usize]) -> (Tensor, Vec<u32>) {
    let (c, ih, iw) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut out = Tensor::zeros(out_shape);
    let mut idx = vec![0u32; out.len()];
    let inp = input.data();
    let data = out.data_mut();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0usize;
                for dy in 0..size {
                    for dx in 0..size {
                        let flat = (ch * ih + oy * size + dy) * iw + ox * size + dx;
                        if inp[flat] > best {
                            best = inp[flat];
                            best_i = flat;
                        }
                    }
                }
                let o_flat = (ch * oh + oy) * ow + ox;
                data[o_flat] = best;
                idx[o_flat] = best_i as u32;
            }
        }
    }
    (out, idx)
}

fn avgpool_forward(input: &Tensor, size: usize, out_shape: &[usize]) -> Tensor {
    let (c, ih, iw) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut out = Tensor::zeros(out_shape);
    let inv = 1.0 / (size * size) as f64;
    let inp = input.data();
    let data = out.data_mut();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..size {
                    for dx in 0..size {
                        acc += inp[(ch * ih + oy * size + dy) * iw + ox * size + dx];
                    }
                }
                data[(ch * oh + oy) * ow + ox] = acc * inv;
            }
        }
    }
    out
}

fn avgpool_backward(out_grad: &Tensor, size: usize, din: &mut Tensor) {
    let (c, ih, iw) = (din.shape()[0], din.shape()[1], din.shape()[2]);
    let (oh, ow) = (out_grad.shape()[1], out_grad.shape()[2]);
    let inv = 1.0 / (size * size) as f64;
    let g = out_grad.data();
    let di = din.data_mut();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let gv = g[(ch * oh + oy) * ow + ox] * inv;
                for dy in 0..size {
                    for dx in 0..size {
                        di[(ch * ih + oy * size + dy) * iw + ox * size + dx] += gv;
                    }
                }
            }
        }
    }
}

fn dense_forward(d: &Dense, input: &[f64], output: &mut [f64]) {
    for (j, out) in output.iter_mut().enumerate() {
        let row = &d.weights[j * d.in_dim..(j + 1) * d.in_dim];
        let mut acc = d.bias[j];
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        *out = acc;
    }
}

fn dense_backward(
    d: &Dense,
    input: &[f64],
    out_grad: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    din: &mut [f64],
) {
    for (j, &gv) in out_grad.iter().enumerate() {
        db[j] += gv;
        let row = &d.weights[j * d.in_dim..(j + 1) * d.in_dim];
        let drow = &mut dw[j * d.in_dim..(j + 1) * d.in_dim];
        for ((dwv, x), (dx, w)) in drow.iter_mut().zip(input).zip(din.iter_mut().zip(row)) {
            *dwv += gv * x;
            *dx += gv * w;
        }
    }
}
