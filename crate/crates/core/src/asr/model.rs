//! Two strided 1-D convolutions with tanh, then a per-frame affine map to
//! class logits. Backward passes are written out by hand.

use rand::Rng;

use super::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub mel_bins: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub classes: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ModelDims {
    pub fn new(mel_bins: usize, hidden1: usize, hidden2: usize, classes: usize) -> Self {
        Self {
            mel_bins,
            hidden1,
            hidden2,
            classes,
            kernel: 5,
            stride: 2,
        }
    }

    fn sizes(&self) -> [usize; 8] {
        [
            self.mel_bins,                              // feature mean
            self.mel_bins,                              // feature inverse std
            self.hidden1 * self.kernel * self.mel_bins, // conv1 weights
            self.hidden1,                               // conv1 bias
            self.hidden2 * self.kernel * self.hidden1,  // conv2 weights
            self.hidden2,                               // conv2 bias
            self.classes * self.hidden2,                // output weights
            self.classes,                               // output bias
        ]
    }

    fn offsets(&self) -> [usize; 9] {
        let mut o = [0; 9];
        for (i, s) in self.sizes().iter().enumerate() {
            o[i + 1] = o[i] + s;
        }
        o
    }

    pub fn param_count(&self) -> usize {
        self.offsets()[8]
    }

    /// Parameters excluded from training (the input normalization statistics).
    pub fn frozen_prefix(&self) -> usize {
        2 * self.mel_bins
    }

    pub fn output_frames(&self, frames: usize) -> usize {
        frames.div_ceil(self.stride).div_ceil(self.stride)
    }
}

/// Frames × classes scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    frames: usize,
    classes: usize,
    data: Vec<f64>,
}

impl Logits {
    pub fn new(frames: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * classes || classes == 0 {
            return Err(Error::invalid("logit data does not match its shape"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logit".into()));
        }
        Ok(Self {
            frames,
            classes,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    dims: ModelDims,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ModelTape {
    input: Vec<f64>,
    frames0: usize,
    h1: Vec<f64>,
    frames1: usize,
    h2: Vec<f64>,
    frames2: usize,
}

pub struct ModelGradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn conv_forward(
    input: &[f64],
    t_in: usize,
    c_in: usize,
    weights: &[f64],
    bias: &[f64],
    kernel: usize,
    stride: usize,
) -> (Vec<f64>, usize) {
    let c_out = bias.len();
    let t_out = t_in.div_ceil(stride);
    let pad = (kernel / 2) as isize;
    let mut out = vec![0.0; t_out * c_out];
    for t in 0..t_out {
        for o in 0..c_out {
            let mut acc = bias[o];
            for k in 0..kernel {
                let src = (t * stride) as isize + k as isize - pad;
                if src < 0 || src as usize >= t_in {
                    continue;
                }
                let w = &weights[(o * kernel + k) * c_in..(o * kernel + k + 1) * c_in];
                let x = &input[src as usize * c_in..(src as usize + 1) * c_in];
                acc += w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            out[t * c_out + o] = acc.tanh();
        }
    }
    (out, t_out)
}

/// Backward through `tanh(conv)`: `grad_out` is w.r.t. the activations.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    t_in: usize,
    c_in: usize,
    output: &[f64],
    grad_out: &[f64],
    weights: &[f64],
    kernel: usize,
    stride: usize,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Vec<f64> {
    let c_out = grad_b.len();
    let t_out = output.len() / c_out;
    let pad = (kernel / 2) as isize;
    let mut grad_in = vec![0.0; t_in * c_in];
    for t in 0..t_out {
        for o in 0..c_out {
            let y = output[t * c_out + o];
            let g = grad_out[t * c_out + o] * (1.0 - y * y);
            if g == 0.0 {
                continue;
            }
            grad_b[o] += g;
            for k in 0..kernel {
                let src = (t * stride) as isize + k as isize - pad;
                if src < 0 || src as usize >= t_in {
                    continue;
                }
                let s = src as usize;
                let row = (o * kernel + k) * c_in;
                for c in 0..c_in {
                    grad_w[row + c] += g * input[s * c_in + c];
                    grad_in[s * c_in + c] += g * weights[row + c];
                }
            }
        }
    }
    grad_in
}

impl AcousticModel {
    /// A model with all parameters zero and identity input normalization.
    pub fn zeros(dims: ModelDims) -> Self {
        let mut params = vec![0.0; dims.param_count()];
        let o = dims.offsets();
        params[o[1]..o[2]].fill(1.0);
        Self { dims, params }
    }

    /// Random initialization with input normalization estimated from `stats`.
    pub fn init(dims: ModelDims, stats: &[FeatureMatrix], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dims);
        model.set_normalization(stats)?;
        let mut r = rng::seeded(seed);
        let o = dims.offsets();
        let fan = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let limits = [
            (2, fan(dims.kernel * dims.mel_bins, dims.hidden1)),
            (4, fan(dims.kernel * dims.hidden1, dims.hidden2)),
            (6, fan(dims.hidden2, dims.classes)),
        ];
        for (block, limit) in limits {
            for p in &mut model.params[o[block]..o[block + 1]] {
                *p = r.gen_range(-limit..limit);
            }
        }
        Ok(model)
    }

    pub fn from_params(dims: ModelDims, params: Vec<f64>) -> Result<Self> {
        if params.len() != dims.param_count() {
            return Err(Error::Format(format!(
                "{} parameters for an architecture needing {}",
                params.len(),
                dims.param_count()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(Self { dims, params })
    }

    pub fn set_normalization(&mut self, stats: &[FeatureMatrix]) -> Result<()> {
        let bins = self.dims.mel_bins;
        let mut sum = vec![0.0; bins];
        let mut sq = vec![0.0; bins];
        let mut n = 0usize;
        for f in stats {
            if f.bins() != bins {
                return Err(Error::invalid("feature width does not match the model"));
            }
            for t in 0..f.frames() {
                for (c, v) in f.row(t).iter().enumerate() {
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            n += f.frames();
        }
        if n == 0 {
            return Ok(());
        }
        let o = self.dims.offsets();
        for c in 0..bins {
            let mean = sum[c] / n as f64;
            let var = (sq[c] / n as f64 - mean * mean).max(1e-6);
            self.params[o[0] + c] = mean;
            self.params[o[1] + c] = 1.0 / var.sqrt();
        }
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn block(&self, i: usize) -> &[f64] {
        let o = self.dims.offsets();
        &self.params[o[i]..o[i + 1]]
    }

    pub fn forward(&self, f: &FeatureMatrix) -> Result<Logits> {
        Ok(self.forward_tape(f)?.0)
    }

    pub fn forward_tape(&self, f: &FeatureMatrix) -> Result<(Logits, ModelTape)> {
        let d = self.dims;
        if f.frames() == 0 {
            return Err(Error::invalid("no feature frames"));
        }
        if f.bins() != d.mel_bins {
            return Err(Error::invalid(format!(
                "{} feature bins, model expects {}",
                f.bins(),
                d.mel_bins
            )));
        }
        let (mean, inv_std) = (self.block(0), self.block(1));
        let input: Vec<f64> = f
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - mean[i % d.mel_bins]) * inv_std[i % d.mel_bins])
            .collect();
        let frames0 = f.frames();
        let (h1, frames1) = conv_forward(&input, frames0, d.mel_bins, self.block(2), self.block(3), d.kernel, d.stride);
        let (h2, frames2) = conv_forward(&h1, frames1, d.hidden1, self.block(4), self.block(5), d.kernel, d.stride);
        let (wo, bo) = (self.block(6), self.block(7));
        let mut logits = vec![0.0; frames2 * d.classes];
        for t in 0..frames2 {
            let h = &h2[t * d.hidden2..(t + 1) * d.hidden2];
            for v in 0..d.classes {
                let w = &wo[v * d.hidden2..(v + 1) * d.hidden2];
                logits[t * d.classes + v] = bo[v] + w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let logits = Logits::new(frames2, d.classes, logits)?;
        Ok((
            logits,
            ModelTape {
                input,
                frames0,
                h1,
                frames1,
                h2,
                frames2,
            },
        ))
    }

    /// Gradients w.r.t. trainable parameters and the input features given
    /// `grad` w.r.t. the logits. Normalization statistics get zero gradient.
    pub fn backward(&self, tape: &ModelTape, grad: &[f64]) -> Result<ModelGradients> {
        let d = self.dims;
        if grad.len() != tape.frames2 * d.classes {
            return Err(Error::invalid("logit gradient has the wrong shape"));
        }
        let o = d.offsets();
        let mut gp = vec![0.0; d.param_count()];
        let wo = self.block(6);
        let mut gh2 = vec![0.0; tape.frames2 * d.hidden2];
        {
            let (head, tail) = gp.split_at_mut(o[7]);
            let gwo = &mut head[o[6]..];
            let gbo = &mut tail[..d.classes];
            for t in 0..tape.frames2 {
                let h = &tape.h2[t * d.hidden2..(t + 1) * d.hidden2];
                for v in 0..d.classes {
                    let g = grad[t * d.classes + v];
                    gbo[v] += g;
                    for j in 0..d.hidden2 {
                        gwo[v * d.hidden2 + j] += g * h[j];
                        gh2[t * d.hidden2 + j] += g * wo[v * d.hidden2 + j];
                    }
                }
            }
        }
        let gh1 = {
            let (head, tail) = gp.split_at_mut(o[5]);
            conv_backward(
                &tape.h1,
                tape.frames1,
                d.hidden1,
                &tape.h2,
                &gh2,
                self.block(4),
                d.kernel,
                d.stride,
                &mut head[o[4]..],
                &mut tail[..d.hidden2],
            )
        };
        let gin = {
            let (head, tail) = gp.split_at_mut(o[3]);
            conv_backward(
                &tape.input,
                tape.frames0,
                d.mel_bins,
                &tape.h1,
                &gh1,
                self.block(2),
                d.kernel,
                d.stride,
                &mut head[o[2]..],
                &mut tail[..d.hidden1],
            )
        };
        let inv_std = self.block(1);
        let input = gin
            .iter()
            .enumerate()
            .map(|(i, g)| g * inv_std[i % d.mel_bins])
            .collect();
        Ok(ModelGradients { params: gp, input })
    }
}
