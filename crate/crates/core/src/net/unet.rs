//! U-Net-style image-to-image network with hand-written backpropagation.
//!
//! Encoder levels are two same-padded convolutions plus ReLU followed by
//! 2x2 max pooling; the decoder mirrors them with nearest-neighbor
//! upsampling, an up-convolution and concatenation skips; a final 1x1
//! linear convolution produces the single-channel output. Parameters live
//! in one flat vector so the optimizer, checkpointing and the
//! finite-difference checks all see the same layout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::*;
use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// Architecture description. Activation (ReLU), skip type (concatenation)
/// and the linear single-channel output are fixed by design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Number of down/up levels.
    pub depth: usize,
    /// Channels at the first level; doubled per level going down.
    pub base_channels: usize,
    /// Odd convolution kernel size.
    pub kernel_size: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            depth: 4,
            base_channels: 32,
            kernel_size: 3,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("unet depth must be >= 1".into()));
        }
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be >= 1".into()));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }

    /// Input sides must be divisible by this.
    pub fn side_multiple(&self) -> usize {
        1 << self.depth
    }

    fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// Role of one convolution in the layer walk.
#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    dims: ConvDims,
    relu: bool,
    w_off: usize,
    b_off: usize,
}

/// Per-batch activations retained for the backward pass.
pub struct Trace {
    conv_inputs: Vec<Tensor4>,
    conv_outputs: Vec<Tensor4>,
    pool_argmax: Vec<Vec<usize>>,
    skips: Vec<Tensor4>,
    output: Tensor4,
}

impl Trace {
    pub fn output(&self) -> &Tensor4 {
        &self.output
    }
}

#[derive(Debug, Clone)]
pub struct UNet {
    cfg: UNetConfig,
    layers: Vec<ConvLayer>,
    params: Vec<f64>,
}

/// Closed-form parameter count: sum of oc·ic·k² + oc over the layer walk.
pub fn param_count(cfg: &UNetConfig) -> usize {
    layer_dims(cfg).iter().map(|(d, _)| d.param_len()).sum()
}

/// Conv layers in walk order: encoder pairs, bottleneck pair, then per
/// decoder level (deepest first) up-conv + two convs, then the final 1x1.
fn layer_dims(cfg: &UNetConfig) -> Vec<(ConvDims, bool)> {
    let k = cfg.kernel_size;
    let mut v = Vec::new();
    let mut in_ch = 1;
    for level in 0..cfg.depth {
        let ch = cfg.channels_at(level);
        v.push((ConvDims { in_ch, out_ch: ch, k }, true));
        v.push((ConvDims { in_ch: ch, out_ch: ch, k }, true));
        in_ch = ch;
    }
    let bottleneck = cfg.channels_at(cfg.depth);
    v.push((ConvDims { in_ch, out_ch: bottleneck, k }, true));
    v.push((ConvDims { in_ch: bottleneck, out_ch: bottleneck, k }, true));
    for level in (0..cfg.depth).rev() {
        let ch = cfg.channels_at(level);
        let above = cfg.channels_at(level + 1);
        v.push((ConvDims { in_ch: above, out_ch: ch, k }, true)); // up-conv
        v.push((ConvDims { in_ch: 2 * ch, out_ch: ch, k }, true));
        v.push((ConvDims { in_ch: ch, out_ch: ch, k }, true));
    }
    v.push((
        ConvDims {
            in_ch: cfg.base_channels,
            out_ch: 1,
            k: 1,
        },
        false,
    ));
    v
}

/// Deterministic seeded construction; He-normal weights, zero biases.
pub fn build_unet(cfg: &UNetConfig, seed: u64) -> Result<UNet> {
    cfg.validate()?;
    let dims = layer_dims(cfg);
    let mut layers = Vec::with_capacity(dims.len());
    let mut offset = 0;
    for (d, relu) in &dims {
        layers.push(ConvLayer {
            dims: *d,
            relu: *relu,
            w_off: offset,
            b_off: offset + d.weight_len(),
        });
        offset += d.param_len();
    }
    let mut params = vec![0.0; offset];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &layers {
        let fan_in = (layer.dims.in_ch * layer.dims.k * layer.dims.k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        for i in 0..layer.dims.weight_len() {
            params[layer.w_off + i] = normal.sample(&mut rng);
        }
        // Biases stay zero.
    }
    Ok(UNet {
        cfg: *cfg,
        layers,
        params,
    })
}

enum Mode<'a> {
    Plain,
    Traced(&'a mut Trace),
}

/// Public view of one layer's parameter slice, for tooling and tests.
#[derive(Debug, Clone, Copy)]
pub struct LayerInfo {
    pub dims: ConvDims,
    pub relu: bool,
    pub w_off: usize,
    pub b_off: usize,
}

impl UNet {
    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    /// Layer walk with parameter offsets into the flat vector.
    pub fn layer_infos(&self) -> Vec<LayerInfo> {
        self.layers
            .iter()
            .map(|l| LayerInfo {
                dims: l.dims,
                relu: l.relu,
                w_off: l.w_off,
                b_off: l.b_off,
            })
            .collect()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch: {} vs {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.c != 1 {
            return Err(Error::Dimension(format!(
                "network expects single-channel input, got {} channels",
                x.c
            )));
        }
        let m = self.cfg.side_multiple();
        if x.h % m != 0 || x.w % m != 0 || x.h == 0 || x.w == 0 {
            return Err(Error::Dimension(format!(
                "input {}x{} must be a nonzero multiple of {m} for depth {}",
                x.w, x.h, self.cfg.depth
            )));
        }
        Ok(())
    }

    fn conv_apply(&self, idx: usize, x: Tensor4, mode: &mut Mode) -> Tensor4 {
        let layer = self.layers[idx];
        let w = &self.params[layer.w_off..layer.w_off + layer.dims.weight_len()];
        let b = &self.params[layer.b_off..layer.b_off + layer.dims.out_ch];
        let mut out = conv2d_forward(&x, w, b, layer.dims);
        if layer.relu {
            relu_inplace(&mut out);
        }
        if let Mode::Traced(t) = mode {
            t.conv_inputs[idx] = x;
            t.conv_outputs[idx] = out.clone();
        }
        out
    }

    fn run(&self, x: &Tensor4, mut mode: Mode) -> Result<Tensor4> {
        self.check_input(x)?;
        let d = self.cfg.depth;
        let mut skips: Vec<Tensor4> = Vec::with_capacity(d);
        let mut cur = x.clone();
        for level in 0..d {
            cur = self.conv_apply(2 * level, cur, &mut mode);
            cur = self.conv_apply(2 * level + 1, cur, &mut mode);
            let (pooled, argmax) = maxpool2_forward(&cur);
            if let Mode::Traced(t) = &mut mode {
                t.skips.push(cur);
                t.pool_argmax.push(argmax);
            } else {
                skips.push(cur);
            }
            cur = pooled;
        }
        cur = self.conv_apply(2 * d, cur, &mut mode);
        cur = self.conv_apply(2 * d + 1, cur, &mut mode);
        for (walk, level) in (0..d).rev().enumerate() {
            let up_idx = 2 * d + 2 + 3 * walk;
            cur = upsample2_forward(&cur);
            cur = self.conv_apply(up_idx, cur, &mut mode);
            let skip = match &mode {
                Mode::Traced(t) => &t.skips[level],
                Mode::Plain => &skips[level],
            };
            cur = concat_channels(skip, &cur);
            cur = self.conv_apply(up_idx + 1, cur, &mut mode);
            cur = self.conv_apply(up_idx + 2, cur, &mut mode);
        }
        let out = self.conv_apply(self.layers.len() - 1, cur, &mut mode);
        if let Mode::Traced(t) = &mut mode {
            t.output = out.clone();
        }
        Ok(out)
    }

    /// Inference-only forward pass.
    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.run(x, Mode::Plain)
    }

    /// Forward pass retaining everything the backward pass needs.
    pub fn forward_trace(&self, x: &Tensor4) -> Result<Trace> {
        let n_conv = self.layers.len();
        let empty = Tensor4::zeros(1, 1, 1, 1);
        let mut trace = Trace {
            conv_inputs: vec![empty.clone(); n_conv],
            conv_outputs: vec![empty.clone(); n_conv],
            pool_argmax: Vec::with_capacity(self.cfg.depth),
            skips: Vec::with_capacity(self.cfg.depth),
            output: empty,
        };
        self.run(x, Mode::Traced(&mut trace))?;
        Ok(trace)
    }

    fn conv_backward(&self, idx: usize, mut grad_out: Tensor4, trace: &Trace, grads: &mut [f64]) -> Tensor4 {
        let layer = self.layers[idx];
        if layer.relu {
            relu_backward_inplace(&mut grad_out, &trace.conv_outputs[idx]);
        }
        let w = &self.params[layer.w_off..layer.w_off + layer.dims.weight_len()];
        let (gw, gb) = grads[layer.w_off..layer.w_off + layer.dims.param_len()]
            .split_at_mut(layer.dims.weight_len());
        conv2d_backward_params(&trace.conv_inputs[idx], &grad_out, layer.dims, gw, gb);
        conv2d_backward_input(&grad_out, w, layer.dims)
    }

    /// Gradient of the scalar loss wrt every parameter, given the loss
    /// gradient wrt the network output.
    pub fn backward(&self, trace: &Trace, grad_output: Tensor4) -> Vec<f64> {
        let d = self.cfg.depth;
        let mut grads = vec![0.0; self.params.len()];
        let mut g = self.conv_backward(self.layers.len() - 1, grad_output, trace, &mut grads);

        let mut skip_grads: Vec<Option<Tensor4>> = (0..d).map(|_| None).collect();
        // Decoder levels unwind shallowest-first (reverse of the forward
        // walk, which went deepest-first).
        for level in 0..d {
            let walk = d - 1 - level;
            let up_idx = 2 * d + 2 + 3 * walk;
            g = self.conv_backward(up_idx + 2, g, trace, &mut grads);
            g = self.conv_backward(up_idx + 1, g, trace, &mut grads);
            let ch = self.cfg.channels_at(level);
            let (gs, gu) = split_channels(&g, ch);
            skip_grads[level] = Some(gs);
            g = self.conv_backward(up_idx, gu, trace, &mut grads);
            g = upsample2_backward(&g);
        }
        g = self.conv_backward(2 * d + 1, g, trace, &mut grads);
        g = self.conv_backward(2 * d, g, trace, &mut grads);
        for level in (0..d).rev() {
            let mut unpooled = maxpool2_backward(&g, &trace.pool_argmax[level]);
            let skip_g = skip_grads[level].take().expect("skip grad filled");
            for (a, b) in unpooled.data.iter_mut().zip(&skip_g.data) {
                *a += b;
            }
            g = self.conv_backward(2 * level + 1, unpooled, trace, &mut grads);
            g = self.conv_backward(2 * level, g, trace, &mut grads);
        }
        grads
    }
}
