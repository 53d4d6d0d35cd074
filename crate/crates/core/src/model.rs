//! Binary network architectures.
//!
//! A configuration is a flat vector of bits; bit `b` encodes weight
//! `2b - 1`. Parameters are laid out layer by layer, row-major inside each
//! layer:
//!
//! * `Linear`: `[d]`.
//! * `Mlp`: hidden layer `l` as `[h_l x h_{l-1}]` (with `h_{-1} = d`), then
//!   the output layer `[h_last]`.
//! * `Conv`: each convolution as `[filters x in_channels x kernel x kernel]`,
//!   then the output layer over the flattened `[channel x row x col]` map.
//!
//! Hidden units threshold their pre-activation to `{0, 1}` (`>= 0` gives 1),
//! the output unit is a sign mapped to a label (`>= 0` gives 1). There are no
//! biases and convolutions use no padding.

use crate::error::{contract, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Architecture {
    Linear { input_dim: usize },
    Mlp { input_dim: usize, hidden: Vec<usize> },
    Conv { height: usize, width: usize, layers: Vec<ConvLayer> },
}

#[derive(Clone, Copy, Debug)]
struct ConvShape {
    in_channels: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    layer: ConvLayer,
}

impl ConvShape {
    fn weights(&self) -> usize {
        self.layer.filters * self.in_channels * self.layer.kernel * self.layer.kernel
    }

    fn outputs(&self) -> usize {
        self.layer.filters * self.out_h * self.out_w
    }
}

impl Architecture {
    /// The three MNIST presets on 14x14 pooled images.
    pub fn mnist_linear() -> Self {
        Architecture::Linear { input_dim: 196 }
    }

    pub fn mnist_mlp() -> Self {
        Architecture::Mlp { input_dim: 196, hidden: vec![2] }
    }

    pub fn mnist_conv() -> Self {
        Architecture::Conv {
            height: 14,
            width: 14,
            layers: vec![
                ConvLayer { filters: 3, kernel: 3, stride: 2 },
                ConvLayer { filters: 2, kernel: 3, stride: 2 },
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Linear { input_dim } | Architecture::Mlp { input_dim, .. } => *input_dim,
            Architecture::Conv { height, width, .. } => height * width,
        }
    }

    /// Checks that every layer is non-empty and every convolution fits.
    pub fn validate(&self) -> Result<()> {
        contract(self.input_dim() > 0, || "architecture has zero input dimension".into())?;
        match self {
            Architecture::Linear { .. } => Ok(()),
            Architecture::Mlp { hidden, .. } => {
                contract(hidden.iter().all(|&h| h > 0), || "hidden layer of width zero".into())
            }
            Architecture::Conv { layers, .. } => {
                contract(!layers.is_empty(), || "conv architecture needs a layer".into())?;
                contract(
                    layers.iter().all(|l| l.filters > 0 && l.kernel > 0 && l.stride > 0),
                    || "conv layer with zero filters, kernel or stride".into(),
                )?;
                self.conv_shapes().map(|_| ())
            }
        }
    }

    fn conv_shapes(&self) -> Result<Vec<ConvShape>> {
        let Architecture::Conv { height, width, layers } = self else {
            return Ok(Vec::new());
        };
        let (mut c, mut h, mut w) = (1, *height, *width);
        let mut shapes = Vec::with_capacity(layers.len());
        for layer in layers {
            contract(layer.kernel <= h && layer.kernel <= w, || {
                format!("kernel {} does not fit a {h}x{w} map", layer.kernel)
            })?;
            let out_h = (h - layer.kernel) / layer.stride + 1;
            let out_w = (w - layer.kernel) / layer.stride + 1;
            shapes.push(ConvShape { in_channels: c, in_h: h, in_w: w, out_h, out_w, layer: *layer });
            c = layer.filters;
            h = out_h;
            w = out_w;
        }
        Ok(shapes)
    }

    /// Number of binary weights.
    pub fn param_count(&self) -> usize {
        match self {
            Architecture::Linear { input_dim } => *input_dim,
            Architecture::Mlp { input_dim, hidden } => {
                let mut prev = *input_dim;
                let mut total = 0;
                for &h in hidden {
                    total += h * prev;
                    prev = h;
                }
                total + prev
            }
            Architecture::Conv { .. } => {
                let shapes = self.conv_shapes().expect("invalid conv architecture");
                let conv: usize = shapes.iter().map(ConvShape::weights).sum();
                conv + shapes.last().map_or(0, ConvShape::outputs)
            }
        }
    }

    /// Predicted label of input `x` under `config`.
    pub fn forward(&self, config: &Configuration, x: &[u8]) -> Result<u8> {
        contract(x.len() == self.input_dim(), || {
            format!("input has length {}, architecture expects {}", x.len(), self.input_dim())
        })?;
        contract(config.len() == self.param_count(), || {
            format!("configuration has {} bits, architecture has {}", config.len(), self.param_count())
        })?;
        Ok(self.forward_bits(&config.bits, x, &mut Vec::new()))
    }

    /// Forward pass without dimension checks. `scratch` holds activations.
    pub fn forward_bits(&self, bits: &[u8], x: &[u8], scratch: &mut Vec<i32>) -> u8 {
        match self {
            Architecture::Linear { .. } => sign_label(signed_dot(bits, x)),
            Architecture::Mlp { input_dim, hidden } => {
                scratch.clear();
                scratch.extend(x.iter().map(|&v| v as i32));
                let mut offset = 0;
                let mut prev = *input_dim;
                let mut next = Vec::new();
                for &h in hidden {
                    next.clear();
                    for unit in 0..h {
                        let w = &bits[offset + unit * prev..offset + (unit + 1) * prev];
                        next.push(threshold(signed_dot_i32(w, scratch)));
                    }
                    offset += h * prev;
                    prev = h;
                    std::mem::swap(scratch, &mut next);
                }
                sign_label(signed_dot_i32(&bits[offset..offset + prev], scratch))
            }
            Architecture::Conv { .. } => {
                let shapes = self.conv_shapes().expect("invalid conv architecture");
                scratch.clear();
                scratch.extend(x.iter().map(|&v| v as i32));
                let mut next = Vec::new();
                let mut offset = 0;
                for s in &shapes {
                    conv_threshold(s, &bits[offset..offset + s.weights()], scratch, &mut next);
                    offset += s.weights();
                    std::mem::swap(scratch, &mut next);
                }
                sign_label(signed_dot_i32(&bits[offset..], scratch))
            }
        }
    }
}

fn conv_threshold(s: &ConvShape, w: &[u8], input: &[i32], out: &mut Vec<i32>) {
    let k = s.layer.kernel;
    out.clear();
    for f in 0..s.layer.filters {
        for oy in 0..s.out_h {
            for ox in 0..s.out_w {
                let mut acc = 0i32;
                for c in 0..s.in_channels {
                    let wbase = ((f * s.in_channels + c) * k) * k;
                    let ibase = c * s.in_h * s.in_w;
                    for ky in 0..k {
                        let row = ibase + (oy * s.layer.stride + ky) * s.in_w + ox * s.layer.stride;
                        for kx in 0..k {
                            let a = input[row + kx];
                            if a != 0 {
                                let b = w[wbase + ky * k + kx] as i32;
                                acc += a * (2 * b - 1);
                            }
                        }
                    }
                }
                out.push(threshold(acc));
            }
        }
    }
}

#[inline]
fn threshold(pre: i32) -> i32 {
    (pre >= 0) as i32
}

#[inline]
fn sign_label(pre: i32) -> u8 {
    (pre >= 0) as u8
}

#[inline]
fn signed_dot(bits: &[u8], x: &[u8]) -> i32 {
    let mut acc = 0i32;
    for (&b, &xi) in bits.iter().zip(x) {
        if xi != 0 {
            acc += 2 * b as i32 - 1;
        }
    }
    acc
}

#[inline]
fn signed_dot_i32(bits: &[u8], a: &[i32]) -> i32 {
    bits.iter().zip(a).map(|(&b, &v)| v * (2 * b as i32 - 1)).sum()
}

/// A full assignment of binary weights.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub bits: Vec<u8>,
}

impl Configuration {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        contract(bits.iter().all(|&b| b <= 1), || "configuration bits must be 0 or 1".into())?;
        Ok(Self { bits })
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Weights in `{-1, +1}`.
    pub fn weights(&self) -> Vec<i8> {
        self.bits.iter().map(|&b| 2 * b as i8 - 1).collect()
    }

    pub fn complement(&self) -> Self {
        Self { bits: self.bits.iter().map(|&b| 1 - b).collect() }
    }
}
