//! Stride-1 convolutional stack with tanh hidden layers and a per-pixel
//! softmax output, evaluated on arbitrary output regions of a frame.

mod conv;
mod kernels;
mod pool;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::Rect;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stream::Frame;

pub use conv::{backward, forward, ForwardCache, OutputView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.out_channels
    }

    pub fn radius(&self) -> usize {
        self.kernel / 2
    }
}

/// Layer stack; the preset names are `S`, `D` and `DL`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

fn stack(name: &str, hidden: &[(usize, usize)], last_kernel: usize, m: usize) -> Architecture {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut c_in = 1;
    for &(kernel, width) in hidden {
        layers.push(LayerSpec { kernel, in_channels: c_in, out_channels: width, activation: Activation::Tanh });
        c_in = width;
    }
    layers.push(LayerSpec { kernel: last_kernel, in_channels: c_in, out_channels: m, activation: Activation::Softmax });
    Architecture { name: name.to_string(), layers }
}

impl Architecture {
    /// Three layers: 5×5, 5×5, 7×7; 20 hidden filters; 10 output symbols.
    pub fn small() -> Self {
        stack("S", &[(5, 20), (5, 20)], 7, 10)
    }

    /// Seven layers: six 5×5 and one 7×7; 20 hidden filters; 10 output symbols.
    pub fn deep() -> Self {
        stack("D", &[(5, 20); 6], 7, 10)
    }

    /// As `D` with 32 hidden filters and 32 output symbols.
    pub fn deep_large() -> Self {
        stack("DL", &[(5, 32); 6], 7, 32)
    }

    /// Arbitrary stack of `(kernel, width)` tanh layers plus a softmax layer.
    pub fn custom(hidden: &[(usize, usize)], last_kernel: usize, m: usize) -> Result<Self> {
        let mut a = stack("", hidden, last_kernel, m);
        a.name = a.descriptor_of_layers();
        a.validate()?;
        Ok(a)
    }

    fn descriptor_of_layers(&self) -> String {
        self.layers
            .iter()
            .map(|l| {
                let act = if l.activation == Activation::Tanh { 't' } else { 's' };
                format!("k{}c{}{}", l.kernel, l.out_channels, act)
            })
            .collect::<Vec<_>>()
            .join("-")
    }

    /// Preset name, or the layer encoding `k5c3t-k3c3s` for custom stacks.
    pub fn descriptor(&self) -> String {
        match self.name.as_str() {
            "S" | "D" | "DL" => self.name.clone(),
            _ => self.descriptor_of_layers(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Architecture(msg));
        let Some(last) = self.layers.last() else {
            return bad("no layers".into());
        };
        if last.activation != Activation::Softmax || last.out_channels < 2 {
            return bad("last layer must be a softmax with at least 2 outputs".into());
        }
        let mut c_in = 1;
        for (i, l) in self.layers.iter().enumerate() {
            if l.kernel % 2 == 0 || l.kernel == 0 {
                return bad(format!("layer {i}: kernel {} is not odd", l.kernel));
            }
            if l.in_channels != c_in || l.out_channels == 0 {
                return bad(format!("layer {i}: channel mismatch ({} in, expected {c_in})", l.in_channels));
            }
            if i + 1 < self.layers.len() && l.activation != Activation::Tanh {
                return bad(format!("layer {i}: hidden layers use tanh"));
            }
            c_in = l.out_channels;
        }
        Ok(())
    }

    /// Output symbols `m`.
    pub fn m(&self) -> usize {
        self.layers.last().map(|l| l.out_channels).unwrap_or(0)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_len).sum()
    }

    /// `1 + Σ (kernel − 1)`.
    pub fn receptive_field(&self) -> usize {
        1 + self.layers.iter().map(|l| l.kernel - 1).sum::<usize>()
    }

    pub fn layout(&self) -> ParamLayout {
        let mut slots = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for l in &self.layers {
            let weights = offset;
            let bias = weights + l.weight_len();
            offset = bias + l.out_channels;
            slots.push(LayerSlots { weights, bias, end: offset });
        }
        ParamLayout { slots, n: offset }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" => return Ok(Self::small()),
            "D" => return Ok(Self::deep()),
            "DL" => return Ok(Self::deep_large()),
            _ => {}
        }
        let err = || Error::Architecture(format!("cannot parse architecture '{s}'"));
        let mut hidden = Vec::new();
        let parts: Vec<&str> = s.split('-').collect();
        let (last, rest) = parts.split_last().ok_or_else(err)?;
        let parse = |p: &str, act: char| -> Result<(usize, usize)> {
            let body = p.strip_prefix('k').and_then(|b| b.strip_suffix(act)).ok_or_else(err)?;
            let (k, c) = body.split_once('c').ok_or_else(err)?;
            Ok((k.parse().map_err(|_| err())?, c.parse().map_err(|_| err())?))
        };
        for p in rest {
            hidden.push(parse(p, 't')?);
        }
        let (k, m) = parse(last, 's')?;
        Self::custom(&hidden, k, m)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlots {
    /// Start of the `[out][in][ky][kx]` weight block.
    pub weights: usize,
    /// Start of the `[out]` bias block.
    pub bias: usize,
    pub end: usize,
}

/// Offsets of each layer's block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub slots: Vec<LayerSlots>,
    pub n: usize,
}

/// Flat weights-and-biases vector `w ∈ R^n` for one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub arch: Architecture,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(arch: &Architecture) -> Self {
        Self { arch: arch.clone(), values: vec![0.0; arch.n_params()] }
    }

    pub fn from_values(arch: &Architecture, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.n_params() {
            return Err(Error::Architecture(format!(
                "{} values for architecture {} with n = {}",
                values.len(),
                arch,
                arch.n_params()
            )));
        }
        Ok(Self { arch: arch.clone(), values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn layout(&self) -> ParamLayout {
        self.arch.layout()
    }
}

/// Fan-in uniform weights in `±1/√(in·k²)` and zero biases.
pub fn init_params(arch: &Architecture, seed: u64) -> Result<ParamVector> {
    arch.validate()?;
    let mut rng = stream_rng(seed, "network/init");
    let mut values = vec![0.0; arch.n_params()];
    for (l, slot) in arch.layers.iter().zip(arch.layout().slots) {
        let bound = 1.0 / ((l.in_channels * l.kernel * l.kernel) as f64).sqrt();
        for w in &mut values[slot.weights..slot.bias] {
            *w = rng.gen_range(-bound..=bound);
        }
    }
    Ok(ParamVector { arch: arch.clone(), values })
}

pub fn receptive_field(arch: &Architecture) -> usize {
    arch.receptive_field()
}

/// A zero-padded square cut of a frame, remembering where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub frame: Frame,
    /// Frame coordinates of the patch's top-left pixel.
    pub origin: (isize, isize),
}

impl Patch {
    pub fn center(&self) -> (usize, usize) {
        (self.frame.width() / 2, self.frame.height() / 2)
    }

    pub fn to_frame(&self, x: usize, y: usize) -> (isize, isize) {
        (self.origin.0 + x as isize, self.origin.1 + y as isize)
    }
}

/// `rf × rf` window centered on `(cx, cy)`, zero where it leaves the retina.
pub fn crop(frame: &Frame, cx: usize, cy: usize, rf: usize) -> Result<Patch> {
    if rf % 2 == 0 {
        return Err(Error::Dimension(format!("crop size {rf} must be odd")));
    }
    let half = (rf / 2) as isize;
    let origin = (cx as isize - half, cy as isize - half);
    let mut pixels = vec![0.0; rf * rf];
    for y in 0..rf {
        let fy = origin.1 + y as isize;
        if fy < 0 || fy >= frame.height() as isize {
            continue;
        }
        for x in 0..rf {
            let fx = origin.0 + x as isize;
            if fx >= 0 && fx < frame.width() as isize {
                pixels[y * rf + x] = frame.get(fx as usize, fy as usize);
            }
        }
    }
    Ok(Patch { frame: Frame::new(rf, rf, frame.index(), pixels)?, origin })
}

/// Region covering the whole frame.
pub fn full_region(frame: &Frame) -> Rect {
    Rect::full(frame.width(), frame.height())
}
