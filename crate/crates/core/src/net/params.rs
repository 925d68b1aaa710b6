use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::normal_at;
use crate::{Error, Result};

/// Architecture of the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    pub mapping_layers: usize,
    /// Channel count per level, coarsest first; `levels = widths.len() − 1`.
    pub widths: Vec<usize>,
    pub n_pad: usize,
}

impl GeneratorConfig {
    /// Desk-scale default: two upsampling levels, 32 → 16 channels.
    pub fn toy() -> Self {
        GeneratorConfig { latent_dim: 32, mapping_layers: 2, widths: vec![32, 24, 16], n_pad: 3 }
    }

    pub fn levels(&self) -> usize {
        self.widths.len() - 1
    }

    /// Modulated convolutions: one at the input, two per level.
    pub fn style_layers(&self) -> usize {
        1 + 2 * self.levels()
    }

    /// Level of modulated convolution `k`.
    pub fn layer_level(&self, k: usize) -> usize {
        k.div_ceil(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::invalid(format!("widths must be non-empty and positive, got {:?}", self.widths)));
        }
        if self.latent_dim == 0 {
            return Err(Error::invalid("latent_dim must be >= 1"));
        }
        Ok(())
    }
}

/// A named parameter array. Values are always exactly representable as
/// `f32`, which is what makes the checkpoint round-trip bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let len = shape.iter().product();
        ParamTensor { name: name.into(), shape: shape.to_vec(), data: vec![0.0; len] }
    }

    fn filled(name: impl Into<String>, shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(name, shape);
        t.data.iter_mut().for_each(|v| *v = value);
        t
    }

    pub(crate) fn normal(name: impl Into<String>, shape: &[usize], std: f64, seed: u64) -> Self {
        let name = name.into();
        let key = crate::rng::hash_words(&name.bytes().map(u64::from).collect::<Vec<_>>());
        let mut t = Self::zeros(name, shape);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = round_f32(std * normal_at(&[seed, key, i as u64]));
        }
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[inline]
pub fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(out, in)`.
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

impl Dense {
    pub fn out_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.in_dim();
        (0..self.out_dim())
            .map(|o| {
                let row = &self.weight.data[o * n..(o + 1) * n];
                self.bias.data[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grads`; returns the input gradient.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grads: &mut Dense) -> Vec<f64> {
        let n = self.in_dim();
        let mut gx = vec![0.0; n];
        for (o, &g) in grad_out.iter().enumerate() {
            grads.bias.data[o] += g;
            let row = &self.weight.data[o * n..(o + 1) * n];
            let grow = &mut grads.weight.data[o * n..(o + 1) * n];
            for i in 0..n {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
        }
        gx
    }
}

/// Style-modulated 3×3 valid convolution with noise injection.
#[derive(Debug, Clone, PartialEq)]
pub struct ModConvParams {
    /// `(out, in, 3, 3)`.
    pub weight: ParamTensor,
    pub bias: ParamTensor,
    /// Maps a latent to the per-input-channel style.
    pub affine: Dense,
    /// Learned scalar multiplying the injected noise; starts at 0.
    pub noise_strength: ParamTensor,
}

impl ModConvParams {
    pub fn out_ch(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn in_ch(&self) -> usize {
        self.weight.shape[1]
    }
}

/// Plain 1×1 convolution (coordinate projection and to-RGB).
#[derive(Debug, Clone, PartialEq)]
pub struct PointConv {
    /// `(out, in, 1, 1)`.
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub config: GeneratorConfig,
    pub mapping: Vec<Dense>,
    pub input_proj: PointConv,
    /// Input convolution followed by two per level.
    pub convs: Vec<ModConvParams>,
    /// One per level, including level 0.
    pub to_rgb: Vec<PointConv>,
}

impl GeneratorParams {
    /// Randomly initialized parameters, deterministic in `seed`.
    pub fn init(config: &GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self::build(config, |name, shape, init| match init {
            Init::Zero => ParamTensor::zeros(name, shape),
            Init::Const(v) => ParamTensor::filled(name, shape, v),
            Init::Normal(std) => ParamTensor::normal(name, shape, std, seed),
        }))
    }

    /// All-zero parameters with the same structure (used for gradients).
    pub fn zeros_like(&self) -> Self {
        Self::build(&self.config, |name, shape, _| ParamTensor::zeros(name, shape))
    }

    fn build(config: &GeneratorConfig, mut make: impl FnMut(String, &[usize], Init) -> ParamTensor) -> Self {
        let d = config.latent_dim;
        let dense = |make: &mut dyn FnMut(String, &[usize], Init) -> ParamTensor, name: &str, o: usize, i: usize, bias: Init| Dense {
            weight: make(format!("{name}.weight"), &[o, i], Init::Normal(1.0 / libm::sqrt(i as f64))),
            bias: make(format!("{name}.bias"), &[o], bias),
        };
        let mapping = (0..config.mapping_layers)
            .map(|k| dense(&mut make, &format!("mapping.{k}"), d, d, Init::Zero))
            .collect();
        let w0 = config.widths[0];
        let input_proj = PointConv {
            weight: make("input_proj.weight".into(), &[w0, 2, 1, 1], Init::Normal(1.0)),
            bias: make("input_proj.bias".into(), &[w0], Init::Zero),
        };
        let mut convs = Vec::with_capacity(config.style_layers());
        for k in 0..config.style_layers() {
            let level = config.layer_level(k);
            let out_ch = config.widths[level];
            let in_ch = if k == 0 {
                w0
            } else if k % 2 == 1 {
                config.widths[level - 1]
            } else {
                out_ch
            };
            let name = format!("conv.{k}");
            convs.push(ModConvParams {
                weight: make(format!("{name}.weight"), &[out_ch, in_ch, 3, 3], Init::Normal(1.0)),
                bias: make(format!("{name}.bias"), &[out_ch], Init::Zero),
                affine: dense(&mut make, &format!("{name}.affine"), in_ch, d, Init::Const(1.0)),
                noise_strength: make(format!("{name}.noise_strength"), &[1], Init::Zero),
            });
        }
        let to_rgb = config
            .widths
            .iter()
            .enumerate()
            .map(|(l, &w)| PointConv {
                weight: make(format!("to_rgb.{l}.weight"), &[3, w, 1, 1], Init::Normal(1.0 / libm::sqrt(w as f64))),
                bias: make(format!("to_rgb.{l}.bias"), &[3], Init::Zero),
            })
            .collect();
        GeneratorParams { config: config.clone(), mapping, input_proj, convs, to_rgb }
    }

    /// Every parameter array in canonical (checkpoint) order.
    pub fn tensors(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        for m in &self.mapping {
            out.push(&m.weight);
            out.push(&m.bias);
        }
        out.push(&self.input_proj.weight);
        out.push(&self.input_proj.bias);
        for c in &self.convs {
            out.extend([&c.weight, &c.bias, &c.affine.weight, &c.affine.bias, &c.noise_strength]);
        }
        for r in &self.to_rgb {
            out.push(&r.weight);
            out.push(&r.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::new();
        for m in &mut self.mapping {
            out.push(&mut m.weight);
            out.push(&mut m.bias);
        }
        out.push(&mut self.input_proj.weight);
        out.push(&mut self.input_proj.bias);
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
            out.push(&mut c.affine.weight);
            out.push(&mut c.affine.bias);
            out.push(&mut c.noise_strength);
        }
        for r in &mut self.to_rgb {
            out.push(&mut r.weight);
            out.push(&mut r.bias);
        }
        out
    }

    /// Rebuild parameters from arrays in canonical order, checking names and shapes.
    pub fn from_tensors(config: &GeneratorConfig, tensors: Vec<ParamTensor>) -> Result<Self> {
        config.validate()?;
        let mut params = Self::build(config, |name, shape, _| ParamTensor::zeros(name, shape));
        let slots = params.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::ShapeMismatch {
                what: "parameter count",
                expected: format!("{}", slots.len()),
                actual: format!("{}", tensors.len()),
            });
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.name != t.name || slot.shape != t.shape || t.data.len() != slot.data.len() {
                return Err(Error::ShapeMismatch {
                    what: "parameter layout",
                    expected: format!("{} {:?}", slot.name, slot.shape),
                    actual: format!("{} {:?}", t.name, t.shape),
                });
            }
            slot.data = t.data;
        }
        Ok(params)
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Round every value to the nearest `f32`.
    pub fn quantize(&mut self) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = round_f32(*v));
        }
    }

    /// `self += k · other`, elementwise over all arrays.
    pub fn add_scaled(&mut self, other: &GeneratorParams, k: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += k * y;
            }
        }
    }

    /// Set every injected-noise strength (all start at 0).
    pub fn set_noise_strength(&mut self, value: f64) {
        for c in &mut self.convs {
            c.noise_strength.data[0] = round_f32(value);
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zero,
    Const(f64),
    Normal(f64),
}
