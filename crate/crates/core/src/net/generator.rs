//! Forward synthesis and reverse-mode gradients of the pad-free generator.
//!
//! ```text
//! coords ─1×1─▶ conv₀ ─┬────────────────▶ to_rgb₀ ──────────────┐
//!                      └▶ ×2 ▶ conv ▶ conv ─┬▶ to_rgb₁ ─(+ skip)─┤ …
//!                                            └▶ ×2 ▶ …            ▼
//!                                               trim margins ▶ tanh
//! ```
//!
//! Each modulated conv adds `strength·noise`, then the bias, then a leaky
//! ReLU. The RGB skip is upsampled ×2 and trimmed by two pixels per side to
//! line up with the level's features.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::field::{ImagePatch, SampleSpec};
use crate::net::modconv::{modulated_valid_conv, modulated_valid_conv_backward, ModConvCache};
use crate::net::noise::{noise_for_grid, NoisePolicy};
use crate::net::params::{GeneratorParams, PointConv};
use crate::net::plan::{plan_shapes, ShapePlan};
use crate::posgrid::EncodingGrid;
use crate::resample::{bilinear_resize, bilinear_resize_adjoint};
use crate::rng::normal_at;
use crate::tensor::{
    add_bias, channel_sums, conv2d_valid, conv2d_valid_backward, leaky_relu, leaky_relu_backward, ConvShape, Tensor,
    LEAKY_SLOPE,
};
use crate::{Error, Result};

/// Per-layer style source vectors (one latent per modulated conv): the W+ space.
pub type Styles = Vec<Vec<f64>>;

const LATENT_TAG: u64 = 0x4c41_5445_4e54;

/// Standard-normal latent keyed by `seed`.
pub fn latent_from_seed(seed: u64, dim: usize) -> Vec<f64> {
    (0..dim).map(|i| normal_at(&[LATENT_TAG, seed, i as u64])).collect()
}

#[derive(Debug, Clone)]
pub struct MappingTrace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Map a latent through second-moment normalization and the dense stack.
pub fn map_latent(params: &GeneratorParams, z: &[f64]) -> (Vec<f64>, MappingTrace) {
    let rms = libm::sqrt(z.iter().map(|v| v * v).sum::<f64>() / z.len().max(1) as f64 + 1e-8);
    let mut x: Vec<f64> = z.iter().map(|v| v / rms).collect();
    let mut trace = MappingTrace { inputs: Vec::new(), pre: Vec::new() };
    for layer in &params.mapping {
        let pre = layer.forward(&x);
        trace.inputs.push(x);
        x = pre.iter().map(|&v| if v >= 0.0 { v } else { v * LEAKY_SLOPE }).collect();
        trace.pre.push(pre);
    }
    (x, trace)
}

/// Accumulates mapping-network gradients given the gradient of its output.
pub fn mapping_backward(params: &GeneratorParams, trace: &MappingTrace, grad_w: &[f64], grads: &mut GeneratorParams) {
    let mut g = grad_w.to_vec();
    for k in (0..params.mapping.len()).rev() {
        for (gv, &p) in g.iter_mut().zip(&trace.pre[k]) {
            if p < 0.0 {
                *gv *= LEAKY_SLOPE;
            }
        }
        g = params.mapping[k].backward(&trace.inputs[k], &g, &mut grads.mapping[k]);
    }
}

/// Same latent for every layer.
pub fn broadcast_styles(params: &GeneratorParams, w: &[f64]) -> Styles {
    vec![w.to_vec(); params.config.style_layers()]
}

/// Per-axis shape plans for a grid.
pub fn grid_plans(params: &GeneratorParams, grid: &EncodingGrid) -> Result<[ShapePlan; 2]> {
    if grid.n_pad != params.config.n_pad {
        return Err(Error::ShapeMismatch {
            what: "grid n_pad",
            expected: format!("{}", params.config.n_pad),
            actual: format!("{}", grid.n_pad),
        });
    }
    let [nx, ny] = grid.interior();
    let levels = params.config.levels();
    Ok([plan_shapes(nx, grid.n_pad, levels)?, plan_shapes(ny, grid.n_pad, levels)?])
}

/// Spec of the image a grid renders: same region, `2^L` times finer.
pub fn output_spec(params: &GeneratorParams, grid: &EncodingGrid) -> SampleSpec {
    let f = (1usize << params.config.levels()) as f64;
    SampleSpec {
        center: grid.spec.center,
        scale: [grid.spec.scale[0] / f, grid.spec.scale[1] / f],
        resolution: [grid.spec.resolution[0] << params.config.levels(), grid.spec.resolution[1] << params.config.levels()],
    }
}

fn point_conv(x: &Tensor, p: &PointConv) -> Result<Tensor> {
    let shape = ConvShape { out_ch: p.weight.shape[0], in_ch: p.weight.shape[1], kernel: 1, stride: 1 };
    let mut y = conv2d_valid(x, &p.weight.data, shape)?;
    add_bias(&mut y, &p.bias.data);
    Ok(y)
}

fn point_conv_backward(x: &Tensor, p: &PointConv, g: &Tensor, grads: &mut PointConv) -> Tensor {
    let shape = ConvShape { out_ch: p.weight.shape[0], in_ch: p.weight.shape[1], kernel: 1, stride: 1 };
    let (gx, gw) = conv2d_valid_backward(x, &p.weight.data, shape, g);
    for (a, b) in grads.weight.data.iter_mut().zip(gw) {
        *a += b;
    }
    for (a, b) in grads.bias.data.iter_mut().zip(channel_sums(g)) {
        *a += b;
    }
    gx
}

fn upsample2(x: &Tensor) -> Tensor {
    bilinear_resize(x, 2 * x.height, 2 * x.width)
}

fn upsample2_adjoint(g: &Tensor) -> Tensor {
    bilinear_resize_adjoint(g, g.height / 2, g.width / 2)
}

#[derive(Debug, Clone)]
struct LayerTrace {
    latent: Vec<f64>,
    conv: ModConvCache,
    noise: Tensor,
    pre: Tensor,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct SynthTrace {
    coords: Tensor,
    layers: Vec<LayerTrace>,
    /// Features entering each `to_rgb` (the output of every level).
    level_features: Vec<Tensor>,
    margin: [usize; 2],
    /// Final image after `tanh`, `(3, H, W)`.
    pub output: Tensor,
}

impl SynthTrace {
    /// Intermediate maps for debugging dumps: every level output plus the image.
    pub fn feature_maps(&self) -> Vec<(alloc::string::String, &Tensor)> {
        let mut out: Vec<_> = self.level_features.iter().enumerate().map(|(l, t)| (format!("level{l}"), t)).collect();
        out.push(("output".into(), &self.output));
        out
    }
}

fn coords_tensor(grid: &EncodingGrid) -> Tensor {
    let [gw, gh] = grid.padded();
    let mut t = Tensor::zeros(2, gh, gw);
    for (idx, c) in grid.coords.iter().enumerate() {
        t.data[idx] = c[0];
        t.data[gw * gh + idx] = c[1];
    }
    t
}

fn mod_layer(params: &GeneratorParams, k: usize, x: &Tensor, latent: &[f64], noise: &Tensor) -> Result<(Tensor, LayerTrace)> {
    let p = &params.convs[k];
    let style = p.affine.forward(latent);
    let (mut y, cache) = modulated_valid_conv(x, &p.weight.data, p.out_ch(), 3, &style, true)?;
    if [noise.height, noise.width] != [y.height, y.width] {
        return Err(Error::ShapeMismatch {
            what: "noise map",
            expected: format!("{}x{}", y.height, y.width),
            actual: format!("{}x{}", noise.height, noise.width),
        });
    }
    let strength = p.noise_strength.data[0];
    if strength != 0.0 {
        let n = y.height * y.width;
        for c in 0..y.channels {
            for (v, &z) in y.data[c * n..(c + 1) * n].iter_mut().zip(&noise.data) {
                *v += strength * z;
            }
        }
    }
    add_bias(&mut y, &p.bias.data);
    let out = leaky_relu(&y);
    Ok((out, LayerTrace { latent: latent.to_vec(), conv: cache, noise: noise.clone(), pre: y }))
}

/// Returns the input gradient; accumulates parameter gradients and the
/// gradient of the layer's latent.
fn mod_layer_backward(
    params: &GeneratorParams,
    k: usize,
    trace: &LayerTrace,
    grad: &Tensor,
    grads: &mut GeneratorParams,
    grad_latent: &mut [f64],
) -> Tensor {
    let p = &params.convs[k];
    let g_pre = leaky_relu_backward(&trace.pre, grad);
    let gp = &mut grads.convs[k];
    for (a, b) in gp.bias.data.iter_mut().zip(channel_sums(&g_pre)) {
        *a += b;
    }
    let n = g_pre.height * g_pre.width;
    let mut g_strength = 0.0;
    for c in 0..g_pre.channels {
        g_strength += g_pre.data[c * n..(c + 1) * n].iter().zip(&trace.noise.data).map(|(g, z)| g * z).sum::<f64>();
    }
    gp.noise_strength.data[0] += g_strength;
    let (gx, gw, gs) = modulated_valid_conv_backward(&trace.conv, &p.weight.data, &g_pre);
    for (a, b) in gp.weight.data.iter_mut().zip(gw) {
        *a += b;
    }
    let g_lat = p.affine.backward(&trace.latent, &gs, &mut gp.affine);
    for (a, b) in grad_latent.iter_mut().zip(g_lat) {
        *a += b;
    }
    gx
}

/// Render with explicit per-layer latents and noise maps.
pub fn synthesize(
    params: &GeneratorParams,
    styles: &[Vec<f64>],
    grid: &EncodingGrid,
    noise: &[Tensor],
) -> Result<SynthTrace> {
    let cfg = &params.config;
    if styles.len() != cfg.style_layers() || styles.iter().any(|s| s.len() != cfg.latent_dim) {
        return Err(Error::ShapeMismatch {
            what: "styles",
            expected: format!("{} x {}", cfg.style_layers(), cfg.latent_dim),
            actual: format!("{} x {}", styles.len(), styles.first().map_or(0, |s| s.len())),
        });
    }
    if noise.len() != cfg.style_layers() {
        return Err(Error::ShapeMismatch {
            what: "noise maps",
            expected: format!("{}", cfg.style_layers()),
            actual: format!("{}", noise.len()),
        });
    }
    let [plan_x, plan_y] = grid_plans(params, grid)?;
    let levels = cfg.levels();

    let coords = coords_tensor(grid);
    let x = point_conv(&coords, &params.input_proj)?;
    let mut layers = Vec::with_capacity(cfg.style_layers());
    let mut level_features = Vec::with_capacity(levels + 1);

    let (mut h, t) = mod_layer(params, 0, &x, &styles[0], &noise[0])?;
    layers.push(t);
    let mut rgb = point_conv(&h, &params.to_rgb[0])?;
    level_features.push(h.clone());
    for l in 1..=levels {
        let up = upsample2(&h);
        let (a, t) = mod_layer(params, 2 * l - 1, &up, &styles[2 * l - 1], &noise[2 * l - 1])?;
        layers.push(t);
        let (b, t) = mod_layer(params, 2 * l, &a, &styles[2 * l], &noise[2 * l])?;
        layers.push(t);
        h = b;
        let skip = upsample2(&rgb).crop(2, 2, 2, 2);
        rgb = point_conv(&h, &params.to_rgb[l])?;
        rgb.add_assign(&skip);
        level_features.push(h.clone());
    }
    debug_assert_eq!([h.width, h.height], [plan_x.per_level_size[levels], plan_y.per_level_size[levels]]);
    let margin = [plan_x.margin(levels), plan_y.margin(levels)];
    let output = rgb.crop(margin[1], margin[1], margin[0], margin[0]).map(libm::tanh);
    Ok(SynthTrace { coords, layers, level_features, margin, output })
}

/// Gradients of a scalar loss given `d loss / d output`. Parameter gradients
/// are accumulated into `grads`; returns the per-layer latent gradients.
pub fn synthesize_backward(
    params: &GeneratorParams,
    trace: &SynthTrace,
    grad_out: &Tensor,
    grads: &mut GeneratorParams,
) -> Styles {
    let cfg = &params.config;
    let levels = cfg.levels();
    let mut grad_styles = vec![vec![0.0; cfg.latent_dim]; cfg.style_layers()];

    let g_pre = Tensor {
        data: grad_out.data.iter().zip(&trace.output.data).map(|(g, y)| g * (1.0 - y * y)).collect(),
        ..*grad_out
    };
    let [mx, my] = trace.margin;
    let mut g_rgb = g_pre.uncrop(my, my, mx, mx);
    let mut g_from_above: Option<Tensor> = None;
    for l in (0..=levels).rev() {
        let mut g_h = point_conv_backward(&trace.level_features[l], &params.to_rgb[l], &g_rgb, &mut grads.to_rgb[l]);
        if let Some(g) = g_from_above.take() {
            g_h.add_assign(&g);
        }
        if l == 0 {
            let g_x = mod_layer_backward(params, 0, &trace.layers[0], &g_h, grads, &mut grad_styles[0]);
            let proj_in = &trace.coords;
            point_conv_backward(proj_in, &params.input_proj, &g_x, &mut grads.input_proj);
        } else {
            let g_a = mod_layer_backward(params, 2 * l, &trace.layers[2 * l], &g_h, grads, &mut grad_styles[2 * l]);
            let g_up = mod_layer_backward(params, 2 * l - 1, &trace.layers[2 * l - 1], &g_a, grads, &mut grad_styles[2 * l - 1]);
            g_from_above = Some(upsample2_adjoint(&g_up));
            g_rgb = upsample2_adjoint(&g_rgb.uncrop(2, 2, 2, 2));
        }
    }
    grad_styles
}

/// Render one image from a latent: `I = G(z, grid)`.
pub fn generate(params: &GeneratorParams, z: &[f64], grid: &EncodingGrid, noise: &NoisePolicy) -> Result<ImagePatch> {
    if z.len() != params.config.latent_dim {
        return Err(Error::ShapeMismatch {
            what: "latent",
            expected: format!("{}", params.config.latent_dim),
            actual: format!("{}", z.len()),
        });
    }
    let (w, _) = map_latent(params, z);
    generate_with_styles(params, &broadcast_styles(params, &w), grid, noise)
}

pub fn generate_with_styles(
    params: &GeneratorParams,
    styles: &[Vec<f64>],
    grid: &EncodingGrid,
    noise: &NoisePolicy,
) -> Result<ImagePatch> {
    grid_plans(params, grid)?;
    let maps = noise_for_grid(noise, &params.config, grid)?;
    let trace = synthesize(params, styles, grid, &maps)?;
    ImagePatch::from_tensor(&trace.output, output_spec(params, grid))
}

/// Mean mapped latent over `samples` draws, the usual starting point for
/// projection.
pub fn mean_latent(params: &GeneratorParams, samples: usize, seed: u64) -> Vec<f64> {
    let d = params.config.latent_dim;
    let mut acc = vec![0.0; d];
    for s in 0..samples {
        let z = latent_from_seed(crate::rng::hash_words(&[seed, s as u64]), d);
        let (w, _) = map_latent(params, &z);
        for (a, b) in acc.iter_mut().zip(w) {
            *a += b;
        }
    }
    acc.iter_mut().for_each(|v| *v /= samples.max(1) as f64);
    acc
}
