//! Injected-noise policies.
//!
//! - `Random`: every layer of every rendering draws its own values.
//! - `Constant`: one noise map per layer is drawn at the base (largest) scale
//!   and naively resized to whatever level shape is requested.
//! - `GridSample`: the same base maps, but looked up by position. Every
//!   intermediate pixel has a known continuous-space location (the encoding
//!   grid pushed through the upsampling/cropping bookkeeping), and the base
//!   map is bilinearly sampled there, so coincident positions at different
//!   scales or in different tiles see identical noise.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::field::SampleSpec;
use crate::net::params::GeneratorConfig;
use crate::net::plan::plan_shapes;
use crate::posgrid::{build_grid, EncodingGrid, GridMode};
use crate::resample::{bilinear_resize, sample_point};
use crate::rng::normal_at;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Random,
    Constant,
    GridSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePolicy {
    pub kind: NoiseKind,
    pub base_seed: u64,
    /// Largest-scale reference rendering for `Constant` / `GridSample`.
    pub base_spec: Option<SampleSpec>,
}

impl NoisePolicy {
    pub fn random(seed: u64) -> Self {
        NoisePolicy { kind: NoiseKind::Random, base_seed: seed, base_spec: None }
    }

    pub fn constant(seed: u64, base_spec: SampleSpec) -> Self {
        NoisePolicy { kind: NoiseKind::Constant, base_seed: seed, base_spec: Some(base_spec) }
    }

    pub fn grid_sample(seed: u64, base_spec: SampleSpec) -> Self {
        NoisePolicy { kind: NoiseKind::GridSample, base_seed: seed, base_spec: Some(base_spec) }
    }

    pub fn with_kind(&self, kind: NoiseKind) -> Self {
        NoisePolicy { kind, ..*self }
    }
}

/// Position of level-`level` pixel `j` in fractional padded-input indices is
/// `a·j + b`. Level 0 pixel `j` sits over input `j + 1`; each level maps
/// pixel `j` to upsampled pixel `j + 2` (two valid convs), which lies at
/// `(j + 2.5)/2 − 0.5` on the previous level.
pub fn level_index_map(level: usize) -> (f64, f64) {
    let (mut a, mut b) = (1.0, 1.0);
    for _ in 0..level {
        b += a * 0.75;
        a *= 0.5;
    }
    (a, b)
}

/// Index map of the output of modulated convolution `layer`. The first conv
/// of a level produces a map one pixel wider per side than the level output.
pub fn layer_index_map(config: &GeneratorConfig, layer: usize) -> (f64, f64) {
    let (a, b) = level_index_map(config.layer_level(layer));
    if layer % 2 == 1 {
        (a, b - a)
    } else {
        (a, b)
    }
}

/// Continuous coordinates of every pixel of the output of `layer`,
/// row-major, for a map of `shape = (width, height)`.
pub fn layer_coords(grid: &EncodingGrid, config: &GeneratorConfig, layer: usize, shape: [usize; 2]) -> Vec<[f64; 2]> {
    let (a, b) = layer_index_map(config, layer);
    let mut out = Vec::with_capacity(shape[0] * shape[1]);
    for j in 0..shape[1] {
        for i in 0..shape[0] {
            out.push(grid.coord_at(a * i as f64 + b, a * j as f64 + b));
        }
    }
    out
}

/// Per-axis feature-map size `(width, height)` at `level` for a grid.
pub fn level_shape(grid: &EncodingGrid, config: &GeneratorConfig, level: usize) -> Result<[usize; 2]> {
    let [nx, ny] = grid.interior();
    let px = plan_shapes(nx, grid.n_pad, config.levels())?;
    let py = plan_shapes(ny, grid.n_pad, config.levels())?;
    Ok([px.per_level_size[level], py.per_level_size[level]])
}

/// Output shape `(width, height)` of modulated convolution `layer`.
pub fn layer_shape(grid: &EncodingGrid, config: &GeneratorConfig, layer: usize) -> Result<[usize; 2]> {
    let s = level_shape(grid, config, config.layer_level(layer))?;
    Ok(if layer % 2 == 1 { [s[0] + 2, s[1] + 2] } else { s })
}

fn random_map(seed: u64, layer: usize, shape: [usize; 2]) -> Tensor {
    let [w, h] = shape;
    let mut data = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            data.push(normal_at(&[seed, layer as u64, j as u64, i as u64]));
        }
    }
    Tensor::from_vec(1, h, w, data)
}

/// The base grid a `Constant` / `GridSample` policy draws its maps on.
fn base_grid(policy: &NoisePolicy, config: &GeneratorConfig) -> Result<EncodingGrid> {
    let base = policy
        .base_spec
        .ok_or_else(|| Error::InvalidPolicy(format!("{:?} noise needs a base_spec", policy.kind)))?;
    base.validate()?;
    let f = 1usize << config.levels();
    if base.resolution[0] % f != 0 || base.resolution[1] % f != 0 {
        return Err(Error::InvalidPolicy(format!(
            "base resolution {:?} is not a multiple of 2^L = {f}",
            base.resolution
        )));
    }
    let input_spec = SampleSpec {
        center: base.center,
        scale: [base.scale[0] * f as f64, base.scale[1] * f as f64],
        resolution: [base.resolution[0] / f, base.resolution[1] / f],
    };
    build_grid(&input_spec, config.n_pad, GridMode::Centered)
}

/// Noise map (one channel) for modulated convolution `layer` of a rendering
/// driven by `grid`, with feature-map shape `shape = (width, height)`.
pub fn sample_noise(
    policy: &NoisePolicy,
    config: &GeneratorConfig,
    layer: usize,
    grid: &EncodingGrid,
    shape: [usize; 2],
) -> Result<Tensor> {
    match policy.kind {
        NoiseKind::Random => Ok(random_map(policy.base_seed, layer, shape)),
        NoiseKind::Constant => {
            let base = base_grid(policy, config)?;
            let base_map = random_map(policy.base_seed, layer, layer_shape(&base, config, layer)?);
            Ok(bilinear_resize(&base_map, shape[1], shape[0]))
        }
        NoiseKind::GridSample => {
            let base = base_grid(policy, config)?;
            let f = 1usize << config.levels();
            let query_out = [grid.interior()[0] * f, grid.interior()[1] * f];
            let base_out = policy.base_spec.map(|s| s.resolution).unwrap_or_default();
            if query_out[0] > base_out[0] || query_out[1] > base_out[1] {
                return Err(Error::InvalidPolicy(format!(
                    "grid-sampled noise needs a base at least as large as the query: base {base_out:?}, query {query_out:?}"
                )));
            }
            let base_shape = layer_shape(&base, config, layer)?;
            let base_map = random_map(policy.base_seed, layer, base_shape);
            // The base lattice is affine: coordinate = origin + index·step.
            let (a, b) = layer_index_map(config, layer);
            let origin = base.coord_at(b, b);
            let next = base.coord_at(a + b, a + b);
            let step = [next[0] - origin[0], next[1] - origin[1]];
            let coords = layer_coords(grid, config, layer, shape);
            let data = coords
                .iter()
                .map(|&[x, y]| {
                    let px = (x - origin[0]) / step[0];
                    let py = (y - origin[1]) / step[1];
                    sample_point(&base_map.data, base_shape[1], base_shape[0], py, px)
                })
                .collect();
            Ok(Tensor::from_vec(1, shape[1], shape[0], data))
        }
    }
}

/// Noise maps for every modulated convolution of one rendering.
pub fn noise_for_grid(policy: &NoisePolicy, config: &GeneratorConfig, grid: &EncodingGrid) -> Result<Vec<Tensor>> {
    (0..config.style_layers())
        .map(|k| sample_noise(policy, config, k, grid, layer_shape(grid, config, k)?))
        .collect()
}
