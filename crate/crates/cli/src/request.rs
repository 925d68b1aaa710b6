//! The generation request shared by the CLI and the HTTP service, and the
//! single code path that renders it.

use padfree_core::net::generator::{broadcast_styles, grid_plans, output_spec, SynthTrace};
use padfree_core::net::noise::noise_for_grid;
use padfree_core::net::stitch::grid_for_output;
use padfree_core::net::{latent_from_seed, map_latent, synthesize, GeneratorParams, NoiseKind, NoisePolicy, ShapePlan};
use padfree_core::posgrid::{apply_transform, grid_period, Axis};
use padfree_core::{EncodingGrid, Error, GeoTransform, ImagePatch, SampleSpec, FULL_FRAME_EXTENT};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_MAX_RESOLUTION: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRequest {
    pub kind: NoiseKind,
    #[serde(default)]
    pub base_seed: u64,
}

impl Default for NoiseRequest {
    fn default() -> Self {
        NoiseRequest { kind: NoiseKind::GridSample, base_seed: 0 }
    }
}

fn default_n_pad() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub latent_seed: u64,
    #[serde(default)]
    pub center: [f64; 2],
    /// Continuous-space distance per output pixel; the full frame fits the
    /// image when absent.
    #[serde(default)]
    pub scale: Option<f64>,
    pub resolution: usize,
    #[serde(default = "default_n_pad")]
    pub n_pad: usize,
    #[serde(default)]
    pub transform: Option<GeoTransform>,
    #[serde(default)]
    pub noise: NoiseRequest,
}

impl GenerateRequest {
    pub fn new(latent_seed: u64, resolution: usize) -> Self {
        GenerateRequest {
            latent_seed,
            center: [0.0, 0.0],
            scale: None,
            resolution,
            n_pad: default_n_pad(),
            transform: None,
            noise: NoiseRequest::default(),
        }
    }

    pub fn output_spec(&self) -> SampleSpec {
        let s = self.scale.unwrap_or(FULL_FRAME_EXTENT / self.resolution.max(1) as f64);
        SampleSpec { center: self.center, scale: [s, s], resolution: [self.resolution, self.resolution] }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestError {
    #[error("resolution {resolution} exceeds the configured maximum {max}")]
    TooLarge { resolution: usize, max: usize },
    #[error(transparent)]
    Core(#[from] Error),
}

impl From<RequestError> for CliError {
    fn from(e: RequestError) -> Self {
        match e {
            RequestError::TooLarge { .. } => CliError::input("resolution", e.to_string()),
            RequestError::Core(c) => CliError::Core(c),
        }
    }
}

/// A request resolved against a generator: everything needed to render it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: GeneratorParams,
    pub output: SampleSpec,
    pub grid: EncodingGrid,
    pub plans: [ShapePlan; 2],
    pub noise: NoisePolicy,
}

/// The generator with its padding overridden; padding only sizes the grid,
/// the weights do not depend on it.
pub fn with_n_pad(params: &GeneratorParams, n_pad: usize) -> GeneratorParams {
    let mut p = params.clone();
    p.config.n_pad = n_pad;
    p
}

pub fn resolve(params: &GeneratorParams, req: &GenerateRequest, max_resolution: usize) -> Result<Resolved, RequestError> {
    if req.resolution > max_resolution {
        return Err(RequestError::TooLarge { resolution: req.resolution, max: max_resolution });
    }
    let params = with_n_pad(params, req.n_pad);
    let output = req.output_spec();
    let mut grid = grid_for_output(&params, &output)?;
    if let Some(t) = &req.transform {
        grid = apply_transform(&grid, t)?;
    }
    let plans = grid_plans(&params, &grid)?;
    let noise = match req.noise.kind {
        NoiseKind::Random => NoisePolicy::random(req.noise.base_seed),
        kind => NoisePolicy { kind, base_seed: req.noise.base_seed, base_spec: Some(output) },
    };
    Ok(Resolved { output: output_spec(&params, &grid), params, grid, plans, noise })
}

pub struct Rendered {
    pub resolved: Resolved,
    pub patch: ImagePatch,
    pub trace: SynthTrace,
}

pub fn render(params: &GeneratorParams, req: &GenerateRequest, max_resolution: usize) -> Result<Rendered, RequestError> {
    let resolved = resolve(params, req, max_resolution)?;
    let p = &resolved.params;
    let (w, _) = map_latent(p, &latent_from_seed(req.latent_seed, p.config.latent_dim));
    let maps = noise_for_grid(&resolved.noise, &p.config, &resolved.grid)?;
    let trace = synthesize(p, &broadcast_styles(p, &w), &resolved.grid, &maps)?;
    let patch = ImagePatch::from_tensor(&trace.output, resolved.output)?;
    Ok(Rendered { resolved, patch, trace })
}

/// What the sidecar of a rendering records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub request: GenerateRequest,
    pub spec: SampleSpec,
    /// `None` when the grid spacing is not uniform (e.g. warped).
    pub grid_period: Option<[f64; 2]>,
    pub shape_plan: [ShapePlan; 2],
    pub grid: EncodingGrid,
}

impl Sidecar {
    pub fn new(req: &GenerateRequest, r: &Resolved) -> Self {
        Sidecar {
            request: req.clone(),
            spec: r.output,
            grid_period: grid_period(&r.grid).ok(),
            shape_plan: r.plans.clone(),
            grid: r.grid.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoints {
    pub interior_points: Vec<[f64; 2]>,
    pub padding_points: Vec<[f64; 2]>,
    pub period: Option<[f64; 2]>,
}

/// Interior and padding positions of the request's input grid.
pub fn grid_points(params: &GeneratorParams, req: &GenerateRequest, max_resolution: usize) -> Result<GridPoints, RequestError> {
    let r = resolve(params, req, max_resolution)?;
    let (interior_points, padding_points) = r.grid.split_points();
    Ok(GridPoints { interior_points, padding_points, period: grid_period(&r.grid).ok() })
}

/// Parses `shift dx dy`, `rescale f [fy]`, `aspect r`, `warp amp freq x|y`,
/// `extrapolate m`, or the JSON form.
pub fn parse_transform(s: &str) -> CliResult<GeoTransform> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s).map_err(|e| CliError::input("transform", e.to_string()));
    }
    let words: Vec<&str> = s.split_whitespace().collect();
    let bad = |msg: &str| CliError::input("transform", format!("{msg} in {s:?}"));
    let num = |i: usize| -> CliResult<f64> {
        words.get(i).ok_or_else(|| bad("missing argument"))?.parse::<f64>().map_err(|_| bad("not a number"))
    };
    let t = match words.first().copied() {
        Some("shift") if words.len() == 3 => GeoTransform::Shift { delta: [num(1)?, num(2)?] },
        Some("rescale") if words.len() == 2 => GeoTransform::Rescale { factor: [num(1)?, num(1)?] },
        Some("rescale") if words.len() == 3 => GeoTransform::Rescale { factor: [num(1)?, num(2)?] },
        Some("aspect") if words.len() == 2 => GeoTransform::Aspect { ratio: num(1)? },
        Some("warp") if words.len() == 4 => {
            let axis = match words[3] {
                "x" => Axis::X,
                "y" => Axis::Y,
                _ => return Err(bad("axis must be x or y")),
            };
            GeoTransform::Warp { amplitude: num(1)?, frequency: num(2)?, axis }
        }
        Some("extrapolate") if words.len() == 2 => {
            GeoTransform::Extrapolate { margin: words[1].parse().map_err(|_| bad("margin must be a whole number"))? }
        }
        _ => return Err(bad("unknown transform")),
    };
    t.validate()?;
    Ok(t)
}
