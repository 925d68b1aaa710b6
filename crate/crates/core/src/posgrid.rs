//! Positional-encoding grids.
//!
//! A grid holds the continuous-space coordinate of every input position of
//! the generator, including `n_pad` rows/columns of positional padding on
//! each side. In [`GridMode::Centered`] mode position `(i, j)` points at the
//! center of the area it produces, so the period is `(w/n, h/n)` and doubling
//! the resolution exactly halves it. [`GridMode::AlignedCorners`] pins the
//! outermost interior positions to the frame corners instead; it exists only
//! as the contrast case whose period `(w/(n−1), h/(n−1))` breaks doubling.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::field::SampleSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Centered,
    AlignedCorners,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeoTransform {
    Shift { delta: [f64; 2] },
    /// Multiplies coordinate offsets from the grid center; `< 1` zooms in.
    Rescale { factor: [f64; 2] },
    /// Rescales x offsets only.
    Aspect { ratio: f64 },
    /// Displaces the coordinate orthogonal to `axis` by
    /// `amplitude·sin(2π·frequency·t)`, where `t` is the coordinate along `axis`.
    Warp { amplitude: f64, frequency: f64, axis: Axis },
    /// Widens the described area by `margin` periods on every side.
    Extrapolate { margin: usize },
}

impl GeoTransform {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GeoTransform::Shift { delta } if !delta.iter().all(|d| d.is_finite()) => {
                Err(Error::invalid("shift delta must be finite"))
            }
            GeoTransform::Rescale { factor } if !factor.iter().all(|f| *f > 0.0 && f.is_finite()) => {
                Err(Error::invalid(format!("rescale factors must be > 0, got {factor:?}")))
            }
            GeoTransform::Aspect { ratio } if !(ratio > 0.0 && ratio.is_finite()) => {
                Err(Error::invalid(format!("aspect ratio must be > 0, got {ratio}")))
            }
            GeoTransform::Warp { amplitude, frequency, .. }
                if !(amplitude >= 0.0 && amplitude.is_finite() && frequency.is_finite()) =>
            {
                Err(Error::invalid(format!("warp amplitude must be >= 0, got {amplitude}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingGrid {
    /// Effective sampling tuple of the interior after affine transforms.
    pub spec: SampleSpec,
    pub n_pad: usize,
    pub mode: GridMode,
    /// Row-major, y-outer; `(n_y + 2·n_pad) × (n_x + 2·n_pad)` entries.
    pub coords: Vec<[f64; 2]>,
    /// Spec the grid was built from, before any transform.
    base: SampleSpec,
    /// Point transforms applied so far, replayed whenever the index range changes.
    history: Vec<GeoTransform>,
}

/// Continuous coordinates of padded index `(i, j)` of a Centered grid.
#[inline]
fn centered_point(spec: &SampleSpec, n_pad: usize, i: usize, j: usize) -> [f64; 2] {
    let p = n_pad as f64;
    [spec.pixel_x(i as f64 - p), spec.pixel_y(j as f64 - p)]
}

pub fn build_grid(spec: &SampleSpec, n_pad: usize, mode: GridMode) -> Result<EncodingGrid> {
    spec.validate()?;
    let [nx, ny] = spec.resolution;
    let (gw, gh) = (nx + 2 * n_pad, ny + 2 * n_pad);
    let mut coords = Vec::with_capacity(gw * gh);
    match mode {
        GridMode::Centered => {
            for j in 0..gh {
                for i in 0..gw {
                    coords.push(centered_point(spec, n_pad, i, j));
                }
            }
        }
        GridMode::AlignedCorners => {
            if nx < 2 || ny < 2 {
                return Err(Error::invalid(format!(
                    "aligned-corner grids need at least 2 positions per axis, got {nx}x{ny}"
                )));
            }
            let [w, h] = spec.extent();
            let (dx, dy) = (w / (nx - 1) as f64, h / (ny - 1) as f64);
            let p = n_pad as f64;
            for j in 0..gh {
                for i in 0..gw {
                    coords.push([
                        spec.center[0] - w / 2.0 + dx * (i as f64 - p),
                        spec.center[1] - h / 2.0 + dy * (j as f64 - p),
                    ]);
                }
            }
        }
    }
    Ok(EncodingGrid { spec: *spec, n_pad, mode, coords, base: *spec, history: Vec::new() })
}

impl EncodingGrid {
    /// Interior size `(n_x, n_y)`.
    pub fn interior(&self) -> [usize; 2] {
        self.spec.resolution
    }

    /// Padded size `(width, height)`.
    pub fn padded(&self) -> [usize; 2] {
        [self.spec.resolution[0] + 2 * self.n_pad, self.spec.resolution[1] + 2 * self.n_pad]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        self.coords[j * self.padded()[0] + i]
    }

    /// Coordinate at a fractional padded index, bilinear inside the grid and
    /// linearly extrapolated outside. Exact for affine grids.
    pub fn coord_at(&self, fi: f64, fj: f64) -> [f64; 2] {
        let [gw, gh] = self.padded();
        let base = |f: f64, n: usize| -> (usize, f64) {
            if n < 2 {
                return (0, 0.0);
            }
            let i0 = libm::floor(f).clamp(0.0, (n - 2) as f64);
            (i0 as usize, f - i0)
        };
        let (i0, tx) = base(fi, gw);
        let (j0, ty) = base(fj, gh);
        let i1 = (i0 + 1).min(gw - 1);
        let j1 = (j0 + 1).min(gh - 1);
        let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t];
        let top = lerp(self.at(i0, j0), self.at(i1, j0), tx);
        let bottom = lerp(self.at(i0, j1), self.at(i1, j1), tx);
        lerp(top, bottom, ty)
    }

    /// Interior positions (the generated area) and padding positions.
    pub fn split_points(&self) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let [gw, gh] = self.padded();
        let p = self.n_pad;
        let mut interior = Vec::new();
        let mut padding = Vec::new();
        for j in 0..gh {
            for i in 0..gw {
                let inside = i >= p && i < gw - p && j >= p && j < gh - p;
                if inside {
                    interior.push(self.at(i, j));
                } else {
                    padding.push(self.at(i, j));
                }
            }
        }
        (interior, padding)
    }

    pub fn is_transformed(&self) -> bool {
        !self.history.is_empty()
    }
}

/// Constant nearest-neighbour spacing of the interior, or an error if the
/// spacing is not uniform to within `1e-9`.
pub fn grid_period(grid: &EncodingGrid) -> Result<[f64; 2]> {
    let [nx, ny] = grid.interior();
    if nx < 2 || ny < 2 {
        return Err(Error::invalid(format!("period needs >= 2 interior points per axis, got {nx}x{ny}")));
    }
    let p = grid.n_pad;
    let dx = grid.at(p + 1, p)[0] - grid.at(p, p)[0];
    let dy = grid.at(p, p + 1)[1] - grid.at(p, p)[1];
    let mut dev_x = 0.0f64;
    let mut dev_y = 0.0f64;
    for j in p..p + ny {
        for i in p..p + nx {
            let here = grid.at(i, j);
            if i + 1 < p + nx {
                let next = grid.at(i + 1, j);
                dev_x = dev_x.max((next[0] - here[0] - dx).abs());
                dev_y = dev_y.max((next[1] - here[1]).abs());
            }
            if j + 1 < p + ny {
                let next = grid.at(i, j + 1);
                dev_y = dev_y.max((next[1] - here[1] - dy).abs());
                dev_x = dev_x.max((next[0] - here[0]).abs());
            }
        }
    }
    const TOL: f64 = 1e-9;
    if dev_x > TOL {
        return Err(Error::NonUniformPeriod { axis: 'x', deviation: dev_x });
    }
    if dev_y > TOL {
        return Err(Error::NonUniformPeriod { axis: 'y', deviation: dev_y });
    }
    Ok([dx, dy])
}

fn transform_point(t: &GeoTransform, center: [f64; 2], pt: [f64; 2]) -> [f64; 2] {
    match *t {
        GeoTransform::Shift { delta } => [pt[0] + delta[0], pt[1] + delta[1]],
        GeoTransform::Rescale { factor } => {
            [center[0] + (pt[0] - center[0]) * factor[0], center[1] + (pt[1] - center[1]) * factor[1]]
        }
        GeoTransform::Aspect { ratio } => [center[0] + (pt[0] - center[0]) * ratio, pt[1]],
        GeoTransform::Warp { amplitude, frequency, axis } => {
            if amplitude == 0.0 {
                return pt;
            }
            match axis {
                Axis::X => [pt[0], pt[1] + amplitude * libm::sin(TAU * frequency * pt[0])],
                Axis::Y => [pt[0] + amplitude * libm::sin(TAU * frequency * pt[1]), pt[1]],
            }
        }
        GeoTransform::Extrapolate { .. } => pt,
    }
}

fn transform_spec(t: &GeoTransform, spec: &SampleSpec) -> SampleSpec {
    match *t {
        GeoTransform::Shift { delta } => {
            SampleSpec { center: [spec.center[0] + delta[0], spec.center[1] + delta[1]], ..*spec }
        }
        GeoTransform::Rescale { factor } => {
            SampleSpec { scale: [spec.scale[0] * factor[0], spec.scale[1] * factor[1]], ..*spec }
        }
        GeoTransform::Aspect { ratio } => SampleSpec { scale: [spec.scale[0] * ratio, spec.scale[1]], ..*spec },
        GeoTransform::Warp { .. } => *spec,
        GeoTransform::Extrapolate { margin } => SampleSpec {
            resolution: [spec.resolution[0] + 2 * margin, spec.resolution[1] + 2 * margin],
            ..*spec
        },
    }
}

pub fn apply_transform(grid: &EncodingGrid, t: &GeoTransform) -> Result<EncodingGrid> {
    if grid.mode != GridMode::Centered {
        return Err(Error::UnsupportedMode(format!("{:?} grids cannot be transformed", grid.mode)));
    }
    t.validate()?;
    let mut out = grid.clone();
    match *t {
        GeoTransform::Extrapolate { margin } => {
            if margin == 0 {
                return Ok(out);
            }
            out.base = transform_spec(t, &grid.base);
            out.spec = transform_spec(t, &grid.spec);
            let [gw, gh] = out.padded();
            out.coords.clear();
            for j in 0..gh {
                for i in 0..gw {
                    let mut pt = centered_point(&out.base, out.n_pad, i, j);
                    let mut spec = out.base;
                    for h in &out.history {
                        pt = transform_point(h, spec.center, pt);
                        spec = transform_spec(h, &spec);
                    }
                    out.coords.push(pt);
                }
            }
        }
        _ => {
            let center = grid.spec.center;
            for c in &mut out.coords {
                *c = transform_point(t, center, *c);
            }
            out.spec = transform_spec(t, &grid.spec);
            out.history.push(*t);
        }
    }
    Ok(out)
}

/// Tile specs covering `full_spec` with at least `overlap` pixels of overlap
/// between neighbours. See [`tile_layout_aligned`].
pub fn tile_layout(full_spec: &SampleSpec, tile_res: [usize; 2], overlap: usize) -> Result<Vec<SampleSpec>> {
    tile_layout_aligned(full_spec, tile_res, overlap, 1)
}

/// Like [`tile_layout`], with every tile offset (in full-frame pixels) a
/// multiple of `quantum`. A generator with `L` upsampling levels reproduces
/// crops of a frame exactly only when tiles start on multiples of `2^L`.
///
/// Tiles share the full frame's scale and pixel lattice; the returned list is
/// row-major (y outer). The last tile on each axis ends at the frame edge, so
/// actual overlaps may exceed the requested minimum.
pub fn tile_layout_aligned(
    full_spec: &SampleSpec,
    tile_res: [usize; 2],
    overlap: usize,
    quantum: usize,
) -> Result<Vec<SampleSpec>> {
    full_spec.validate()?;
    if quantum == 0 {
        return Err(Error::Layout("alignment quantum must be >= 1".into()));
    }
    let offsets_x = axis_offsets(full_spec.resolution[0], tile_res[0], overlap, quantum, 'x')?;
    let offsets_y = axis_offsets(full_spec.resolution[1], tile_res[1], overlap, quantum, 'y')?;
    let [x0, _, y0, _] = full_spec.bounds();
    let mut tiles = Vec::with_capacity(offsets_x.len() * offsets_y.len());
    for &oy in &offsets_y {
        for &ox in &offsets_x {
            let center = [
                x0 + full_spec.scale[0] * (ox as f64 + tile_res[0] as f64 / 2.0),
                y0 + full_spec.scale[1] * (oy as f64 + tile_res[1] as f64 / 2.0),
            ];
            tiles.push(SampleSpec { center, scale: full_spec.scale, resolution: tile_res });
        }
    }
    Ok(tiles)
}

/// Pixel offsets of tiles along one axis.
pub fn axis_offsets(full: usize, tile: usize, overlap: usize, quantum: usize, axis: char) -> Result<Vec<usize>> {
    if tile == 0 || tile > full {
        return Err(Error::Layout(format!("tile size {tile} along {axis} must be in [1, {full}]")));
    }
    if tile == full {
        return Ok(alloc::vec![0]);
    }
    if overlap >= tile {
        return Err(Error::Layout(format!("overlap {overlap} must be smaller than tile size {tile} along {axis}")));
    }
    let span = full - tile;
    if span % quantum != 0 {
        return Err(Error::Layout(format!(
            "frame {full} minus tile {tile} along {axis} is not a multiple of the alignment quantum {quantum}"
        )));
    }
    let stride = tile - overlap;
    let mut count = span.div_ceil(stride) + 1;
    loop {
        let slots = span / quantum;
        if count - 1 > slots {
            return Err(Error::Layout(format!(
                "cannot place {count} tiles of {tile} along {axis} on a {quantum}-pixel lattice with overlap {overlap}"
            )));
        }
        // Evenly spread offsets, rounded to the lattice.
        let offsets: Vec<usize> = (0..count)
            .map(|k| {
                let ideal = k as f64 * slots as f64 / (count - 1) as f64;
                (libm::round(ideal) as usize) * quantum
            })
            .collect();
        if offsets.windows(2).all(|w| w[1] - w[0] <= stride && w[1] > w[0]) {
            return Ok(offsets);
        }
        count += 1;
    }
}
