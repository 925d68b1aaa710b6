//! Partial generation over tiles and reassembly into one frame.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::field::{ImagePatch, SampleSpec};
use crate::net::generator::generate;
use crate::net::noise::{NoiseKind, NoisePolicy};
use crate::net::params::GeneratorParams;
use crate::posgrid::{build_grid, EncodingGrid, GridMode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Stitched {
    pub image: ImagePatch,
    /// Largest disagreement between tiles on pixels covered more than once.
    pub overlap_max_diff: f64,
    /// Pixel offsets `(x, y)` of every tile in the full frame.
    pub offsets: Vec<[usize; 2]>,
}

/// Encoding grid whose rendering covers `output` exactly.
pub fn grid_for_output(params: &GeneratorParams, output: &SampleSpec) -> Result<EncodingGrid> {
    output.validate()?;
    let levels = params.config.levels();
    let f = 1usize << levels;
    for (axis, &r) in ['x', 'y'].iter().zip(&output.resolution) {
        if r % f != 0 {
            return Err(Error::ShapeUnderflow {
                level: levels,
                size: r as i64,
                detail: format!("resolution {r} along {axis} is not a multiple of 2^{levels} = {f}"),
            });
        }
    }
    let input = SampleSpec {
        center: output.center,
        scale: [output.scale[0] * f as f64, output.scale[1] * f as f64],
        resolution: [output.resolution[0] / f, output.resolution[1] / f],
    };
    build_grid(&input, params.config.n_pad, GridMode::Centered)
}

fn tile_offset(full: &SampleSpec, tile: &SampleSpec) -> Result<[usize; 2]> {
    let [fx0, _, fy0, _] = full.bounds();
    let [tx0, _, ty0, _] = tile.bounds();
    let mut out = [0usize; 2];
    for (k, (d, s)) in [(tx0 - fx0, full.scale[0]), (ty0 - fy0, full.scale[1])].into_iter().enumerate() {
        let px = d / s;
        let rounded = libm::round(px);
        if (px - rounded).abs() > 1e-6 || rounded < 0.0 {
            return Err(Error::Layout(format!("tile does not sit on the frame's pixel lattice (offset {px})")));
        }
        out[k] = rounded as usize;
        if out[k] + tile.resolution[k] > full.resolution[k] {
            return Err(Error::Layout("tile extends past the frame".into()));
        }
    }
    if (tile.scale[0] - full.scale[0]).abs() > 1e-12 * full.scale[0]
        || (tile.scale[1] - full.scale[1]).abs() > 1e-12 * full.scale[1]
    {
        return Err(Error::Layout("tile scale differs from the frame scale".into()));
    }
    Ok(out)
}

/// Render every tile independently and place it in the full frame.
///
/// Noise must be anchored to positions (`Constant` or `GridSample` with a
/// base spec); per-rendering random noise would make every seam visible.
pub fn stitch_tiles(
    params: &GeneratorParams,
    z: &[f64],
    full_spec: &SampleSpec,
    tiles: &[SampleSpec],
    noise: &NoisePolicy,
) -> Result<Stitched> {
    if noise.kind == NoiseKind::Random {
        return Err(Error::SeamWarning(
            "random noise differs between tiles; use constant or grid_sample noise anchored at the full frame".into(),
        ));
    }
    if tiles.is_empty() {
        return Err(Error::Layout("no tiles".into()));
    }
    let [w, h] = full_spec.resolution;
    let mut data = vec![0.0; w * h * 3];
    let mut covered = vec![false; w * h];
    let mut overlap_max_diff: f64 = 0.0;
    let mut offsets = Vec::with_capacity(tiles.len());
    for tile in tiles {
        let [ox, oy] = tile_offset(full_spec, tile)?;
        let grid = grid_for_output(params, tile)?;
        let patch = generate(params, z, &grid, noise)?;
        let tw = patch.width();
        for y in 0..patch.height() {
            for x in 0..tw {
                let p = (oy + y) * w + ox + x;
                for c in 0..3 {
                    let v = patch.data[(y * tw + x) * 3 + c];
                    if covered[p] {
                        overlap_max_diff = overlap_max_diff.max((data[p * 3 + c] - v).abs());
                    }
                    data[p * 3 + c] = v;
                }
                covered[p] = true;
            }
        }
        offsets.push([ox, oy]);
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(Error::Layout(format!("pixel ({}, {}) is not covered by any tile", missing % w, missing / w)));
    }
    Ok(Stitched { image: ImagePatch { data, spec: *full_spec }, overlap_max_diff, offsets })
}
