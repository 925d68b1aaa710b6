//! Feature-map size bookkeeping for the pad-free generator.
//!
//! The padded input has `n + 2·n_pad` positions per axis. The first valid
//! 3×3 convolution removes 2; every level doubles and then loses 4 to two
//! more valid convolutions:
//!
//! ```text
//! size[0] = n + 2·n_pad − 2
//! size[l] = 2·size[l−1] − 4
//! ```
//!
//! With `n_pad = 3` every level carries exactly 4 surplus pixels,
//! `size[l] = n·2^l + 4`, and trimming them at the end gives `n·2^L`.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapePlan {
    pub n_in: usize,
    pub n_pad: usize,
    pub levels: usize,
    /// Feature-map size after each level, `levels + 1` entries.
    pub per_level_size: Vec<usize>,
    pub output_size: usize,
    /// Total surplus removed at the end (`per_level_size[L] − n_in·2^L`).
    pub trim: usize,
}

pub fn plan_shapes(n_in: usize, n_pad: usize, levels: usize) -> Result<ShapePlan> {
    if n_in == 0 {
        return Err(Error::invalid("n_in must be >= 1"));
    }
    let mut sizes = Vec::with_capacity(levels + 1);
    let mut size = n_in as i64 + 2 * n_pad as i64 - 2;
    for level in 0..=levels {
        if level > 0 {
            size = size * 2 - 4;
        }
        if size < 1 {
            return Err(Error::ShapeUnderflow {
                level,
                size,
                detail: format!("n_in={n_in}, n_pad={n_pad}"),
            });
        }
        sizes.push(size as usize);
    }
    let output_size = n_in << levels;
    let last = sizes[levels];
    if last < output_size {
        return Err(Error::ShapeUnderflow {
            level: levels,
            size: last as i64 - output_size as i64,
            detail: format!("final map {last} is smaller than the output {output_size}; n_pad={n_pad} is too small"),
        });
    }
    Ok(ShapePlan { n_in, n_pad, levels, per_level_size: sizes, output_size, trim: last - output_size })
}

impl ShapePlan {
    /// Surplus pixels per side at `level`.
    pub fn margin(&self, level: usize) -> usize {
        (self.per_level_size[level] - (self.n_in << level)) / 2
    }

    /// Surplus pixels per side at `level` that are unaffected by the edge
    /// clamping of bilinear upsampling. Negative when clamped values have
    /// leaked into the kept area.
    ///
    /// Clamping at each ×2 upsampling affects `2^l − 1` pixels per side by
    /// level `l`, so the clean margin follows `v[0] = n_pad − 1`,
    /// `v[l] = 2·v[l−1] − 3`.
    pub fn clean_margin(&self, level: usize) -> i64 {
        let mut v = self.n_pad as i64 - 1;
        for _ in 0..level {
            v = 2 * v - 3;
        }
        v
    }

    /// Whether every output pixel depends only on its own receptive field,
    /// i.e. crops and shifts by whole input periods reproduce exactly.
    /// Holds for `n_pad ≥ 4` at any depth and for `n_pad = 3` up to one level.
    pub fn is_shift_exact(&self) -> bool {
        self.clean_margin(self.levels) >= 0
    }
}

/// How a block compensates for the 4 pixels its two valid convolutions consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleScheme {
    /// Pad the input positions and upsample by exactly 2.
    Doubling,
    /// Upsample `n → 2n + 4` directly, so the factor depends on `n`.
    CompensateByFactor,
}

/// Scale factor a block applies to space when its input is `n × n` (interior).
pub fn effective_scale_factor(scheme: UpsampleScheme, n: usize) -> f64 {
    match scheme {
        UpsampleScheme::Doubling => {
            let padded = n + 4;
            (2 * padded) as f64 / padded as f64
        }
        UpsampleScheme::CompensateByFactor => (2 * n + 4) as f64 / n as f64,
    }
}
