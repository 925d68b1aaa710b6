//! Half-pixel bilinear resampling.
//!
//! Pixel `i` of an axis of length `n` has its center at continuous index `i`;
//! resizing `n → m` samples output pixel `j` at source index
//! `(j + 0.5)·n/m − 0.5`, clamped to `[0, n − 1]`. This is the one resampler
//! used everywhere: generator upsampling, scale-pair mixing, SelfSSIM and the
//! transitivity audit.

use alloc::vec::Vec;

use crate::tensor::Tensor;

/// Two-tap linear interpolation weights along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisTaps {
    pub src_len: usize,
    /// `(lower index, upper index, weight of upper)` per output position.
    pub taps: Vec<(usize, usize, f64)>,
}

/// Fractional parts closer than this to an integer are snapped, so that
/// positions that coincide with source pixel centers copy them exactly.
const SNAP: f64 = 1e-9;

impl AxisTaps {
    /// Taps for arbitrary source positions (in source pixel-index units),
    /// with edge clamping.
    pub fn from_positions(src_len: usize, positions: impl IntoIterator<Item = f64>) -> Self {
        let hi = (src_len - 1) as f64;
        let taps = positions
            .into_iter()
            .map(|p| {
                let p = p.clamp(0.0, hi);
                let mut i0 = libm::floor(p);
                let mut frac = p - i0;
                if frac < SNAP {
                    frac = 0.0;
                } else if frac > 1.0 - SNAP {
                    frac = 0.0;
                    i0 += 1.0;
                }
                let i0 = (i0 as usize).min(src_len - 1);
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, frac)
            })
            .collect();
        AxisTaps { src_len, taps }
    }

    /// Taps for resizing `src_len → dst_len` with the half-pixel convention.
    pub fn resize(src_len: usize, dst_len: usize) -> Self {
        let ratio = src_len as f64 / dst_len as f64;
        Self::from_positions(src_len, (0..dst_len).map(|j| (j as f64 + 0.5) * ratio - 0.5))
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Apply separable taps to every channel: `out[c][y][x] = Σ wy·wx·in[c][..][..]`.
pub fn apply_taps(input: &Tensor, ty: &AxisTaps, tx: &AxisTaps) -> Tensor {
    debug_assert_eq!(ty.src_len, input.height);
    debug_assert_eq!(tx.src_len, input.width);
    let (oh, ow) = (ty.len(), tx.len());
    let mut out = Tensor::zeros(input.channels, oh, ow);
    // Horizontal pass into a scratch row, then vertical blend.
    let mut rows = Vec::with_capacity(input.height * ow);
    for c in 0..input.channels {
        let plane = input.plane(c);
        rows.clear();
        for y in 0..input.height {
            let src = &plane[y * input.width..(y + 1) * input.width];
            rows.extend(tx.taps.iter().map(|&(x0, x1, f)| if f == 0.0 { src[x0] } else { src[x0] * (1.0 - f) + src[x1] * f }));
        }
        let dst = &mut out.data[c * oh * ow..(c + 1) * oh * ow];
        for (y, &(y0, y1, f)) in ty.taps.iter().enumerate() {
            let r0 = &rows[y0 * ow..(y0 + 1) * ow];
            let r1 = &rows[y1 * ow..(y1 + 1) * ow];
            let d = &mut dst[y * ow..(y + 1) * ow];
            if f == 0.0 {
                d.copy_from_slice(r0);
            } else {
                for ((d, &a), &b) in d.iter_mut().zip(r0).zip(r1) {
                    *d = a * (1.0 - f) + b * f;
                }
            }
        }
    }
    out
}

/// Adjoint of [`apply_taps`]: scatters an output gradient back to the source.
pub fn apply_taps_adjoint(grad: &Tensor, ty: &AxisTaps, tx: &AxisTaps) -> Tensor {
    let (ih, iw) = (ty.src_len, tx.src_len);
    let ow = tx.len();
    let mut out = Tensor::zeros(grad.channels, ih, iw);
    let mut rows = alloc::vec![0.0; ih * ow];
    for c in 0..grad.channels {
        rows.iter_mut().for_each(|v| *v = 0.0);
        let g = grad.plane(c);
        for (y, &(y0, y1, f)) in ty.taps.iter().enumerate() {
            for x in 0..ow {
                let v = g[y * ow + x];
                rows[y0 * ow + x] += v * (1.0 - f);
                if f != 0.0 {
                    rows[y1 * ow + x] += v * f;
                }
            }
        }
        let dst = &mut out.data[c * ih * iw..(c + 1) * ih * iw];
        for y in 0..ih {
            for (x, &(x0, x1, f)) in tx.taps.iter().enumerate() {
                let v = rows[y * ow + x];
                dst[y * iw + x0] += v * (1.0 - f);
                if f != 0.0 {
                    dst[y * iw + x1] += v * f;
                }
            }
        }
    }
    out
}

/// Half-pixel bilinear resize of every channel to `(height, width)`.
pub fn bilinear_resize(input: &Tensor, height: usize, width: usize) -> Tensor {
    assert!(height >= 1 && width >= 1, "resize target must be at least 1x1");
    if input.height == height && input.width == width {
        return input.clone();
    }
    apply_taps(input, &AxisTaps::resize(input.height, height), &AxisTaps::resize(input.width, width))
}

pub fn bilinear_resize_adjoint(grad: &Tensor, src_height: usize, src_width: usize) -> Tensor {
    if grad.height == src_height && grad.width == src_width {
        return grad.clone();
    }
    apply_taps_adjoint(grad, &AxisTaps::resize(src_height, grad.height), &AxisTaps::resize(src_width, grad.width))
}

/// Bilinear lookup of a single-channel plane at a fractional pixel position
/// with edge clamping.
pub fn sample_point(plane: &[f64], height: usize, width: usize, py: f64, px: f64) -> f64 {
    let ty = AxisTaps::from_positions(height, [py]);
    let tx = AxisTaps::from_positions(width, [px]);
    let (y0, y1, fy) = ty.taps[0];
    let (x0, x1, fx) = tx.taps[0];
    let top = plane[y0 * width + x0] * (1.0 - fx) + plane[y0 * width + x1] * fx;
    let bot = plane[y1 * width + x0] * (1.0 - fx) + plane[y1 * width + x1] * fx;
    top * (1.0 - fy) + bot * fy
}
