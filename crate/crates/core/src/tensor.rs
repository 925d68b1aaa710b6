//! Channel-major (C, H, W) feature maps and the convolution kernels shared by
//! the generator and the discriminator.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor { channels, height, width, data: vec![T::default(); channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length");
        Tensor { channels, height, width, data }
    }

    #[inline(always)]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline(always)]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.idx(c, y, x)]
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    /// Remove `top`/`left` leading and `bottom`/`right` trailing rows/columns.
    pub fn crop(&self, top: usize, bottom: usize, left: usize, right: usize) -> Self {
        let h = self.height - top - bottom;
        let w = self.width - left - right;
        let mut out = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in 0..h {
                let start = self.idx(c, y + top, left);
                out.extend_from_slice(&self.data[start..start + w]);
            }
        }
        Tensor::from_vec(self.channels, h, w, out)
    }

    /// Adjoint of [`Tensor::crop`]: zero-pads a gradient back to full size.
    pub fn uncrop(&self, top: usize, bottom: usize, left: usize, right: usize) -> Self {
        let mut out = Tensor::zeros(self.channels, self.height + top + bottom, self.width + left + right);
        for c in 0..self.channels {
            for y in 0..self.height {
                let dst = out.idx(c, y + top, left);
                let src = self.idx(c, y, 0);
                out.data[dst..dst + self.width].copy_from_slice(&self.data[src..src + self.width]);
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

impl Tensor<f64> {
    pub fn max_abs_diff(&self, other: &Tensor<f64>) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Output size of a valid (unpadded) convolution, or `None` on underflow.
pub fn valid_output_size(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if input < kernel {
        None
    } else {
        Some((input - kernel) / stride + 1)
    }
}

/// Weight layout is `(out, in, k, k)`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }
}

/// Valid cross-correlation without bias.
pub fn conv2d_valid<T: Real>(input: &Tensor<T>, weight: &[T], shape: ConvShape) -> Result<Tensor<T>> {
    let ConvShape { out_ch, in_ch, kernel: k, stride: s } = shape;
    if input.channels != in_ch {
        return Err(Error::ShapeMismatch {
            what: "conv input channels",
            expected: alloc::format!("{in_ch}"),
            actual: alloc::format!("{}", input.channels),
        });
    }
    debug_assert_eq!(weight.len(), shape.weight_len());
    let (oh, ow) = match (valid_output_size(input.height, k, s), valid_output_size(input.width, k, s)) {
        (Some(h), Some(w)) => (h, w),
        _ => {
            return Err(Error::ShapeUnderflow {
                level: 0,
                size: input.height.min(input.width) as i64 - k as i64 + 1,
                detail: alloc::format!("valid {k}x{k} convolution on {}x{}", input.height, input.width),
            })
        }
    };
    let mut out = Tensor::zeros(out_ch, oh, ow);
    let (ih, iw) = (input.height, input.width);
    for o in 0..out_ch {
        let out_plane = &mut out.data[o * oh * ow..(o + 1) * oh * ow];
        for i in 0..in_ch {
            let in_plane = &input.data[i * ih * iw..(i + 1) * ih * iw];
            for ky in 0..k {
                for kx in 0..k {
                    let w = weight[((o * in_ch + i) * k + ky) * k + kx];
                    for y in 0..oh {
                        let row = &in_plane[(y * s + ky) * iw + kx..];
                        let dst = &mut out_plane[y * ow..(y + 1) * ow];
                        if s == 1 {
                            for (d, &v) in dst.iter_mut().zip(&row[..ow]) {
                                *d += w * v;
                            }
                        } else {
                            for (x, d) in dst.iter_mut().enumerate() {
                                *d += w * row[x * s];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_valid`] with respect to its input and weights.
pub fn conv2d_valid_backward<T: Real>(
    input: &Tensor<T>,
    weight: &[T],
    shape: ConvShape,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Vec<T>) {
    let ConvShape { out_ch, in_ch, kernel: k, stride: s } = shape;
    let (ih, iw) = (input.height, input.width);
    let (oh, ow) = (grad_out.height, grad_out.width);
    let mut grad_in = Tensor::zeros(in_ch, ih, iw);
    let mut grad_w = vec![T::default(); shape.weight_len()];
    for o in 0..out_ch {
        let g_plane = &grad_out.data[o * oh * ow..(o + 1) * oh * ow];
        for i in 0..in_ch {
            let in_plane = &input.data[i * ih * iw..(i + 1) * ih * iw];
            let gi_plane = &mut grad_in.data[i * ih * iw..(i + 1) * ih * iw];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((o * in_ch + i) * k + ky) * k + kx;
                    let w = weight[widx];
                    let mut acc = T::default();
                    for y in 0..oh {
                        let g_row = &g_plane[y * ow..(y + 1) * ow];
                        let base = (y * s + ky) * iw + kx;
                        if s == 1 {
                            let in_row = &in_plane[base..base + ow];
                            for (&g, &v) in g_row.iter().zip(in_row) {
                                acc += g * v;
                            }
                            let gi_row = &mut gi_plane[base..base + ow];
                            for (d, &g) in gi_row.iter_mut().zip(g_row) {
                                *d += w * g;
                            }
                        } else {
                            for (x, &g) in g_row.iter().enumerate() {
                                acc += g * in_plane[base + x * s];
                                gi_plane[base + x * s] += w * g;
                            }
                        }
                    }
                    grad_w[widx] += acc;
                }
            }
        }
    }
    (grad_in, grad_w)
}

pub fn add_bias<T: Real>(t: &mut Tensor<T>, bias: &[T]) {
    let n = t.height * t.width;
    for (c, &b) in bias.iter().enumerate() {
        for v in &mut t.data[c * n..(c + 1) * n] {
            *v += b;
        }
    }
}

/// Per-channel sums of a gradient, i.e. the bias gradient.
pub fn channel_sums<T: Real>(t: &Tensor<T>) -> Vec<T> {
    let n = t.height * t.width;
    (0..t.channels)
        .map(|c| t.data[c * n..(c + 1) * n].iter().fold(T::default(), |a, &v| a + v))
        .collect()
}

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    t.map(|v| if v.value() >= 0.0 { v } else { v.scale(LEAKY_SLOPE) })
}

/// Backward of leaky ReLU given the pre-activation.
pub fn leaky_relu_backward<T: Real>(pre: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = pre
        .data
        .iter()
        .zip(&grad.data)
        .map(|(&p, &g)| if p.value() >= 0.0 { g } else { g.scale(LEAKY_SLOPE) })
        .collect();
    Tensor { data, ..*grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn random_tensor(rng: &mut CounterRng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.normal()).collect())
    }

    #[test]
    fn crop_then_uncrop_restores_interior() {
        let mut rng = CounterRng::new(1);
        let t = random_tensor(&mut rng, 2, 6, 5);
        let c = t.crop(1, 2, 2, 1);
        assert_eq!(c.shape(), [2, 3, 2]);
        let u = c.uncrop(1, 2, 2, 1);
        assert_eq!(u.at(1, 2, 3), t.at(1, 2, 3));
        assert_eq!(u.at(1, 0, 0), 0.0);
    }

    #[test]
    fn strided_conv_output_size() {
        assert_eq!(valid_output_size(16, 3, 2), Some(7));
        assert_eq!(valid_output_size(2, 3, 1), None);
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x), g> == <x, conv^T(g)> and d<conv(x),g>/dw == grad_w
        let mut rng = CounterRng::new(9);
        for &stride in &[1usize, 2] {
            let shape = ConvShape { out_ch: 3, in_ch: 2, kernel: 3, stride };
            let x = random_tensor(&mut rng, 2, 9, 8);
            let w: Vec<f64> = (0..shape.weight_len()).map(|_| rng.normal()).collect();
            let y = conv2d_valid(&x, &w, shape).unwrap();
            let g = random_tensor(&mut rng, 3, y.height, y.width);
            let (gx, gw) = conv2d_valid_backward(&x, &w, shape, &g);
            let lhs: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data.iter().zip(&gx.data).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
            let rhs_w: f64 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs_w).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }
}
