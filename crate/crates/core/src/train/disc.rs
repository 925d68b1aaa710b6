//! Resolution-agnostic discriminator and the R1 penalty.
//!
//! `from_rgb` (1×1) → strided 3×3 valid convs → adaptive average pool to
//! 2×2 → linear score. Every kernel is generic over [`Real`]: the R1
//! parameter gradient is the tangent of the ordinary parameter gradient when
//! the input carries the input gradient as its tangent.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::net::params::{round_f32, ParamTensor};
use crate::real::{Dual, Real};
use crate::tensor::{add_bias, channel_sums, conv2d_valid, conv2d_valid_backward, leaky_relu, leaky_relu_backward, ConvShape, Tensor};
use crate::{Error, Result};

pub const POOL: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscConfig {
    /// Channels after `from_rgb`, then after each strided conv.
    pub widths: Vec<usize>,
}

impl DiscConfig {
    pub fn toy() -> Self {
        DiscConfig { widths: vec![16, 24, 32] }
    }

    fn layer_shapes(&self) -> Vec<ConvShape> {
        let mut out = vec![ConvShape { out_ch: self.widths[0], in_ch: 3, kernel: 1, stride: 1 }];
        for w in self.widths.windows(2) {
            out.push(ConvShape { out_ch: w[1], in_ch: w[0], kernel: 3, stride: 2 });
        }
        out
    }

    /// Smallest square input the conv stack accepts.
    pub fn min_input(&self) -> usize {
        let mut n = 1;
        for _ in 1..self.widths.len() {
            n = 2 * n + 1;
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscParams {
    pub config: DiscConfig,
    /// Per layer: weight, bias; then `fc.weight`, `fc.bias`.
    pub tensors: Vec<ParamTensor>,
}

impl DiscParams {
    pub fn init(config: &DiscConfig, seed: u64) -> Result<Self> {
        if config.widths.is_empty() || config.widths.contains(&0) {
            return Err(Error::invalid(format!("discriminator widths must be non-empty and positive, got {:?}", config.widths)));
        }
        let mut tensors = Vec::new();
        for (k, s) in config.layer_shapes().iter().enumerate() {
            let fan_in = (s.in_ch * s.kernel * s.kernel) as f64;
            tensors.push(ParamTensor::normal(
                format!("d.{k}.weight"),
                &[s.out_ch, s.in_ch, s.kernel, s.kernel],
                1.0 / libm::sqrt(fan_in),
                seed,
            ));
            tensors.push(ParamTensor::zeros(format!("d.{k}.bias"), &[s.out_ch]));
        }
        let feat = config.widths[config.widths.len() - 1] * POOL * POOL;
        tensors.push(ParamTensor::normal("d.fc.weight", &[1, feat], 1.0 / libm::sqrt(feat as f64), seed));
        tensors.push(ParamTensor::zeros("d.fc.bias", &[1]));
        Ok(DiscParams { config: config.clone(), tensors })
    }

    pub fn zeros_like(&self) -> Self {
        DiscParams {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(|t| ParamTensor::zeros(t.name.clone(), &t.shape)).collect(),
        }
    }

    pub fn weights<T: Real>(&self) -> Vec<Vec<T>> {
        self.tensors.iter().map(|t| t.data.iter().map(|&v| T::from_f64(v)).collect()).collect()
    }

    pub fn add_scaled(&mut self, grads: &[Vec<f64>], k: f64) {
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            for (v, d) in t.data.iter_mut().zip(g) {
                *v = round_f32(*v + k * d);
            }
        }
    }
}

/// `[start, end)` of adaptive-pool bin `i` of `out` bins over `n` inputs.
pub fn pool_bin(i: usize, out: usize, n: usize) -> (usize, usize) {
    ((i * n) / out, ((i + 1) * n).div_ceil(out))
}

#[derive(Debug, Clone)]
pub struct DiscTrace<T> {
    inputs: Vec<Tensor<T>>,
    pres: Vec<Tensor<T>>,
    last: Tensor<T>,
    pooled: Vec<T>,
}

pub fn disc_forward<T: Real>(cfg: &DiscConfig, w: &[Vec<T>], x: &Tensor<T>) -> Result<(T, DiscTrace<T>)> {
    let shapes = cfg.layer_shapes();
    let mut inputs = Vec::with_capacity(shapes.len());
    let mut pres = Vec::with_capacity(shapes.len());
    let mut h = x.clone();
    for (k, s) in shapes.iter().enumerate() {
        let mut y = conv2d_valid(&h, &w[2 * k], *s)?;
        add_bias(&mut y, &w[2 * k + 1]);
        inputs.push(h);
        h = leaky_relu(&y);
        pres.push(y);
    }
    let (c, hh, ww) = (h.channels, h.height, h.width);
    let mut pooled = Vec::with_capacity(c * POOL * POOL);
    for ch in 0..c {
        for by in 0..POOL {
            let (y0, y1) = pool_bin(by, POOL, hh);
            for bx in 0..POOL {
                let (x0, x1) = pool_bin(bx, POOL, ww);
                let mut acc = T::default();
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += h.at(ch, y, x);
                    }
                }
                pooled.push(acc.scale(1.0 / ((y1 - y0) * (x1 - x0)) as f64));
            }
        }
    }
    let nl = shapes.len();
    let fc_w = &w[2 * nl];
    let mut score = w[2 * nl + 1][0];
    for (a, b) in fc_w.iter().zip(&pooled) {
        score += *a * *b;
    }
    Ok((score, DiscTrace { inputs, pres, last: h, pooled }))
}

/// Gradients of `g·score` w.r.t. the input and every parameter array.
pub fn disc_backward<T: Real>(cfg: &DiscConfig, w: &[Vec<T>], trace: &DiscTrace<T>, g: T) -> (Tensor<T>, Vec<Vec<T>>) {
    let shapes = cfg.layer_shapes();
    let nl = shapes.len();
    let mut grads: Vec<Vec<T>> = w.iter().map(|t| vec![T::default(); t.len()]).collect();
    grads[2 * nl] = trace.pooled.iter().map(|&p| p * g).collect();
    grads[2 * nl + 1][0] = g;
    let g_pooled: Vec<T> = w[2 * nl].iter().map(|&a| a * g).collect();
    let last = &trace.last;
    let (c, hh, ww) = (last.channels, last.height, last.width);
    let mut gh = Tensor::zeros(c, hh, ww);
    let mut idx = 0;
    for ch in 0..c {
        for by in 0..POOL {
            let (y0, y1) = pool_bin(by, POOL, hh);
            for bx in 0..POOL {
                let (x0, x1) = pool_bin(bx, POOL, ww);
                let v = g_pooled[idx].scale(1.0 / ((y1 - y0) * (x1 - x0)) as f64);
                idx += 1;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let i = gh.idx(ch, y, x);
                        gh.data[i] += v;
                    }
                }
            }
        }
    }
    for k in (0..nl).rev() {
        let g_pre = leaky_relu_backward(&trace.pres[k], &gh);
        grads[2 * k + 1] = channel_sums(&g_pre);
        let (gi, gw) = conv2d_valid_backward(&trace.inputs[k], &w[2 * k], shapes[k], &g_pre);
        grads[2 * k] = gw;
        gh = gi;
    }
    (gh, grads)
}

/// Score of one image.
pub fn disc_score(params: &DiscParams, x: &Tensor) -> Result<f64> {
    Ok(disc_forward(&params.config, &params.weights::<f64>(), x)?.0)
}

/// Scores of a batch with a closure mapping each score to `dL/dscore`;
/// returns the scores, the input gradients and the summed parameter
/// gradients.
pub fn disc_batch<F>(params: &DiscParams, xs: &[Tensor], mut loss_grad: F) -> Result<(Vec<f64>, Vec<Tensor>, Vec<Vec<f64>>)>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let w = params.weights::<f64>();
    let mut traces = Vec::with_capacity(xs.len());
    let mut scores = Vec::with_capacity(xs.len());
    for x in xs {
        let (s, t) = disc_forward(&params.config, &w, x)?;
        scores.push(s);
        traces.push(t);
    }
    let gs = loss_grad(&scores);
    let mut total: Vec<Vec<f64>> = w.iter().map(|t| vec![0.0; t.len()]).collect();
    let mut g_inputs = Vec::with_capacity(xs.len());
    for (t, &g) in traces.iter().zip(&gs) {
        let (gi, gp) = disc_backward(&params.config, &w, t, g);
        for (a, b) in total.iter_mut().zip(gp) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        g_inputs.push(gi);
    }
    Ok((scores, g_inputs, total))
}

/// R1 value `(γ/2)·mean‖∇ₓD(x)‖²` and its parameter gradient.
pub fn r1_penalty(params: &DiscParams, reals: &[Tensor], gamma: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    if reals.is_empty() {
        return Err(Error::invalid("R1 needs at least one image"));
    }
    let cfg = &params.config;
    let w = params.weights::<f64>();
    let wd = params.weights::<Dual>();
    let n = reals.len() as f64;
    let mut value = 0.0;
    let mut grads: Vec<Vec<f64>> = w.iter().map(|t| vec![0.0; t.len()]).collect();
    for x in reals {
        let (_, t) = disc_forward(cfg, &w, x)?;
        let (gx, _) = disc_backward(cfg, &w, &t, 1.0);
        value += gx.sum_sq();
        // d/dθ ½‖g‖² = Σᵢ gᵢ ∂²D/∂xᵢ∂θ: the directional derivative of ∇θD
        // along g.
        let xd = Tensor::from_vec(
            x.channels,
            x.height,
            x.width,
            x.data.iter().zip(&gx.data).map(|(&v, &d)| Dual::new(v, d)).collect(),
        );
        let (_, td) = disc_forward(cfg, &wd, &xd)?;
        let (_, gpd) = disc_backward(cfg, &wd, &td, Dual::new(1.0, 0.0));
        for (a, b) in grads.iter_mut().zip(gpd) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += gamma * y.eps / n;
            }
        }
    }
    Ok((gamma / 2.0 * value / n, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn rand_img(rng: &mut CounterRng, r: usize) -> Tensor {
        Tensor::from_vec(3, r, r, (0..3 * r * r).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
    }

    fn tiny() -> DiscParams {
        let mut p = DiscParams::init(&DiscConfig { widths: vec![3, 4] }, 7).unwrap();
        // Nonzero biases so every kink of the activations is exercised.
        let mut rng = CounterRng::new(1);
        for t in &mut p.tensors {
            if t.name.ends_with("bias") {
                t.data.iter_mut().for_each(|v| *v = 0.1 * rng.normal());
            }
        }
        p
    }

    #[test]
    fn pool_bins_follow_floor_ceil() {
        assert_eq!((pool_bin(0, 2, 5), pool_bin(1, 2, 5)), ((0, 3), (2, 5)));
        assert_eq!((pool_bin(0, 2, 1), pool_bin(1, 2, 1)), ((0, 1), (0, 1)));
    }

    #[test]
    fn any_resolution_above_minimum() {
        let p = DiscParams::init(&DiscConfig::toy(), 0).unwrap();
        let mut rng = CounterRng::new(2);
        for r in [p.config.min_input(), 16, 24, 33] {
            assert!(disc_score(&p, &rand_img(&mut rng, r)).unwrap().is_finite());
        }
        assert!(disc_score(&p, &rand_img(&mut rng, p.config.min_input() - 1)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = tiny();
        let mut rng = CounterRng::new(3);
        let x = rand_img(&mut rng, 8);
        let w = p.weights::<f64>();
        let (_, t) = disc_forward(&p.config, &w, &x).unwrap();
        let (gx, gp) = disc_backward(&p.config, &w, &t, 1.0);
        let h = 1e-6;
        for i in (0..x.data.len()).step_by(7) {
            let (mut a, mut b) = (x.clone(), x.clone());
            a.data[i] += h;
            b.data[i] -= h;
            let fd = (disc_score(&p, &a).unwrap() - disc_score(&p, &b).unwrap()) / (2.0 * h);
            assert!((fd - gx.data[i]).abs() < 1e-7);
        }
        for (ti, g) in gp.iter().enumerate() {
            for i in 0..g.len() {
                let (mut a, mut b) = (p.clone(), p.clone());
                a.tensors[ti].data[i] += h;
                b.tensors[ti].data[i] -= h;
                let fd = (disc_score(&a, &x).unwrap() - disc_score(&b, &x).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7, "{}[{i}]", p.tensors[ti].name);
            }
        }
    }

    #[test]
    fn r1_of_constant_discriminator_is_zero() {
        let mut p = tiny();
        let last = p.tensors.len() - 2;
        p.tensors[last].data.iter_mut().for_each(|v| *v = 0.0);
        let mut rng = CounterRng::new(4);
        let (v, _) = r1_penalty(&p, &[rand_img(&mut rng, 8)], 10.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn r1_of_linear_discriminator() {
        // One 1×1 layer on a 1×1 image with positive pre-activations: the
        // score is Σ a·x + b, so the penalty is (γ/2)‖a‖².
        let mut p = DiscParams::init(&DiscConfig { widths: vec![2] }, 0).unwrap();
        p.tensors[0].data = vec![0.5, -0.25, 1.0, 0.75, 0.5, -0.5];
        p.tensors[1].data = vec![10.0, 10.0];
        p.tensors[2].data = vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0];
        let x = Tensor::from_vec(3, 1, 1, vec![0.1, 0.2, 0.3]);
        let (v, _) = r1_penalty(&p, &[x], 4.0).unwrap();
        // The 1×1 map feeds every pool bin, so ∂score/∂h = Σ fc over the bins.
        let a = [0.5 * 1.0 + 0.75 * 2.0, -0.25 + 0.5 * 2.0, 1.0 - 0.5 * 2.0];
        let expected = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn r1_parameter_gradient_matches_finite_differences() {
        let p = tiny();
        let mut rng = CounterRng::new(5);
        let xs = [rand_img(&mut rng, 8), rand_img(&mut rng, 9)];
        let (_, g) = r1_penalty(&p, &xs, 3.0).unwrap();
        let h = 1e-3;
        for (ti, gt) in g.iter().enumerate() {
            for i in (0..gt.len()).step_by(3) {
                let (mut a, mut b) = (p.clone(), p.clone());
                a.tensors[ti].data[i] += h;
                b.tensors[ti].data[i] -= h;
                let fd = (r1_penalty(&a, &xs, 3.0).unwrap().0 - r1_penalty(&b, &xs, 3.0).unwrap().0) / (2.0 * h);
                let err = (fd - gt[i]).abs() / fd.abs().max(gt[i].abs()).max(1e-6);
                assert!(err <= 1e-3, "{}[{i}]: fd {fd} vs {}", p.tensors[ti].name, gt[i]);
            }
        }
    }
}
