//! SSIM, cross-scale SelfSSIM, L1 distance and the resize-transitivity audit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::field::{ImagePatch, SampleSpec};
use crate::net::generator::{generate, latent_from_seed};
use crate::net::stitch::grid_for_output;
use crate::net::{GeneratorParams, NoiseKind, NoisePolicy};
use crate::rng::hash_words;
use crate::resample::bilinear_resize;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, dynamic_range: 2.0 }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::invalid(format!("SSIM window must be odd and >= 3, got {}", self.window)));
        }
        if !(self.sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::invalid("SSIM constants must be positive"));
        }
        Ok(())
    }

    /// Window actually used for an `h × w` image: the configured size, or the
    /// largest odd size that fits.
    pub fn effective_window(&self, h: usize, w: usize) -> usize {
        let fit = h.min(w);
        if fit >= self.window {
            self.window
        } else if fit % 2 == 1 {
            fit
        } else {
            fit - 1
        }
    }
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size / 2) as f64;
    let raw: Vec<f64> = (0..size).map(|i| libm::exp(-((i as f64 - mid).powi(2)) / (2.0 * sigma * sigma))).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| v / sum).collect()
}

/// Separable valid filtering of one plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = g.iter().enumerate().map(|(t, gv)| gv * plane[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = g.iter().enumerate().map(|(t, gv)| gv * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of two `(C, H, W)` tensors over valid Gaussian windows, averaged
/// over channels.
pub fn ssim_tensors(a: &Tensor, b: &Tensor, cfg: &SsimConfig) -> Result<f64> {
    cfg.validate()?;
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!("SSIM shape mismatch: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let (h, w) = (a.height, a.width);
    let win = cfg.effective_window(h, w);
    let g = gaussian_taps(win, cfg.sigma);
    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels {
        let (x, y) = (a.plane(c), b.plane(c));
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(x, h, w, &g);
        let my = filter_valid(y, h, w, &g);
        let sxx = filter_valid(&xx, h, w, &g);
        let syy = filter_valid(&yy, h, w, &g);
        let sxy = filter_valid(&xy, h, w, &g);
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        count += mx.len();
    }
    Ok(total / count as f64)
}

pub fn ssim(a: &ImagePatch, b: &ImagePatch, cfg: &SsimConfig) -> Result<f64> {
    if a.spec.resolution != b.spec.resolution {
        return Err(Error::invalid(format!(
            "SSIM shape mismatch: {:?} vs {:?}",
            a.spec.resolution, b.spec.resolution
        )));
    }
    ssim_tensors(&a.to_tensor(), &b.to_tensor(), cfg)
}

/// Mean absolute difference.
pub fn l1_distance(a: &ImagePatch, b: &ImagePatch) -> Result<f64> {
    if a.data.len() != b.data.len() {
        return Err(Error::invalid("L1 shape mismatch"));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSsimReport {
    pub scales: Vec<usize>,
    /// Row-major `scales.len() × scales.len()`.
    pub matrix: Vec<Vec<f64>>,
    pub reference_resolution: usize,
    pub sample_count: usize,
}

impl SelfSsimReport {
    /// Mean of the entries above the diagonal (1.0 for a single scale).
    pub fn mean_cross_scale(&self) -> f64 {
        let n = self.scales.len();
        let mut sum = 0.0;
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                sum += self.matrix[i][j];
                k += 1;
            }
        }
        if k == 0 {
            1.0
        } else {
            sum / k as f64
        }
    }

    /// Aligned text table, one row and column per scale.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:>8}", "");
        for sc in &self.scales {
            let _ = write!(s, "{sc:>8}");
        }
        s.push('\n');
        for (sc, row) in self.scales.iter().zip(&self.matrix) {
            let _ = write!(s, "{sc:>8}");
            for v in row {
                let _ = write!(s, "{v:>8.4}");
            }
            s.push('\n');
        }
        s
    }
}

fn resize_patch(p: &ImagePatch, res: usize) -> Tensor {
    bilinear_resize(&p.to_tensor(), res, res)
}

/// SelfSSIM: for every seed, render at every scale with `gen(seed, scale)`,
/// resize each rendering to `ref_res` and average pairwise SSIM over seeds.
pub fn self_ssim<F>(mut gen: F, z_seeds: &[u64], scales: &[usize], ref_res: usize) -> Result<SelfSsimReport>
where
    F: FnMut(u64, usize) -> Result<ImagePatch>,
{
    self_ssim_with(&mut gen, z_seeds, scales, ref_res, &SsimConfig::default())
}

pub fn self_ssim_with<F>(
    gen: &mut F,
    z_seeds: &[u64],
    scales: &[usize],
    ref_res: usize,
    cfg: &SsimConfig,
) -> Result<SelfSsimReport>
where
    F: FnMut(u64, usize) -> Result<ImagePatch>,
{
    if z_seeds.is_empty() {
        return Err(Error::invalid("self_ssim needs at least one seed"));
    }
    if scales.is_empty() || scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!("scales must be non-empty and strictly ascending, got {scales:?}")));
    }
    if ref_res == 0 {
        return Err(Error::invalid("reference resolution must be >= 1"));
    }
    let n = scales.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for &seed in z_seeds {
        let imgs: Vec<Tensor> =
            scales.iter().map(|&s| gen(seed, s).map(|p| resize_patch(&p, ref_res))).collect::<Result<_>>()?;
        for i in 0..n {
            for j in i + 1..n {
                matrix[i][j] += ssim_tensors(&imgs[i], &imgs[j], cfg)?;
            }
        }
    }
    for i in 0..n {
        matrix[i][i] = 1.0;
        for j in i + 1..n {
            matrix[i][j] /= z_seeds.len() as f64;
            matrix[j][i] = matrix[i][j];
        }
    }
    Ok(SelfSsimReport { scales: scales.to_vec(), matrix, reference_resolution: ref_res, sample_count: z_seeds.len() })
}

/// Max-abs deviation between resizing through `chain` step by step and
/// resizing straight to `direct`. The chain's last entry must equal `direct`.
pub fn resize_transitivity(img: &ImagePatch, chain: &[usize], direct: usize) -> Result<f64> {
    if chain.last() != Some(&direct) {
        return Err(Error::invalid(format!("chain {chain:?} must end at {direct}")));
    }
    let src = img.to_tensor();
    let mut t = src.clone();
    for &r in chain {
        t = bilinear_resize(&t, r, r);
    }
    Ok(t.max_abs_diff(&bilinear_resize(&src, direct, direct)))
}

/// SelfSSIM of a generator over full-frame renderings at each of `scales`.
/// Anchored noise (`Constant`, `GridSample`) uses the full frame at the
/// largest scale as its base; `Random` noise is drawn afresh per rendering.
pub fn generator_self_ssim(
    params: &GeneratorParams,
    z_seeds: &[u64],
    scales: &[usize],
    ref_res: usize,
    noise: NoiseKind,
    noise_seed: u64,
) -> Result<SelfSsimReport> {
    let base = SampleSpec::full_frame(scales.iter().copied().max().unwrap_or(1));
    let d = params.config.latent_dim;
    self_ssim(
        |seed, res| {
            let spec = SampleSpec::full_frame(res);
            let policy = match noise {
                NoiseKind::Random => NoisePolicy::random(hash_words(&[noise_seed, seed, res as u64])),
                kind => NoisePolicy { kind, base_seed: hash_words(&[noise_seed, seed]), base_spec: Some(base) },
            };
            generate(params, &latent_from_seed(seed, d), &grid_for_output(params, &spec)?, &policy)
        },
        z_seeds,
        scales,
        ref_res,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_field_with, sample_field, ContinuousField, SampleSpec};
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn rand_patch(rng: &mut CounterRng, r: usize) -> ImagePatch {
        ImagePatch { data: (0..r * r * 3).map(|_| rng.uniform_in(-1.0, 1.0)).collect(), spec: SampleSpec::full_frame(r) }
    }

    /// Straightforward per-window evaluation with a 2-D weight table.
    fn brute_ssim(a: &ImagePatch, b: &ImagePatch, cfg: &SsimConfig) -> f64 {
        let (h, w) = (a.height(), a.width());
        let win = cfg.effective_window(h, w);
        let sig = cfg.sigma;
        let mut wt = vec![vec![0.0; win]; win];
        let mut s = 0.0;
        let m = (win / 2) as f64;
        for (i, row) in wt.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = libm::exp(-((i as f64 - m).powi(2) + (j as f64 - m).powi(2)) / (2.0 * sig * sig));
                s += *v;
            }
        }
        let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
        let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
        let mut total = 0.0;
        let mut n = 0;
        for c in 0..3 {
            for y0 in 0..=h - win {
                for x0 in 0..=w - win {
                    let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for dy in 0..win {
                        for dx in 0..win {
                            let k = wt[dy][dx] / s;
                            let p = a.get(y0 + dy, x0 + dx, c);
                            let q = b.get(y0 + dy, x0 + dx, c);
                            mx += k * p;
                            my += k * q;
                            xx += k * p * p;
                            yy += k * q * q;
                            xy += k * p * q;
                        }
                    }
                    let (vx, vy, cv) = (xx - mx * mx, yy - my * my, xy - mx * my);
                    total += (2.0 * mx * my + c1) * (2.0 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    n += 1;
                }
            }
        }
        total / n as f64
    }

    #[test]
    fn identical_images_score_one() {
        let mut rng = CounterRng::new(1);
        let a = rand_patch(&mut rng, 16);
        assert_eq!(ssim(&a, &a, &SsimConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn negated_image_scores_below_zero() {
        // Checkerboard carrier under a smooth envelope: locally zero-mean, so
        // the covariance term decides the sign.
        let env = sample_field(&make_field_with(2, 3, 1.0).unwrap(), &SampleSpec::full_frame(16)).unwrap();
        let data = env
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (x, y) = ((i / 3) % 16, i / 48);
                if (x + y) % 2 == 0 { 0.6 + 0.3 * v } else { -0.6 - 0.3 * v }
            })
            .collect();
        let a = ImagePatch { data, spec: env.spec };
        let b = ImagePatch { data: a.data.iter().map(|v| -v).collect(), spec: a.spec };
        assert!(ssim(&a, &b, &SsimConfig::default()).unwrap() < 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = CounterRng::new(3);
        let (a, b) = (rand_patch(&mut rng, 16), rand_patch(&mut rng, 8));
        assert!(matches!(ssim(&a, &b, &SsimConfig::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn matches_brute_force_windows() {
        let cfg = SsimConfig::default();
        let mut rng = CounterRng::new(4);
        for r in [16, 12, 7, 4] {
            let (a, b) = (rand_patch(&mut rng, r), rand_patch(&mut rng, r));
            let fast = ssim(&a, &b, &cfg).unwrap();
            assert!((fast - brute_ssim(&a, &b, &cfg)).abs() <= 1e-9, "r={r}");
        }
    }

    #[test]
    fn shifted_image_scores_below_one() {
        let f = make_field_with(3, 5, 2.0).unwrap();
        let spec = SampleSpec::full_frame(24);
        let a = sample_field(&f, &spec).unwrap();
        let b = sample_field(&f, &SampleSpec { center: [spec.scale[0], 0.0], ..spec }).unwrap();
        assert!(ssim(&a, &b, &SsimConfig::default()).unwrap() < 1.0);
    }

    #[test]
    fn self_ssim_single_scale_and_empty_seeds() {
        let f = make_field_with(1, 3, 1.0).unwrap();
        let gen = |_: u64, s: usize| sample_field(&f, &SampleSpec::full_frame(s));
        let r = self_ssim(gen, &[0, 1], &[32], 32).unwrap();
        assert_eq!(r.matrix, vec![vec![1.0]]);
        assert!(matches!(self_ssim(gen, &[], &[32], 32), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn oracle_self_ssim_is_near_one() {
        let gen = |seed: u64, s: usize| sample_field(&make_field_with(seed, 4, 1.5).unwrap(), &SampleSpec::full_frame(s));
        let seeds: Vec<u64> = (0..10).collect();
        let r = self_ssim(gen, &seeds, &[32, 48, 64], 64).unwrap();
        for i in 0..3 {
            assert_eq!(r.matrix[i][i], 1.0);
            for j in 0..3 {
                assert_eq!(r.matrix[i][j], r.matrix[j][i]);
                assert!(r.matrix[i][j] >= 0.98, "{i},{j}: {}", r.matrix[i][j]);
            }
        }
        assert!(r.to_table().lines().count() == 4);
    }

    #[test]
    fn transitivity_audit() {
        let f = make_field_with(6, 6, 3.0).unwrap();
        let img = sample_field(&f, &SampleSpec::full_frame(512)).unwrap();
        assert_eq!(resize_transitivity(&img, &[256], 256).unwrap(), 0.0);
        let d = resize_transitivity(&img, &[384, 256], 256).unwrap();
        assert!(d > 0.0 && d <= 0.05, "{d}");
        let flat = sample_field(&ContinuousField::constant(0.3), &SampleSpec::full_frame(64)).unwrap();
        assert_eq!(resize_transitivity(&flat, &[48, 40, 32], 32).unwrap(), 0.0);
        assert!(resize_transitivity(&img, &[384], 256).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(seed in 0u64..1000, r in 3usize..14) {
            let mut rng = CounterRng::new(seed);
            let (a, b) = (rand_patch(&mut rng, r), rand_patch(&mut rng, r));
            let cfg = SsimConfig::default();
            let ab = ssim(&a, &b, &cfg).unwrap();
            let ba = ssim(&b, &a, &cfg).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab <= 1.0 + 1e-12 && ab >= -1.0 - 1e-12);
        }
    }
}
