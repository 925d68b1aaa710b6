//! W+ projection: fit per-layer latents of a frozen generator to target
//! images, at one or several scales of the same region jointly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::field::ImagePatch;
use crate::net::generator::{broadcast_styles, mean_latent, synthesize, synthesize_backward, Styles};
use crate::net::noise::{noise_for_grid, NoisePolicy};
use crate::net::params::GeneratorParams;
use crate::net::stitch::grid_for_output;
use crate::posgrid::EncodingGrid;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub steps: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub noise: NoisePolicy,
    /// Latents averaged for the starting point.
    pub init_samples: usize,
    pub init_seed: u64,
}

impl ProjectConfig {
    pub fn new(steps: usize, lr: f64, noise: NoisePolicy) -> Self {
        ProjectConfig { steps, lr, optimizer: Optimizer::Adam, noise, init_samples: 256, init_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub styles: Styles,
    /// Mean squared error (over all targets) before each step and after the last.
    pub losses: Vec<f64>,
    /// Final mean squared error per target.
    pub final_losses: Vec<f64>,
}

struct Target {
    grid: EncodingGrid,
    noise: Vec<Tensor>,
    image: Tensor,
}

fn evaluate(params: &GeneratorParams, styles: &Styles, targets: &[Target], grad: Option<&mut Styles>) -> Result<Vec<f64>> {
    let mut per = Vec::with_capacity(targets.len());
    let mut scratch = grad.as_ref().map(|_| params.zeros_like());
    let mut acc = vec![vec![0.0; params.config.latent_dim]; params.config.style_layers()];
    for t in targets {
        let trace = synthesize(params, styles, &t.grid, &t.noise)?;
        let n = t.image.data.len() as f64;
        let diff: Vec<f64> = trace.output.data.iter().zip(&t.image.data).map(|(a, b)| a - b).collect();
        per.push(diff.iter().map(|d| d * d).sum::<f64>() / n);
        if let Some(s) = scratch.as_mut() {
            let k = 2.0 / (n * targets.len() as f64);
            let g = Tensor { data: diff.iter().map(|d| k * d).collect(), ..trace.output };
            for (a, b) in acc.iter_mut().zip(synthesize_backward(params, &trace, &g, s)) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
    }
    if let Some(g) = grad {
        *g = acc;
    }
    Ok(per)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Gradient descent on the mean L2 image loss w.r.t. per-layer latents,
/// generator frozen, starting from the mean mapped latent.
pub fn project(params: &GeneratorParams, targets: &[ImagePatch], cfg: &ProjectConfig) -> Result<Projection> {
    if targets.is_empty() {
        return Err(Error::invalid("projection needs at least one target"));
    }
    let prepared: Vec<Target> = targets
        .iter()
        .map(|img| {
            let grid = grid_for_output(params, &img.spec)?;
            let noise = noise_for_grid(&cfg.noise, &params.config, &grid)?;
            Ok(Target { grid, noise, image: img.to_tensor() })
        })
        .collect::<Result<_>>()?;
    let init = mean_latent(params, cfg.init_samples.max(1), cfg.init_seed);
    let mut styles = broadcast_styles(params, &init);
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![vec![0.0; init.len()]; styles.len()];
    let mut v = m.clone();
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    let mut grad = Styles::new();
    let mut initial = None;
    for step in 0..cfg.steps {
        let loss = mean(&evaluate(params, &styles, &prepared, Some(&mut grad))?);
        let first = *initial.get_or_insert(loss);
        if !loss.is_finite() || loss > 10.0 * first {
            return Err(Error::Diverged { step, loss, initial: first });
        }
        losses.push(loss);
        let t = (step + 1) as i32;
        for k in 0..styles.len() {
            for i in 0..styles[k].len() {
                let g = grad[k][i];
                styles[k][i] -= match cfg.optimizer {
                    Optimizer::Sgd => cfg.lr * g,
                    Optimizer::Adam => {
                        m[k][i] = b1 * m[k][i] + (1.0 - b1) * g;
                        v[k][i] = b2 * v[k][i] + (1.0 - b2) * g * g;
                        let mh = m[k][i] / (1.0 - libm::pow(b1, t as f64));
                        let vh = v[k][i] / (1.0 - libm::pow(b2, t as f64));
                        cfg.lr * mh / (libm::sqrt(vh) + eps)
                    }
                };
            }
        }
    }
    let final_losses = evaluate(params, &styles, &prepared, None)?;
    let last = mean(&final_losses);
    if let Some(first) = initial {
        if !last.is_finite() || last > 10.0 * first {
            return Err(Error::Diverged { step: cfg.steps, loss: last, initial: first });
        }
    }
    losses.push(last);
    if styles.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite latent after {} steps", cfg.steps)));
    }
    Ok(Projection { styles, losses, final_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SampleSpec;
    use crate::net::generator::{generate_with_styles, latent_from_seed, map_latent};
    use crate::net::params::GeneratorConfig;

    fn params() -> GeneratorParams {
        let cfg = GeneratorConfig { latent_dim: 8, mapping_layers: 2, widths: vec![8, 6, 4], n_pad: 3 };
        GeneratorParams::init(&cfg, 3).unwrap()
    }

    #[test]
    fn zero_steps_returns_the_mean_latent() {
        let p = params();
        let noise = NoisePolicy::constant(0, SampleSpec::full_frame(16));
        let target = generate_with_styles(&p, &broadcast_styles(&p, &latent_from_seed(1, 8)), &grid_for_output(&p, &SampleSpec::full_frame(16)).unwrap(), &noise).unwrap();
        let cfg = ProjectConfig::new(0, 0.1, noise);
        let r = project(&p, &[target], &cfg).unwrap();
        assert_eq!(r.styles, broadcast_styles(&p, &mean_latent(&p, cfg.init_samples, cfg.init_seed)));
        assert_eq!(r.losses.len(), 1);
    }

    #[test]
    fn reachable_target_is_recovered() {
        let p = params();
        let spec = SampleSpec::full_frame(16);
        let noise = NoisePolicy::constant(0, spec);
        let (w, _) = map_latent(&p, &latent_from_seed(5, 8));
        let target = generate_with_styles(&p, &broadcast_styles(&p, &w), &grid_for_output(&p, &spec).unwrap(), &noise).unwrap();
        let r = project(&p, &[target], &ProjectConfig::new(400, 0.05, noise)).unwrap();
        assert!(*r.losses.last().unwrap() <= 1e-4, "{:?}", &r.losses[r.losses.len() - 5..]);
        assert!(r.losses.last() < r.losses.first());
    }

    #[test]
    fn huge_step_size_diverges() {
        let p = params();
        let spec = SampleSpec::full_frame(8);
        let noise = NoisePolicy::constant(0, spec);
        // Start close to the target so that a wild step is a large relative increase.
        let cfg = ProjectConfig { optimizer: Optimizer::Sgd, ..ProjectConfig::new(50, 1e6, noise) };
        let mut w = mean_latent(&p, cfg.init_samples, cfg.init_seed);
        w[0] += 0.05;
        let target = generate_with_styles(&p, &broadcast_styles(&p, &w), &grid_for_output(&p, &spec).unwrap(), &noise).unwrap();
        assert!(matches!(project(&p, &[target], &cfg), Err(Error::Diverged { .. })));
    }
}
