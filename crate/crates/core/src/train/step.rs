//! The training loop: one discriminator update (with lazy R1) followed by one
//! generator update per step, plain gradient descent.
//!
//! With probability `sc_probability` a step renders every latent at both
//! `r_small` and `r_large = 1.5·r_small` over one region. In `Augment` mode
//! the pair is CutMix/ChannelMix-ed before the discriminator sees it; in `L1`
//! mode the generator pays `λ·|resize(large) − small|` instead. Other steps
//! render each latent once, at a randomly chosen one of the two scales.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::augment::{draw_mix_plans, mix_backward, mix_forward, roles, AugmentConfig, MixPlan};
use crate::field::{make_field_with, sample_field, CenterPolicy, ContinuousField, SampleSpec, SpecDistribution};
use crate::net::generator::{broadcast_styles, latent_from_seed, map_latent, mapping_backward, synthesize, synthesize_backward, MappingTrace, SynthTrace};
use crate::net::noise::{noise_for_grid, NoisePolicy};
use crate::net::params::{GeneratorConfig, GeneratorParams};
use crate::net::stitch::grid_for_output;
use crate::resample::{bilinear_resize, bilinear_resize_adjoint};
use crate::rng::{hash_words, CounterRng};
use crate::tensor::Tensor;
use crate::train::disc::{disc_batch, r1_penalty, DiscConfig, DiscParams};
use crate::train::loss::{d_loss, d_loss_grad, g_loss, g_loss_grad, l1_with_grad};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScMode {
    None,
    Augment,
    L1 { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscConfig,
    pub r_small: usize,
    pub batch: usize,
    pub steps: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub r1_gamma: f64,
    /// R1 is evaluated every this many steps and scaled by it.
    pub r1_interval: usize,
    pub sc_probability: f64,
    pub sc_mode: ScMode,
    pub partial_training: bool,
    pub scale_fraction_range: [f64; 2],
    pub augment: AugmentConfig,
    /// Also mix the real pairs in `Augment` steps.
    pub augment_reals: bool,
    pub field_count: usize,
    pub field_terms: usize,
    pub field_max_frequency: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            generator: GeneratorConfig::toy(),
            discriminator: DiscConfig::toy(),
            r_small: 16,
            batch: 8,
            steps: 500,
            lr_g: 2e-3,
            lr_d: 2e-3,
            r1_gamma: 1.0,
            r1_interval: 16,
            sc_probability: 0.0,
            sc_mode: ScMode::None,
            partial_training: false,
            scale_fraction_range: [0.6, 1.1],
            augment: AugmentConfig::default(),
            augment_reals: false,
            field_count: 64,
            field_terms: 4,
            field_max_frequency: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn r_large(&self) -> usize {
        self.r_small * 3 / 2
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.augment.validate()?;
        let f = 1usize << self.generator.levels();
        if self.r_small % 2 != 0 {
            return Err(Error::invalid(format!("r_large = 1.5 x {} is not an integer", self.r_small)));
        }
        for r in [self.r_small, self.r_large()] {
            if r % f != 0 {
                return Err(Error::ShapeUnderflow {
                    level: self.generator.levels(),
                    size: r as i64,
                    detail: format!("training resolution {r} is not a multiple of 2^L = {f}"),
                });
            }
        }
        if self.r_small < self.discriminator.min_input() {
            return Err(Error::invalid(format!(
                "r_small {} is below the discriminator minimum {}",
                self.r_small,
                self.discriminator.min_input()
            )));
        }
        if !(0.0..=1.0).contains(&self.sc_probability) {
            return Err(Error::invalid("sc_probability must lie in [0, 1]"));
        }
        if (self.sc_probability == 0.0) != (self.sc_mode == ScMode::None) {
            return Err(Error::invalid("sc_probability must be 0 exactly when sc_mode is none"));
        }
        if let ScMode::L1 { lambda } = self.sc_mode {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::invalid("L1 lambda must be finite and >= 0"));
            }
        }
        if self.batch == 0 || self.field_count == 0 || self.r1_interval == 0 {
            return Err(Error::invalid("batch, field_count and r1_interval must be >= 1"));
        }
        let [lo, hi] = self.scale_fraction_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid("scale fraction range must satisfy 0 < lo <= hi"));
        }
        Ok(())
    }

    fn spec_distribution(&self) -> SpecDistribution {
        if self.partial_training {
            SpecDistribution {
                scale_fraction: (self.scale_fraction_range[0], self.scale_fraction_range[1]),
                center: CenterPolicy::WithinFrame,
                resolutions: (self.r_small, self.r_large()),
            }
        } else {
            SpecDistribution::full_frame((self.r_small, self.r_large()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub g_loss: f64,
    pub d_loss: f64,
    pub r1: Option<f64>,
    pub l1: Option<f64>,
    pub scale_pair: bool,
}

/// One latent's rendering(s) in a step, at one or both scales.
struct Rendered {
    styles_trace: MappingTrace,
    traces: Vec<(SampleSpec, SynthTrace)>,
    plans: Vec<MixPlan>,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: GeneratorParams,
    pub discriminator: DiscParams,
    pub step: u64,
    fields: Vec<ContinuousField>,
}

const STEP_TAG: u64 = 0x5354_4550;

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = GeneratorParams::init(&config.generator, config.seed)?;
        let discriminator = DiscParams::init(&config.discriminator, hash_words(&[config.seed, 1]))?;
        Self::with_params(config, generator, discriminator)
    }

    pub fn with_params(config: TrainConfig, generator: GeneratorParams, discriminator: DiscParams) -> Result<Self> {
        config.validate()?;
        if generator.config != config.generator {
            return Err(Error::ShapeMismatch {
                what: "generator architecture",
                expected: format!("{:?}", config.generator),
                actual: format!("{:?}", generator.config),
            });
        }
        let fields = (0..config.field_count as u64)
            .map(|i| make_field_with(hash_words(&[config.seed, 2, i]), config.field_terms, config.field_max_frequency))
            .collect::<Result<_>>()?;
        Ok(Trainer { config, generator, discriminator, step: 0, fields })
    }

    pub fn fields(&self) -> &[ContinuousField] {
        &self.fields
    }

    fn render(&self, z_seed: u64, noise: &NoisePolicy, specs: &[SampleSpec]) -> Result<Rendered> {
        let g = &self.generator;
        let (w, styles_trace) = map_latent(g, &latent_from_seed(z_seed, g.config.latent_dim));
        let styles = broadcast_styles(g, &w);
        let traces = specs
            .iter()
            .map(|spec| {
                let grid = grid_for_output(g, spec)?;
                let maps = noise_for_grid(noise, &g.config, &grid)?;
                Ok((*spec, synthesize(g, &styles, &grid, &maps)?))
            })
            .collect::<Result<_>>()?;
        Ok(Rendered { styles_trace, traces, plans: Vec::new() })
    }

    /// Apply `plans` to a pair `[small, large]`, returning the images the
    /// discriminator sees.
    fn mixed(plans: &[MixPlan], imgs: [&Tensor; 2], specs: [&SampleSpec; 2]) -> Result<[Tensor; 2]> {
        let mut out = [imgs[0].clone(), imgs[1].clone()];
        for plan in plans {
            let (t, s) = roles(plan.direction);
            out[t] = mix_forward(&plan.kind, &out[t], specs[t], imgs[s], specs[s])?;
        }
        Ok(out)
    }

    /// Back through [`Self::mixed`]: gradients w.r.t. the unmixed pair.
    fn mixed_backward(plans: &[MixPlan], grads: [Tensor; 2], specs: [&SampleSpec; 2]) -> Result<[Tensor; 2]> {
        let [mut g0, mut g1] = grads;
        for plan in plans.iter().rev() {
            let (t, _) = roles(plan.direction);
            let target_grad = if t == 0 { &g0 } else { &g1 };
            let (gt, gs) = mix_backward(&plan.kind, target_grad, specs[t], specs[1 - t])?;
            if t == 0 {
                g0 = gt;
                g1.add_assign(&gs);
            } else {
                g1 = gt;
                g0.add_assign(&gs);
            }
        }
        Ok([g0, g1])
    }

    /// One discriminator update then one generator update.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let cfg = self.config.clone();
        let step_seed = hash_words(&[cfg.seed, STEP_TAG, self.step]);
        let mut rng = CounterRng::new(step_seed);
        let sc = cfg.sc_mode != ScMode::None && rng.bernoulli(cfg.sc_probability);
        let dist = cfg.spec_distribution();
        let (rs, rl) = (cfg.r_small, cfg.r_large());

        let mut renders = Vec::with_capacity(cfg.batch);
        let mut reals: Vec<Tensor> = Vec::new();
        let mut fakes: Vec<Tensor> = Vec::new();
        for _ in 0..cfg.batch {
            let field = &self.fields[rng.below(cfg.field_count as u64) as usize];
            let z_seed = rng.next_u64();
            let noise_seed = rng.next_u64();
            let large = dist.draw_region(&mut rng, rl);
            let small = large.with_resolution([rs, rs]);
            let noise = NoisePolicy::grid_sample(noise_seed, large);
            let specs: Vec<SampleSpec> = if sc {
                vec![small, large]
            } else if rng.bernoulli(0.5) {
                vec![small]
            } else {
                vec![large]
            };
            let mut r = self.render(z_seed, &noise, &specs)?;
            let real_imgs: Vec<Tensor> =
                specs.iter().map(|s| sample_field(field, s).map(|p| p.to_tensor())).collect::<Result<_>>()?;
            if sc && cfg.sc_mode == ScMode::Augment {
                r.plans = draw_mix_plans(rng.next_u64(), [[rs, rs], [rl, rl]], &cfg.augment);
                let pair = [&r.traces[0].1.output, &r.traces[1].1.output];
                fakes.extend(Self::mixed(&r.plans, pair, [&small, &large])?);
                if cfg.augment_reals {
                    reals.extend(Self::mixed(&r.plans, [&real_imgs[0], &real_imgs[1]], [&small, &large])?);
                } else {
                    reals.extend(real_imgs);
                }
            } else {
                fakes.extend(r.traces.iter().map(|(_, t)| t.output.clone()));
                reals.extend(real_imgs);
            }
            renders.push(r);
        }

        // Discriminator.
        let (real_scores, _, mut d_grads) = disc_batch(&self.discriminator, &reals, |s| d_loss_grad(s, &[]).0)?;
        let (fake_scores, _, fake_grads) = disc_batch(&self.discriminator, &fakes, |s| d_loss_grad(&[], s).1)?;
        let d = d_loss(&real_scores, &fake_scores).map_err(|e| diag(e, step_seed))?;
        for (a, b) in d_grads.iter_mut().zip(fake_grads) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        let mut r1 = None;
        if cfg.r1_gamma > 0.0 && self.step % cfg.r1_interval as u64 == 0 {
            let (v, g) = r1_penalty(&self.discriminator, &reals, cfg.r1_gamma)?;
            let k = cfg.r1_interval as f64;
            for (a, b) in d_grads.iter_mut().zip(g) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += k * y);
            }
            r1 = Some(v);
        }
        self.discriminator.add_scaled(&d_grads, -cfg.lr_d);

        // Generator.
        let (fake_scores, fake_in_grads, _) = disc_batch(&self.discriminator, &fakes, g_loss_grad)?;
        let mut g = g_loss(&fake_scores).map_err(|e| diag(e, step_seed))?;
        let mut grads = self.generator.zeros_like();
        let mut l1_total = None;
        let mut in_grads = fake_in_grads.into_iter();
        for r in &renders {
            let mut out_grads: Vec<Tensor> = Vec::with_capacity(r.traces.len());
            for _ in 0..r.traces.len() {
                out_grads.push(in_grads.next().ok_or_else(|| Error::Numeric("gradient bookkeeping".into()))?);
            }
            if sc {
                let specs = [&r.traces[0].0, &r.traces[1].0];
                if cfg.sc_mode == ScMode::Augment {
                    let g1 = out_grads.pop().unwrap();
                    let g0 = out_grads.pop().unwrap();
                    out_grads = Vec::from(Self::mixed_backward(&r.plans, [g0, g1], specs)?);
                }
                if let ScMode::L1 { lambda } = cfg.sc_mode {
                    let (small, large) = (&r.traces[0].1.output, &r.traces[1].1.output);
                    let down = bilinear_resize(large, small.height, small.width);
                    let (l, gl) = l1_with_grad(&small.data, &down.data);
                    let k = lambda / cfg.batch as f64;
                    g += k * l;
                    *l1_total.get_or_insert(0.0) += l / cfg.batch as f64;
                    let gs = Tensor { data: gl.iter().map(|v| k * v).collect(), ..*small };
                    let gd = Tensor { data: gl.iter().map(|v| -k * v).collect(), ..down };
                    out_grads[0].add_assign(&gs);
                    out_grads[1].add_assign(&bilinear_resize_adjoint(&gd, large.height, large.width));
                }
            }
            let mut g_w = vec![0.0; cfg.generator.latent_dim];
            for ((_, t), og) in r.traces.iter().zip(&out_grads) {
                for gs in synthesize_backward(&self.generator, t, og, &mut grads) {
                    g_w.iter_mut().zip(gs).for_each(|(a, b)| *a += b);
                }
            }
            mapping_backward(&self.generator, &r.styles_trace, &g_w, &mut grads);
        }
        if !g.is_finite() {
            return Err(diag(Error::Numeric(format!("non-finite generator loss {g}")), step_seed));
        }
        self.generator.add_scaled(&grads, -cfg.lr_g);
        self.generator.quantize();

        let record = StepRecord { step: self.step, g_loss: g, d_loss: d, r1, l1: l1_total, scale_pair: sc };
        self.step += 1;
        Ok(record)
    }
}

fn diag(e: Error, step_seed: u64) -> Error {
    Error::Numeric(format!("{e} (batch seed {step_seed:#018x})"))
}

/// Trailing means over `window` values, for judging noisy loss curves.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() - window + 1);
    let mut sum: f64 = values[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..values.len() {
        sum += values[i] - values[i - window];
        out.push(sum / window as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainConfig {
        TrainConfig {
            generator: GeneratorConfig { latent_dim: 8, mapping_layers: 1, widths: vec![8, 6, 4], n_pad: 3 },
            discriminator: DiscConfig { widths: vec![4, 6, 8] },
            batch: 2,
            steps: 4,
            field_count: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn probability_and_mode_must_agree() {
        let c = TrainConfig { sc_probability: 0.4, ..small_config() };
        assert!(c.validate().is_err());
        let c = TrainConfig { sc_mode: ScMode::Augment, ..small_config() };
        assert!(c.validate().is_err());
        assert!(TrainConfig { r_small: 18, ..small_config() }.validate().is_err());
    }

    #[test]
    fn zero_probability_never_pairs() {
        let mut t = Trainer::new(small_config()).unwrap();
        for _ in 0..6 {
            assert!(!t.train_step().unwrap().scale_pair);
        }
    }

    #[test]
    fn runs_are_reproducible() {
        for mode in [ScMode::None, ScMode::Augment, ScMode::L1 { lambda: 0.5 }] {
            let p = if mode == ScMode::None { 0.0 } else { 1.0 };
            let c = TrainConfig { sc_mode: mode, sc_probability: p, partial_training: true, ..small_config() };
            let run = || {
                let mut t = Trainer::new(c.clone()).unwrap();
                let recs: Vec<StepRecord> = (0..3).map(|_| t.train_step().unwrap()).collect();
                (recs, t.generator)
            };
            let (a, ga) = run();
            let (b, gb) = run();
            assert_eq!(a, b);
            assert_eq!(ga, gb);
            assert!(a.iter().all(|r| r.g_loss.is_finite() && r.d_loss.is_finite()));
            assert_eq!(a[0].r1.is_some(), true);
            assert_eq!(a[1].scale_pair, p == 1.0);
        }
    }

    #[test]
    fn moving_average_windows() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), [1.5, 2.5, 3.5]);
        assert!(moving_average(&[1.0], 2).is_empty());
    }
}
