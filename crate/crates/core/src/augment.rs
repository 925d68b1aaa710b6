//! Inter-scale consistency augmentations.
//!
//! A scale pair renders one region at `r` and `1.5·r` pixels. CutMix replaces
//! a rectangle of one rendering with the geometrically corresponding content
//! of the other; ChannelMix swaps whole colour planes. Both are linear in the
//! two inputs, so the trainer can push gradients back through them with
//! [`mix_backward`].

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::field::{ImagePatch, SampleSpec};
use crate::resample::{apply_taps, apply_taps_adjoint, AxisTaps};
use crate::rng::CounterRng;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Large-scale resolution for a small-scale resolution `r`: `1.5·r`.
pub fn large_resolution(r_small: usize) -> Result<usize> {
    if r_small % 2 != 0 {
        return Err(Error::invalid(format!("1.5 x {r_small} is not an integer resolution")));
    }
    Ok(r_small * 3 / 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalePair {
    pub small: ImagePatch,
    pub large: ImagePatch,
    pub shared_region: SampleSpec,
}

impl ScalePair {
    pub fn new(small: ImagePatch, large: ImagePatch) -> Result<Self> {
        let [a, b] = [small.spec.bounds(), large.spec.bounds()];
        let tol = 1e-9 * (1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > tol) {
            return Err(Error::invalid("scale pair members cover different regions"));
        }
        let shared_region = small.spec;
        Ok(ScalePair { small, large, shared_region })
    }
}

/// Pixel rectangle in the target image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixKind {
    CutMix { region: PixelRect },
    ChannelMix { mask: [bool; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixDirection {
    LargeIntoSmall,
    SmallIntoLarge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixPlan {
    pub kind: MixKind,
    pub direction: MixDirection,
}

/// How the two augmentations combine within one consistency step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixSchedule {
    /// CutMix with `cutmix_probability`, then ChannelMix with
    /// `channelmix_probability`, independently.
    Sequential,
    /// Exactly one of the two, CutMix chosen with `cutmix_probability`.
    OneOf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Range of the CutMix region area as a fraction of the target area.
    pub area_fraction: [f64; 2],
    pub cutmix_probability: f64,
    pub channelmix_probability: f64,
    pub schedule: MixSchedule,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            area_fraction: [0.25, 0.5],
            cutmix_probability: 0.5,
            channelmix_probability: 0.5,
            schedule: MixSchedule::Sequential,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.area_fraction;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(format!("area fraction range {:?} must satisfy 0 < lo <= hi <= 1", self.area_fraction)));
        }
        for p in [self.cutmix_probability, self.channelmix_probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

const NONTRIVIAL_MASKS: [[bool; 3]; 6] = [
    [true, false, false],
    [false, true, false],
    [false, false, true],
    [true, true, false],
    [true, false, true],
    [false, true, true],
];

fn draw_direction(rng: &mut CounterRng) -> MixDirection {
    if rng.bernoulli(0.5) {
        MixDirection::LargeIntoSmall
    } else {
        MixDirection::SmallIntoLarge
    }
}

fn draw_region(rng: &mut CounterRng, [w, h]: [usize; 2], [lo, hi]: [f64; 2]) -> PixelRect {
    let total = (w * h) as f64;
    let fits = |r: &PixelRect| {
        let f = r.area() as f64 / total;
        f >= lo - 1e-12 && f <= hi + 1e-12
    };
    let mut fallback = None;
    for _ in 0..64 {
        let a = rng.uniform_in(lo, hi);
        let fw = rng.uniform_in(a, 1.0);
        let width = (libm::round(fw * w as f64) as usize).clamp(1, w);
        let height = (libm::round(a * total / width as f64) as usize).clamp(1, h);
        let x = rng.below((w - width + 1) as u64) as usize;
        let y = rng.below((h - height + 1) as u64) as usize;
        let r = PixelRect { x, y, width, height };
        if fits(&r) {
            return r;
        }
        fallback.get_or_insert(r);
    }
    // Tiny targets may admit no rectangle in range; keep the closest attempt.
    fallback.unwrap_or(PixelRect { x: 0, y: 0, width: w, height: h })
}

fn draw_kind(rng: &mut CounterRng, cutmix: bool, target_shape: [usize; 2], cfg: &AugmentConfig) -> MixKind {
    if cutmix {
        MixKind::CutMix { region: draw_region(rng, target_shape, cfg.area_fraction) }
    } else {
        MixKind::ChannelMix { mask: NONTRIVIAL_MASKS[rng.below(6) as usize] }
    }
}

/// One plan: CutMix with probability `cutmix_probability`, else ChannelMix.
/// `target_shape` is `(width, height)` of the image that hosts the mix; the
/// region is drawn in its pixels.
pub fn draw_mix_plan(rng_seed: u64, target_shape: [usize; 2], cfg: &AugmentConfig) -> MixPlan {
    let mut rng = CounterRng::new(rng_seed);
    let direction = draw_direction(&mut rng);
    let cut = rng.bernoulli(cfg.cutmix_probability);
    MixPlan { kind: draw_kind(&mut rng, cut, target_shape, cfg), direction }
}

/// Plans for one consistency step according to `cfg.schedule`. The host
/// scale is drawn once and shared, so a sequential CutMix + ChannelMix
/// composes on the same target.
pub fn draw_mix_plans(rng_seed: u64, pair_shapes: [[usize; 2]; 2], cfg: &AugmentConfig) -> Vec<MixPlan> {
    let mut rng = CounterRng::new(rng_seed);
    let direction = draw_direction(&mut rng);
    let target_shape = match direction {
        MixDirection::LargeIntoSmall => pair_shapes[0],
        MixDirection::SmallIntoLarge => pair_shapes[1],
    };
    let kinds: Vec<bool> = match cfg.schedule {
        MixSchedule::Sequential => {
            let mut v = Vec::new();
            if rng.bernoulli(cfg.cutmix_probability) {
                v.push(true);
            }
            if rng.bernoulli(cfg.channelmix_probability) {
                v.push(false);
            }
            v
        }
        MixSchedule::OneOf => alloc::vec![rng.bernoulli(cfg.cutmix_probability)],
    };
    kinds.into_iter().map(|cut| MixPlan { kind: draw_kind(&mut rng, cut, target_shape, cfg), direction }).collect()
}

/// Taps that sample `source` at the pixel centers of `target` columns/rows
/// `range`, through the shared continuous coordinates.
fn region_taps(target: &SampleSpec, source: &SampleSpec, axis: usize, start: usize, len: usize) -> AxisTaps {
    let b_t = target.bounds();
    let b_s = source.bounds();
    let (t0, s0) = (b_t[2 * axis], b_s[2 * axis]);
    let (ts, ss) = (target.scale[axis], source.scale[axis]);
    AxisTaps::from_positions(
        source.resolution[axis],
        (start..start + len).map(|i| (t0 + ts * (i as f64 + 0.5) - s0) / ss - 0.5),
    )
}

fn check_region(region: &PixelRect, target: &SampleSpec) -> Result<()> {
    if region.x + region.width > target.resolution[0] || region.y + region.height > target.resolution[1] {
        return Err(Error::InvalidRegion(format!(
            "region {region:?} exceeds target {}x{}",
            target.resolution[0], target.resolution[1]
        )));
    }
    Ok(())
}

/// `(target, source)` roles for a direction: the target hosts the mix.
pub fn roles(direction: MixDirection) -> (usize, usize) {
    match direction {
        MixDirection::LargeIntoSmall => (0, 1),
        MixDirection::SmallIntoLarge => (1, 0),
    }
}

/// Tensor-level mix. `target` and `source` are `(3, H, W)` renderings with
/// their specs. Returns the mixed target.
pub fn mix_forward(
    kind: &MixKind,
    target: &Tensor,
    target_spec: &SampleSpec,
    source: &Tensor,
    source_spec: &SampleSpec,
) -> Result<Tensor> {
    let mut out = target.clone();
    let (w, h) = (target.width, target.height);
    match *kind {
        MixKind::CutMix { region } => {
            check_region(&region, target_spec)?;
            if region.area() == 0 {
                return Ok(out);
            }
            let tx = region_taps(target_spec, source_spec, 0, region.x, region.width);
            let ty = region_taps(target_spec, source_spec, 1, region.y, region.height);
            let patch = apply_taps(source, &ty, &tx);
            for c in 0..3 {
                for y in 0..region.height {
                    for x in 0..region.width {
                        out.data[c * h * w + (region.y + y) * w + region.x + x] = patch.at(c, y, x);
                    }
                }
            }
        }
        MixKind::ChannelMix { mask } => {
            if !mask.iter().any(|&m| m) {
                return Ok(out);
            }
            let tx = region_taps(target_spec, source_spec, 0, 0, w);
            let ty = region_taps(target_spec, source_spec, 1, 0, h);
            let resized = apply_taps(source, &ty, &tx);
            for (c, &m) in mask.iter().enumerate() {
                if m {
                    out.data[c * h * w..(c + 1) * h * w].copy_from_slice(resized.plane(c));
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`mix_forward`]: splits `grad` (w.r.t. the mixed target) into
/// gradients w.r.t. the original target and the source.
pub fn mix_backward(
    kind: &MixKind,
    grad: &Tensor,
    target_spec: &SampleSpec,
    source_spec: &SampleSpec,
) -> Result<(Tensor, Tensor)> {
    let (w, h) = (grad.width, grad.height);
    let [sw, sh] = source_spec.resolution;
    let mut g_target = grad.clone();
    match *kind {
        MixKind::CutMix { region } => {
            check_region(&region, target_spec)?;
            if region.area() == 0 {
                return Ok((g_target, Tensor::zeros(3, sh, sw)));
            }
            let mut g_patch = Tensor::zeros(3, region.height, region.width);
            for c in 0..3 {
                for y in 0..region.height {
                    for x in 0..region.width {
                        let i = c * h * w + (region.y + y) * w + region.x + x;
                        let j = g_patch.idx(c, y, x);
                        g_patch.data[j] = grad.data[i];
                        g_target.data[i] = 0.0;
                    }
                }
            }
            let tx = region_taps(target_spec, source_spec, 0, region.x, region.width);
            let ty = region_taps(target_spec, source_spec, 1, region.y, region.height);
            Ok((g_target, apply_taps_adjoint(&g_patch, &ty, &tx)))
        }
        MixKind::ChannelMix { mask } => {
            let mut g_resized = Tensor::zeros(3, h, w);
            for (c, &m) in mask.iter().enumerate() {
                if m {
                    let span = c * h * w..(c + 1) * h * w;
                    g_resized.data[span.clone()].copy_from_slice(&grad.data[span.clone()]);
                    g_target.data[span].iter_mut().for_each(|v| *v = 0.0);
                }
            }
            let tx = region_taps(target_spec, source_spec, 0, 0, w);
            let ty = region_taps(target_spec, source_spec, 1, 0, h);
            Ok((g_target, apply_taps_adjoint(&g_resized, &ty, &tx)))
        }
    }
}

fn mix_pair(pair: &ScalePair, plan: &MixPlan) -> Result<ImagePatch> {
    let (target, source) = match plan.direction {
        MixDirection::LargeIntoSmall => (&pair.small, &pair.large),
        MixDirection::SmallIntoLarge => (&pair.large, &pair.small),
    };
    let out = mix_forward(&plan.kind, &target.to_tensor(), &target.spec, &source.to_tensor(), &source.spec)?;
    ImagePatch::from_tensor(&out, target.spec)
}

/// Replace `plan`'s region of the target with the resized counterpart crop.
pub fn cutmix(pair: &ScalePair, plan: &MixPlan) -> Result<ImagePatch> {
    if !matches!(plan.kind, MixKind::CutMix { .. }) {
        return Err(Error::invalid("cutmix needs a CutMix plan"));
    }
    mix_pair(pair, plan)
}

/// Replace the masked colour planes of the target with the resized counterpart's.
pub fn channelmix(pair: &ScalePair, plan: &MixPlan) -> Result<ImagePatch> {
    if !matches!(plan.kind, MixKind::ChannelMix { .. }) {
        return Err(Error::invalid("channelmix needs a ChannelMix plan"));
    }
    mix_pair(pair, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_field_with, sample_field};
    use crate::resample::bilinear_resize;
    use proptest::prelude::*;

    fn pair(seed_a: u64, seed_b: u64, r: usize) -> ScalePair {
        let fa = make_field_with(seed_a, 4, 1.5).unwrap();
        let fb = make_field_with(seed_b, 4, 1.5).unwrap();
        let small = sample_field(&fa, &SampleSpec::full_frame(r)).unwrap();
        let large = sample_field(&fb, &SampleSpec::full_frame(large_resolution(r).unwrap())).unwrap();
        ScalePair::new(small, large).unwrap()
    }

    fn cut(region: PixelRect) -> MixPlan {
        MixPlan { kind: MixKind::CutMix { region }, direction: MixDirection::LargeIntoSmall }
    }

    #[test]
    fn full_region_is_the_resized_counterpart() {
        let p = pair(1, 2, 16);
        let out = cutmix(&p, &cut(PixelRect { x: 0, y: 0, width: 16, height: 16 })).unwrap();
        let resized = ImagePatch::from_tensor(&bilinear_resize(&p.large.to_tensor(), 16, 16), p.small.spec).unwrap();
        assert!(out.max_abs_diff(&resized) < 1e-12);
    }

    #[test]
    fn empty_region_is_identity() {
        let p = pair(1, 2, 16);
        assert_eq!(cutmix(&p, &cut(PixelRect { x: 3, y: 3, width: 0, height: 0 })).unwrap(), p.small);
    }

    #[test]
    fn region_changes_exactly_its_pixels() {
        let p = pair(3, 4, 32);
        let region = PixelRect { x: 8, y: 8, width: 16, height: 16 };
        let out = cutmix(&p, &cut(region)).unwrap();
        let mut changed = 0;
        for y in 0..32 {
            for x in 0..32 {
                let differs = (0..3).any(|c| out.get(y, x, c) != p.small.get(y, x, c));
                if differs {
                    changed += 1;
                    assert!(region.contains(x, y));
                }
            }
        }
        assert_eq!(changed, 256);
    }

    #[test]
    fn out_of_bounds_region_is_rejected() {
        let p = pair(1, 2, 16);
        let r = cutmix(&p, &cut(PixelRect { x: 10, y: 0, width: 8, height: 4 }));
        assert!(matches!(r, Err(Error::InvalidRegion(_))));
    }

    #[test]
    fn channel_masks() {
        let p = pair(5, 6, 16);
        let plan = |mask| MixPlan { kind: MixKind::ChannelMix { mask }, direction: MixDirection::LargeIntoSmall };
        assert_eq!(channelmix(&p, &plan([false; 3])).unwrap(), p.small);
        let full = channelmix(&p, &plan([true; 3])).unwrap();
        let resized = bilinear_resize(&p.large.to_tensor(), 16, 16);
        let red = channelmix(&p, &plan([true, false, false])).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                for c in 0..3 {
                    assert!((full.get(y, x, c) - resized.at(c, y, x)).abs() < 1e-12);
                }
                assert_eq!(red.get(y, x, 0), full.get(y, x, 0));
                assert_eq!(red.get(y, x, 1), p.small.get(y, x, 1));
                assert_eq!(red.get(y, x, 2), p.small.get(y, x, 2));
            }
        }
    }

    #[test]
    fn mixing_renderings_of_one_image_barely_changes_it() {
        let f = make_field_with(9, 6, 1.0).unwrap();
        let small = sample_field(&f, &SampleSpec::full_frame(32)).unwrap();
        let large = sample_field(&f, &SampleSpec::full_frame(48)).unwrap();
        let p = ScalePair::new(small.clone(), large.clone()).unwrap();
        for seed in 0..20 {
            for plan in draw_mix_plans(seed, [[32, 32], [48, 48]], &AugmentConfig::default()) {
                let (out, orig) = match plan.direction {
                    MixDirection::LargeIntoSmall => (mix_pair(&p, &plan).unwrap(), &small),
                    MixDirection::SmallIntoLarge => (mix_pair(&p, &plan).unwrap(), &large),
                };
                assert!(out.max_abs_diff(orig) <= 0.02, "{plan:?}: {}", out.max_abs_diff(orig));
            }
        }
    }

    #[test]
    fn degenerate_selection_probability() {
        let cfg = AugmentConfig { cutmix_probability: 1.0, ..AugmentConfig::default() };
        for s in 0..200 {
            assert!(matches!(draw_mix_plan(s, [16, 16], &cfg).kind, MixKind::CutMix { .. }));
        }
        let cfg = AugmentConfig { cutmix_probability: 0.0, ..AugmentConfig::default() };
        for s in 0..200 {
            match draw_mix_plan(s, [16, 16], &cfg).kind {
                MixKind::ChannelMix { mask } => assert!(mask.iter().any(|&m| m) && !mask.iter().all(|&m| m)),
                k => panic!("{k:?}"),
            }
        }
    }

    #[test]
    fn region_areas_stay_in_range() {
        let cfg = AugmentConfig { cutmix_probability: 1.0, ..AugmentConfig::default() };
        let (mut lo, mut hi) = (1.0f64, 0.0f64);
        for s in 0..10_000 {
            let plan = draw_mix_plan(s, [32, 32], &cfg);
            assert_eq!(plan, draw_mix_plan(s, [32, 32], &cfg));
            let MixKind::CutMix { region } = plan.kind else { unreachable!() };
            let f = region.area() as f64 / 1024.0;
            lo = lo.min(f);
            hi = hi.max(f);
        }
        assert!(lo >= 0.25 && hi <= 0.5, "[{lo}, {hi}]");
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = draw_mix_plan(4, [16, 16], &AugmentConfig::default());
        let s = serde_json::to_string(&plan).unwrap();
        assert_eq!(serde_json::from_str::<MixPlan>(&s).unwrap(), plan);
    }

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
    }

    proptest! {
        #[test]
        fn backward_is_the_adjoint(seed in 0u64..500, small_into_large in any::<bool>()) {
            let mut rng = CounterRng::new(seed);
            let (ts, ss) = if small_into_large {
                (SampleSpec::full_frame(12), SampleSpec::full_frame(8))
            } else {
                (SampleSpec::full_frame(8), SampleSpec::full_frame(12))
            };
            let rand = |rng: &mut CounterRng, s: &SampleSpec| {
                let [w, h] = s.resolution;
                Tensor::from_vec(3, h, w, (0..3 * w * h).map(|_| rng.normal()).collect())
            };
            let t = rand(&mut rng, &ts);
            let s = rand(&mut rng, &ss);
            let g = rand(&mut rng, &ts);
            let dir = if small_into_large { MixDirection::SmallIntoLarge } else { MixDirection::LargeIntoSmall };
            for plan in draw_mix_plans(seed, [[8, 8], [12, 12]], &AugmentConfig { cutmix_probability: 1.0, channelmix_probability: 1.0, ..AugmentConfig::default() }) {
                if plan.direction != dir { continue; }
                let y = mix_forward(&plan.kind, &t, &ts, &s, &ss).unwrap();
                let (gt, gs) = mix_backward(&plan.kind, &g, &ts, &ss).unwrap();
                let lhs = dot(&y, &g);
                let rhs = dot(&t, &gt) + dot(&s, &gs);
                prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
            }
        }

        #[test]
        fn outputs_stay_in_range(seed in 0u64..200) {
            let p = pair(seed, seed + 1, 16);
            let plan = draw_mix_plan(seed, [16, 16], &AugmentConfig::default());
            let p2 = ScalePair::new(p.small.clone(), p.large.clone()).unwrap();
            let out = mix_pair(&p2, &plan).unwrap();
            prop_assert!(out.data.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
