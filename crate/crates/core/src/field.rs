//! Procedural continuous image space.
//!
//! A [`ContinuousField`] is a finite sum of RGB-weighted sinusoids, so it can
//! be evaluated at any coordinate and resampled at any scale. It plays the
//! role of a real photograph that can be cropped and resized without loss,
//! which makes it both the training data and the ground truth for geometry
//! tests.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::rng::{hash_words, unit_f64, CounterRng};
use crate::tensor::Tensor;
use crate::{Error, Result, FULL_FRAME_EXTENT};

/// The sampling tuple: where (center), how finely (scale, continuous-space
/// distance per pixel) and how many pixels (resolution).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub center: [f64; 2],
    pub scale: [f64; 2],
    pub resolution: [usize; 2],
}

impl SampleSpec {
    pub fn new(center: [f64; 2], scale: [f64; 2], resolution: [usize; 2]) -> Result<Self> {
        let spec = SampleSpec { center, scale, resolution };
        spec.validate()?;
        Ok(spec)
    }

    /// Square spec covering `extent × extent` around `center` at `resolution` pixels.
    pub fn square(center: [f64; 2], extent: f64, resolution: usize) -> Self {
        let s = extent / resolution as f64;
        SampleSpec { center, scale: [s, s], resolution: [resolution, resolution] }
    }

    /// The full frame (`2 × 2` around the origin) at `resolution` pixels.
    pub fn full_frame(resolution: usize) -> Self {
        Self::square([0.0, 0.0], FULL_FRAME_EXTENT, resolution)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return Err(Error::invalid(format!("resolution must be >= 1, got {:?}", self.resolution)));
        }
        if !(self.scale[0] > 0.0 && self.scale[1] > 0.0) || !self.scale.iter().all(|s| s.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive and finite, got {:?}", self.scale)));
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid(format!("center must be finite, got {:?}", self.center)));
        }
        Ok(())
    }

    /// `(w, h) = (r_x·s_x, r_y·s_y)`.
    pub fn extent(&self) -> [f64; 2] {
        [self.resolution[0] as f64 * self.scale[0], self.resolution[1] as f64 * self.scale[1]]
    }

    /// Continuous x-coordinate of pixel column `i` (may be negative or past
    /// the end for padding). Computed directly from the index so that
    /// coordinates never accumulate drift.
    #[inline]
    pub fn pixel_x(&self, i: f64) -> f64 {
        self.center[0] + self.scale[0] * (i + 0.5) - self.extent()[0] / 2.0
    }

    #[inline]
    pub fn pixel_y(&self, j: f64) -> f64 {
        self.center[1] + self.scale[1] * (j + 0.5) - self.extent()[1] / 2.0
    }

    /// Same region, different resolution.
    pub fn with_resolution(&self, resolution: [usize; 2]) -> Self {
        let [w, h] = self.extent();
        SampleSpec {
            center: self.center,
            scale: [w / resolution[0] as f64, h / resolution[1] as f64],
            resolution,
        }
    }

    /// Continuous bounds `[x0, x1, y0, y1]` of the sampled rectangle.
    pub fn bounds(&self) -> [f64; 4] {
        let [w, h] = self.extent();
        [self.center[0] - w / 2.0, self.center[0] + w / 2.0, self.center[1] - h / 2.0, self.center[1] + h / 2.0]
    }
}

/// An `H × W × 3` image with values in `[-1, 1]`, tied to the spec it depicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePatch {
    /// Row-major `(y, x, channel)`.
    pub data: Vec<f64>,
    pub spec: SampleSpec,
}

impl ImagePatch {
    pub fn width(&self) -> usize {
        self.spec.resolution[0]
    }

    pub fn height(&self) -> usize {
        self.spec.resolution[1]
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width() + x) * 3 + c]
    }

    pub fn from_tensor(t: &Tensor, spec: SampleSpec) -> Result<Self> {
        if t.channels != 3 || [t.width, t.height] != spec.resolution {
            return Err(Error::ShapeMismatch {
                what: "image patch",
                expected: format!("3x{}x{}", spec.resolution[1], spec.resolution[0]),
                actual: format!("{}x{}x{}", t.channels, t.height, t.width),
            });
        }
        let mut data = Vec::with_capacity(t.data.len());
        for y in 0..t.height {
            for x in 0..t.width {
                for c in 0..3 {
                    data.push(t.at(c, y, x));
                }
            }
        }
        Ok(ImagePatch { data, spec })
    }

    pub fn to_tensor(&self) -> Tensor {
        let (h, w) = (self.height(), self.width());
        let mut t = Tensor::zeros(3, h, w);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let i = t.idx(c, y, x);
                    t.data[i] = self.get(y, x, c);
                }
            }
        }
        t
    }

    pub fn max_abs_diff(&self, other: &ImagePatch) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "patch sizes differ");
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Mean squared difference.
    pub fn mse(&self, other: &ImagePatch) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "patch sizes differ");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / self.data.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTerm {
    pub amplitude: f64,
    /// Cycles per unit along x and y.
    pub frequency: [f64; 2],
    pub phase: f64,
    pub channel_weights: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousField {
    pub seed: u64,
    pub term_count: usize,
    pub terms: Vec<FieldTerm>,
}

/// Default frequency cap in cycles per unit.
pub const DEFAULT_MAX_FREQUENCY: f64 = 4.0;

/// Field with the default frequency cap.
pub fn make_field(seed: u64, term_count: usize) -> Result<ContinuousField> {
    make_field_with(seed, term_count, DEFAULT_MAX_FREQUENCY)
}

/// Deterministic field of `term_count` sinusoids with `|frequency| ≤ max_frequency`.
///
/// Amplitudes are rescaled so that `Σ_k a_k·|w_kc| ≤ 1` for every channel,
/// which bounds every evaluation to `[-1, 1]`.
pub fn make_field_with(seed: u64, term_count: usize, max_frequency: f64) -> Result<ContinuousField> {
    if term_count == 0 {
        return Err(Error::invalid("term_count must be >= 1"));
    }
    if !(max_frequency >= 0.0 && max_frequency.is_finite()) {
        return Err(Error::invalid(format!("max_frequency must be finite and >= 0, got {max_frequency}")));
    }
    let draw = |k: usize, slot: u64| unit_f64(hash_words(&[seed, k as u64, slot]));
    let mut terms: Vec<FieldTerm> = (0..term_count)
        .map(|k| {
            let angle = TAU * draw(k, 0);
            let magnitude = max_frequency * draw(k, 1);
            FieldTerm {
                amplitude: 0.2 + draw(k, 2),
                frequency: [magnitude * libm::cos(angle), magnitude * libm::sin(angle)],
                phase: TAU * draw(k, 3),
                channel_weights: [2.0 * draw(k, 4) - 1.0, 2.0 * draw(k, 5) - 1.0, 2.0 * draw(k, 6) - 1.0],
            }
        })
        .collect();
    let worst = (0..3)
        .map(|c| terms.iter().map(|t| t.amplitude * t.channel_weights[c].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if worst > 0.0 {
        for t in &mut terms {
            t.amplitude /= worst;
        }
    }
    Ok(ContinuousField { seed, term_count, terms })
}

impl ContinuousField {
    /// A field that evaluates to `value` on every channel everywhere.
    pub fn constant(value: f64) -> Self {
        ContinuousField {
            seed: 0,
            term_count: 1,
            terms: alloc::vec![FieldTerm {
                amplitude: value,
                frequency: [0.0, 0.0],
                phase: core::f64::consts::FRAC_PI_2,
                channel_weights: [1.0, 1.0, 1.0],
            }],
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for t in &self.terms {
            let s = t.amplitude * libm::sin(TAU * (t.frequency[0] * x + t.frequency[1] * y) + t.phase);
            for (o, w) in out.iter_mut().zip(t.channel_weights) {
                *o += s * w;
            }
        }
        out.map(|v| v.clamp(-1.0, 1.0))
    }

    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|t| libm::hypot(t.frequency[0], t.frequency[1])).fold(0.0, f64::max)
    }
}

/// Sample the field at the pixel centers of `spec`.
pub fn sample_field(field: &ContinuousField, spec: &SampleSpec) -> Result<ImagePatch> {
    spec.validate()?;
    let [rx, ry] = spec.resolution;
    let mut data = Vec::with_capacity(rx * ry * 3);
    for j in 0..ry {
        let y = spec.pixel_y(j as f64);
        for i in 0..rx {
            data.extend_from_slice(&field.eval(spec.pixel_x(i as f64), y));
        }
    }
    Ok(ImagePatch { data, spec: *spec })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CenterPolicy {
    Fixed([f64; 2]),
    /// Crops smaller than the frame stay inside it; larger crops cover it.
    WithinFrame,
}

/// Distribution over sampled regions: the crop policy for partial training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecDistribution {
    /// Crop extent as a fraction of the full frame.
    pub scale_fraction: (f64, f64),
    pub center: CenterPolicy,
    /// `(r_small, r_large)`.
    pub resolutions: (usize, usize),
}

impl SpecDistribution {
    pub fn new(resolutions: (usize, usize)) -> Self {
        SpecDistribution { scale_fraction: (0.6, 1.1), center: CenterPolicy::WithinFrame, resolutions }
    }

    pub fn full_frame(resolutions: (usize, usize)) -> Self {
        SpecDistribution { scale_fraction: (1.0, 1.0), center: CenterPolicy::Fixed([0.0, 0.0]), resolutions }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_fraction;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid(format!("scale fraction range must satisfy 0 < lo <= hi, got {:?}", self.scale_fraction)));
        }
        if self.resolutions.0 == 0 || self.resolutions.1 == 0 {
            return Err(Error::invalid("resolutions must be >= 1"));
        }
        Ok(())
    }

    /// Draw one region as a spec at `resolution`.
    pub fn draw_region(&self, rng: &mut CounterRng, resolution: usize) -> SampleSpec {
        let (lo, hi) = self.scale_fraction;
        let fraction = if hi > lo { rng.uniform_in(lo, hi) } else { lo };
        let extent = FULL_FRAME_EXTENT * fraction;
        let center = match self.center {
            CenterPolicy::Fixed(c) => c,
            CenterPolicy::WithinFrame => {
                let slack = (FULL_FRAME_EXTENT - extent).abs() / 2.0;
                [rng.uniform_in(-slack, slack), rng.uniform_in(-slack, slack)]
            }
        };
        SampleSpec::square(center, extent, resolution)
    }
}

/// One real sample: the same region of one field at both resolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSample {
    pub field_seed: u64,
    pub small: ImagePatch,
    pub large: ImagePatch,
}

/// Draw one region per field seed and sample it at both resolutions.
pub fn sample_batch(
    fields: &[ContinuousField],
    spec_sampler: &SpecDistribution,
    rng_seed: u64,
) -> Result<Vec<RealSample>> {
    if fields.is_empty() {
        return Err(Error::invalid("field seed list is empty"));
    }
    spec_sampler.validate()?;
    let mut rng = CounterRng::new(rng_seed);
    fields
        .iter()
        .map(|field| {
            let small_spec = spec_sampler.draw_region(&mut rng, spec_sampler.resolutions.0);
            let large_spec = small_spec.with_resolution([spec_sampler.resolutions.1; 2]);
            Ok(RealSample {
                field_seed: field.seed,
                small: sample_field(field, &small_spec)?,
                large: sample_field(field, &large_spec)?,
            })
        })
        .collect()
}

/// Convenience wrapper building fields from seeds.
pub fn sample_batch_from_seeds(
    field_seeds: &[u64],
    term_count: usize,
    max_frequency: f64,
    spec_sampler: &SpecDistribution,
    rng_seed: u64,
) -> Result<Vec<RealSample>> {
    let fields = field_seeds
        .iter()
        .map(|&s| make_field_with(s, term_count, max_frequency))
        .collect::<Result<Vec<_>>>()?;
    sample_batch(&fields, spec_sampler, rng_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_term_field_is_bounded() {
        let f = make_field(0, 1).unwrap();
        assert_eq!(f.terms.len(), 1);
        for i in 0..200 {
            let v = f.eval(i as f64 * 0.137 - 10.0, i as f64 * -0.29);
            assert!(v.iter().all(|c| (-1.0..=1.0).contains(c)));
        }
    }

    #[test]
    fn zero_terms_is_rejected() {
        assert!(matches!(make_field(3, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fields_are_deterministic_and_seed_dependent() {
        assert_eq!(make_field(7, 8).unwrap(), make_field(7, 8).unwrap());
        let a = make_field(7, 8).unwrap();
        let b = make_field(8, 8).unwrap();
        assert!(a.terms.iter().zip(&b.terms).all(|(x, y)| x != y));
    }

    #[test]
    fn frequencies_respect_the_cap() {
        for seed in 0..20 {
            assert!(make_field_with(seed, 12, 1.5).unwrap().max_frequency() <= 1.5 + 1e-12);
        }
    }

    #[test]
    fn constant_field_samples_constant() {
        let f = ContinuousField::constant(0.5);
        let p = sample_field(&f, &SampleSpec::square([0.3, -1.0], 0.7, 5)).unwrap();
        assert!(p.data.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn pixel_shift_permutes_columns_exactly() {
        let f = make_field(11, 6).unwrap();
        let a = SampleSpec { center: [0.0, 0.0], scale: [0.25, 0.25], resolution: [8, 8] };
        let b = SampleSpec { center: [0.25, 0.0], ..a };
        let pa = sample_field(&f, &a).unwrap();
        let pb = sample_field(&f, &b).unwrap();
        for y in 0..8 {
            for x in 0..7 {
                for c in 0..3 {
                    assert_eq!(pb.get(y, x, c), pa.get(y, x + 1, c));
                }
            }
        }
    }

    #[test]
    fn collapsed_distribution_gives_full_frame() {
        let fields: Vec<_> = (0..4).map(|s| make_field(s, 3).unwrap()).collect();
        let dist = SpecDistribution::full_frame((16, 24));
        for s in sample_batch(&fields, &dist, 5).unwrap() {
            assert_eq!(s.small.spec, SampleSpec::full_frame(16));
            assert_eq!(s.large.spec, SampleSpec::full_frame(24));
        }
    }

    #[test]
    fn batches_are_reproducible_and_pairs_share_regions() {
        let fields: Vec<_> = (0..5).map(|s| make_field(s, 3).unwrap()).collect();
        let dist = SpecDistribution::new((16, 24));
        let a = sample_batch(&fields, &dist, 42).unwrap();
        assert_eq!(a, sample_batch(&fields, &dist, 42).unwrap());
        for s in &a {
            for (a, b) in s.small.spec.bounds().iter().zip(s.large.spec.bounds()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(matches!(sample_batch(&[], &dist, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn drawn_fractions_stay_in_range() {
        let dist = SpecDistribution::new((16, 24));
        let mut rng = CounterRng::new(99);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for _ in 0..1000 {
            let f = dist.draw_region(&mut rng, 16).extent()[0] / FULL_FRAME_EXTENT;
            lo = lo.min(f);
            hi = hi.max(f);
        }
        assert!(lo >= 0.6 - 1e-12 && hi <= 1.1 + 1e-12, "[{lo}, {hi}]");
        // The draws should actually explore the range.
        assert!(lo < 0.65 && hi > 1.05, "[{lo}, {hi}]");
    }
}
