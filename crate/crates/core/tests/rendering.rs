use padfree_core::net::generator::latent_from_seed;
use padfree_core::net::stitch::grid_for_output;
use padfree_core::net::{generate, GeneratorConfig, GeneratorParams, NoisePolicy};
use padfree_core::{ImagePatch, SampleSpec};
use proptest::prelude::*;

fn params(n_pad: usize) -> GeneratorParams {
    let cfg = GeneratorConfig { latent_dim: 6, mapping_layers: 1, widths: vec![6, 5, 4], n_pad };
    let mut p = GeneratorParams::init(&cfg, 21).unwrap();
    p.set_noise_strength(0.4);
    p
}

fn render(p: &GeneratorParams, spec: SampleSpec, noise: &NoisePolicy) -> ImagePatch {
    generate(p, &latent_from_seed(2, p.config.latent_dim), &grid_for_output(p, &spec).unwrap(), noise).unwrap()
}

fn crop(img: &ImagePatch, ox: usize, oy: usize, w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for y in oy..oy + h {
        for x in ox..ox + w {
            for c in 0..3 {
                out.push(img.get(y, x, c));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any aligned window rendered on its own equals the same crop of a full
    /// rendering when noise is looked up by position.
    #[test]
    fn windows_equal_crops(ox in 0usize..6, oy in 0usize..6, tw in 1usize..5, th in 1usize..5) {
        let p = params(4);
        let full = SampleSpec::full_frame(40);
        let noise = NoisePolicy::grid_sample(3, full);
        let (ox, oy, tw, th) = (4 * ox, 4 * oy, (4 * tw).min(40 - 4 * ox), (4 * th).min(40 - 4 * oy));
        prop_assume!(tw > 0 && th > 0);
        let whole = render(&p, full, &noise);
        let [x0, _, y0, _] = full.bounds();
        let s = full.scale[0];
        let window = SampleSpec {
            center: [x0 + s * (ox as f64 + tw as f64 / 2.0), y0 + s * (oy as f64 + th as f64 / 2.0)],
            scale: full.scale,
            resolution: [tw, th],
        };
        let part = render(&p, window, &noise);
        let d = part.data.iter().zip(crop(&whole, ox, oy, tw, th)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d <= 1e-9, "max diff {}", d);
    }
}

#[test]
fn rendering_is_deterministic() {
    let p = params(3);
    let spec = SampleSpec::full_frame(16);
    for noise in [NoisePolicy::random(4), NoisePolicy::constant(4, spec), NoisePolicy::grid_sample(4, spec)] {
        assert_eq!(render(&p, spec, &noise), render(&p, spec, &noise));
    }
}

#[test]
fn anchored_policies_agree_at_the_base_scale() {
    let p = params(3);
    let spec = SampleSpec::full_frame(24);
    let a = render(&p, spec, &NoisePolicy::constant(8, spec));
    let b = render(&p, spec, &NoisePolicy::grid_sample(8, spec));
    assert!(a.max_abs_diff(&b) < 1e-9);
}

#[test]
fn outputs_stay_in_range() {
    let p = params(3);
    let img = render(&p, SampleSpec::full_frame(32), &NoisePolicy::random(1));
    assert!(img.data.iter().all(|v| (-1.0..=1.0).contains(v)));
}
