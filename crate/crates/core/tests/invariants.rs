use padfree_core::metrics::{ssim_tensors, SsimConfig};
use padfree_core::net::plan_shapes;
use padfree_core::posgrid::{apply_transform, build_grid, grid_period, tile_layout_aligned};
use padfree_core::resample::{bilinear_resize, bilinear_resize_adjoint};
use padfree_core::rng::CounterRng;
use padfree_core::{GeoTransform, GridMode, SampleSpec, Tensor};
use proptest::prelude::*;

fn tensor(seed: u64, c: usize, h: usize, w: usize) -> Tensor {
    let mut rng = CounterRng::new(seed);
    Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

proptest! {
    #[test]
    fn plan_follows_the_recurrence(n_in in 1usize..40, n_pad in 3usize..8, levels in 0usize..6) {
        let plan = plan_shapes(n_in, n_pad, levels).unwrap();
        prop_assert_eq!(plan.per_level_size[0], n_in + 2 * n_pad - 2);
        for l in 1..=levels {
            prop_assert_eq!(plan.per_level_size[l], 2 * plan.per_level_size[l - 1] - 4);
        }
        prop_assert_eq!(plan.output_size, n_in << levels);
        prop_assert_eq!(plan.trim, plan.per_level_size[levels] - plan.output_size);
        prop_assert_eq!(plan.is_shift_exact(), n_pad >= 4 || levels <= 1);
    }

    #[test]
    fn too_little_padding_underflows(n_in in 1usize..20, levels in 1usize..5) {
        prop_assert!(plan_shapes(n_in, 1, levels).is_err());
    }

    #[test]
    fn centered_grid_geometry(n in 2usize..30, p in 0usize..5, cx in -2.0f64..2.0, cy in -2.0f64..2.0, extent in 0.1f64..4.0) {
        let spec = SampleSpec::square([cx, cy], extent, n);
        let g = build_grid(&spec, p, GridMode::Centered).unwrap();
        let period = grid_period(&g).unwrap();
        prop_assert!((period[0] - extent / n as f64).abs() < 1e-12);
        let (inner, pad) = g.split_points();
        prop_assert_eq!(inner.len(), n * n);
        prop_assert_eq!(pad.len(), (n + 2 * p).pow(2) - n * n);
        let mean_x = inner.iter().map(|q| q[0]).sum::<f64>() / inner.len() as f64;
        prop_assert!((mean_x - cx).abs() < 1e-9);
    }

    #[test]
    fn shift_moves_every_point(n in 2usize..16, dx in -3.0f64..3.0, dy in -3.0f64..3.0) {
        let g = build_grid(&SampleSpec::full_frame(n), 3, GridMode::Centered).unwrap();
        let s = apply_transform(&g, &GeoTransform::Shift { delta: [dx, dy] }).unwrap();
        for (a, b) in g.coords.iter().zip(&s.coords) {
            prop_assert!((b[0] - a[0] - dx).abs() < 1e-12 && (b[1] - a[1] - dy).abs() < 1e-12);
        }
        let (a, b) = (grid_period(&g).unwrap(), grid_period(&s).unwrap());
        prop_assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn rescale_scales_the_period(n in 2usize..16, f in 0.25f64..4.0) {
        let g = build_grid(&SampleSpec::full_frame(n), 3, GridMode::Centered).unwrap();
        let r = apply_transform(&g, &GeoTransform::Rescale { factor: [f, f] }).unwrap();
        let (a, b) = (grid_period(&g).unwrap(), grid_period(&r).unwrap());
        prop_assert!((b[0] - a[0] * f).abs() < 1e-12);
    }

    #[test]
    fn extrapolation_keeps_the_lattice(n in 2usize..12, m in 1usize..4) {
        let g = build_grid(&SampleSpec::full_frame(n), 3, GridMode::Centered).unwrap();
        let e = apply_transform(&g, &GeoTransform::Extrapolate { margin: m }).unwrap();
        prop_assert_eq!(e.interior(), [n + 2 * m, n + 2 * m]);
        for j in 0..n + 6 {
            for i in 0..n + 6 {
                let (a, b) = (g.at(i, j), e.at(i + m, j + m));
                prop_assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiles_cover_on_the_quantum(full in 8usize..80, tile_frac in 0.2f64..1.0, overlap in 0usize..6, q in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let tile = ((full as f64 * tile_frac) as usize).max(1);
        let spec = SampleSpec::full_frame(full);
        if let Ok(tiles) = tile_layout_aligned(&spec, [tile, tile], overlap, q) {
            let [x0, _, _, _] = spec.bounds();
            let mut covered = vec![false; full];
            for t in tiles.iter().filter(|t| (t.center[1] - tiles[0].center[1]).abs() < 1e-12) {
                let off = ((t.bounds()[0] - x0) / spec.scale[0]).round() as usize;
                prop_assert_eq!(off % q, 0);
                covered[off..off + tile].iter_mut().for_each(|c| *c = true);
            }
            prop_assert!(covered.iter().all(|&c| c));
        }
    }

    #[test]
    fn resize_is_linear_with_a_true_adjoint(h in 1usize..10, w in 1usize..10, oh in 1usize..14, ow in 1usize..14, seed in any::<u64>()) {
        let x = tensor(seed, 2, h, w);
        let y = tensor(seed ^ 1, 2, oh, ow);
        let lhs = dot(&bilinear_resize(&x, oh, ow), &y);
        let rhs = dot(&x, &bilinear_resize_adjoint(&y, h, w));
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn resize_preserves_constants(h in 1usize..10, w in 1usize..10, oh in 1usize..14, ow in 1usize..14, v in -1.0f64..1.0) {
        let x = Tensor::from_vec(1, h, w, vec![v; h * w]);
        prop_assert!(bilinear_resize(&x, oh, ow).data.iter().all(|&o| (o - v).abs() < 1e-12));
    }

    #[test]
    fn ssim_is_symmetric_and_one_on_identity(h in 5usize..20, w in 5usize..20, seed in any::<u64>()) {
        let a = tensor(seed, 3, h, w);
        let b = tensor(seed.wrapping_add(1), 3, h, w);
        let cfg = SsimConfig::default();
        prop_assert!((ssim_tensors(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let (ab, ba) = (ssim_tensors(&a, &b, &cfg).unwrap(), ssim_tensors(&b, &a, &cfg).unwrap());
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }
}
