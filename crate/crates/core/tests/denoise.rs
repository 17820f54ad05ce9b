use mapforge::denoise::{
    apply_curvature_noise, apply_location_noise, apply_rotation_noise, apply_scale_noise,
    generate_denoise_groups, noise_element, supports_curvature_noise, NoiseSpec,
};
use mapforge::geometry::{curvature_profile, segment_lengths};
use mapforge::{ClassLabel, MapElement, PerceptionRange, Point2};
use mapforge_testkit as kit;
use proptest::prelude::*;

fn pairwise(e: &MapElement) -> Vec<f64> {
    let p = e.points();
    let mut out = Vec::new();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            out.push(p[i].distance(p[j]));
        }
    }
    out
}

proptest! {
    #[test]
    fn rotation_is_rigid_about_anchor(seed in 0u64..100_000, theta in -3.2f64..3.2) {
        let e = kit::random_element(&mut kit::rng(seed), &PerceptionRange::BASE);
        let r = apply_rotation_noise(&e, theta);
        for (a, b) in pairwise(&e).iter().zip(pairwise(&r)) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        prop_assert!(r.anchor().distance(e.anchor()) <= 1e-9);
        prop_assert_eq!(r.class(), e.class());
    }

    #[test]
    fn location_keeps_relative_shape(seed in 0u64..100_000, dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
        let e = kit::random_element(&mut kit::rng(seed), &PerceptionRange::BASE);
        let t = apply_location_noise(&e, dx, dy);
        let (a0, a1) = (e.anchor(), t.anchor());
        for (p, q) in e.points().iter().zip(t.points()) {
            let rel0 = *p - a0;
            let rel1 = *q - a1;
            prop_assert!((rel0.x - rel1.x).abs() <= 1e-12 && (rel0.y - rel1.y).abs() <= 1e-12);
        }
    }

    #[test]
    fn scale_fixes_anchor(seed in 0u64..100_000, sx in 0.5f64..2.0, sy in 0.5f64..2.0) {
        let e = kit::random_element(&mut kit::rng(seed), &PerceptionRange::BASE);
        let s = apply_scale_noise(&e, sx, sy).unwrap();
        prop_assert!(s.anchor().distance(e.anchor()) <= 1e-9);
    }

    #[test]
    fn curvature_keeps_lengths_and_start(seed in 0u64..100_000, c in 0.0f64..2.0) {
        let e = kit::random_line_element(&mut kit::rng(seed), 3, 15);
        let k = apply_curvature_noise(&e, c).unwrap();
        prop_assert_eq!(k.points()[0], e.points()[0]);
        for (a, b) in segment_lengths(e.points()).iter().zip(segment_lengths(k.points())) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let id = apply_curvature_noise(&e, 1.0).unwrap();
        for (p, q) in id.points().iter().zip(e.points()) {
            prop_assert!(p.distance(*q) <= 1e-9);
        }
    }

    #[test]
    fn noised_items_are_reproducible(seed in any::<u64>(), group in 0usize..64, idx in 0usize..64) {
        let e = kit::random_element(&mut kit::rng(seed), &PerceptionRange::BASE);
        let spec = NoiseSpec { seed, ..NoiseSpec::default() };
        let a = noise_element(&e, idx, group, &spec).unwrap();
        let b = noise_element(&e, idx, group, &spec).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.applied.theta.abs() <= spec.rot_max);
        prop_assert!(a.applied.dx.abs() <= spec.trans_max && a.applied.dy.abs() <= spec.trans_max);
        prop_assert!((spec.scale_min..=spec.scale_max).contains(&a.applied.sx));
        prop_assert!((spec.curv_min..=spec.curv_max).contains(&a.applied.c));
        prop_assert_eq!(a.applied.curvature_applied, supports_curvature_noise(&e));
        prop_assert_eq!(a.noised.class(), e.class());
        prop_assert_eq!(a.noised.len(), e.len());
    }
}

#[test]
fn quarter_arc_curvature_halves() {
    let arc = kit::quarter_arc(10.0, 32);
    let mean = |e: &MapElement| {
        let k = curvature_profile(e.points()).unwrap();
        k.iter().sum::<f64>() / k.len() as f64
    };
    let before = mean(&arc);
    let after = mean(&apply_curvature_noise(&arc, 0.5).unwrap());
    assert!((before - 0.1).abs() < 0.01, "arc curvature {before}");
    assert!((after / before - 0.5).abs() < 0.05 * 0.5);
}

#[test]
fn polygons_reject_curvature_noise() {
    let poly = kit::random_polygon(&mut kit::rng(9), Point2::new(0.0, 0.0), 5, 3.0);
    assert!(apply_curvature_noise(&poly, 0.5).is_err());
    let two = MapElement::new(ClassLabel::Boundary, vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]).unwrap();
    assert!(apply_curvature_noise(&two, 0.5).is_err());
    assert!(!supports_curvature_noise(&two));
}

#[test]
fn identity_spec_reproduces_ground_truth() {
    let mut rng = kit::rng(10);
    let gts: Vec<MapElement> = (0..50).map(|_| kit::random_element(&mut rng, &PerceptionRange::BASE)).collect();
    let groups = generate_denoise_groups(&gts, &NoiseSpec::identity(3, 77)).unwrap();
    assert_eq!(groups.len(), 3);
    for (g, group) in groups.iter().enumerate() {
        assert_eq!(group.group_index, g);
        for (item, gt) in group.items.iter().zip(&gts) {
            for (p, q) in item.noised.points().iter().zip(gt.points()) {
                assert!(p.distance(*q) <= 1e-9);
            }
        }
    }
}

#[test]
fn groups_do_not_depend_on_thread_count() {
    let mut rng = kit::rng(11);
    let gts: Vec<MapElement> = (0..40).map(|_| kit::random_element(&mut rng, &PerceptionRange::BASE)).collect();
    let spec = NoiseSpec {
        groups: 16,
        seed: 5,
        ..NoiseSpec::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| generate_denoise_groups(&gts, &spec).unwrap())
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn seeds_and_groups_differ() {
    let e = kit::random_line_element(&mut kit::rng(12), 4, 6);
    let spec = NoiseSpec::default();
    let a = noise_element(&e, 0, 0, &spec).unwrap();
    let b = noise_element(&e, 0, 1, &spec).unwrap();
    let c = noise_element(&e, 0, 0, &NoiseSpec { seed: 1, ..spec }).unwrap();
    assert_ne!(a.applied, b.applied);
    assert_ne!(a.applied, c.applied);
}
