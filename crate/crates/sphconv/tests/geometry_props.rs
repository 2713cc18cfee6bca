//! Property tests for the coordinate transforms and normalization.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sphconv::geometry::{from_spherical, normalize_cloud, to_spherical, Point3, PointCloud};

#[test]
fn round_trip_over_1e5_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(424242);
    for _ in 0..100_000 {
        let p = Point3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        );
        let back = from_spherical(to_spherical(p));
        let err = back.dist(&p);
        assert!(err < 1e-12 * (1.0 + p.norm()), "round trip error {err} at {p:?}");
    }
}

proptest! {
    #[test]
    fn round_trip_property(
        x in -100.0_f64..100.0,
        y in -100.0_f64..100.0,
        z in -100.0_f64..100.0,
    ) {
        let p = Point3::new(x, y, z);
        let s = to_spherical(p);
        prop_assert!(s.theta >= -std::f64::consts::PI && s.theta <= std::f64::consts::PI);
        prop_assert!(s.phi >= -std::f64::consts::FRAC_PI_2 && s.phi <= std::f64::consts::FRAC_PI_2);
        prop_assert!(s.r >= 0.0);
        let back = from_spherical(s);
        prop_assert!(back.dist(&p) < 1e-12 * (1.0 + p.norm()));
    }

    #[test]
    fn antipodal_relation(
        x in -5.0_f64..5.0,
        y in -5.0_f64..5.0,
        z in -5.0_f64..5.0,
    ) {
        prop_assume!(x != 0.0 || y != 0.0 || z != 0.0);
        let p = Point3::new(x, y, z);
        let s = to_spherical(p);
        let t = to_spherical(-p);
        prop_assert_eq!(s.r, t.r);
        prop_assert!((s.phi + t.phi).abs() < 1e-12);
    }

    #[test]
    fn normalization_is_scale_and_translation_invariant(
        seed in 0u64..1000,
        scale in 0.05_f64..50.0,
        tx in -20.0_f64..20.0,
        ty in -20.0_f64..20.0,
        tz in -20.0_f64..20.0,
    ) {
        let cloud = common::random_cloud(60, seed);
        // Degenerate draws (all points equal) are not produced by random_cloud.
        let transformed: PointCloud = cloud
            .points
            .iter()
            .map(|p| *p * scale + Point3::new(tx, ty, tz))
            .collect();
        let a = normalize_cloud(&cloud).unwrap();
        let b = normalize_cloud(&transformed).unwrap();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            prop_assert!(pa.dist(pb) < 1e-9);
        }
    }
}
