use proptest::prelude::*;
use spheregap::geometry::{apollonius_ratio, normalize_placement, reflect, Point, Sphere};
use spheregap::images::assemble;
use spheregap::potential::potential_difference;
use spheregap::{HarmonicField, TwoSphereConfig};

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.iter().map(|c| c / norm).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reflection_is_an_involution(
        n in 2usize..6,
        center in prop::collection::vec(-3.0f64..3.0, 5),
        radius in 0.1f64..4.0,
        dir in prop::collection::vec(-1.0f64..1.0, 5),
        dist_factor in 1.01f64..50.0,
    ) {
        prop_assume!(dir[..n].iter().map(|c| c * c).sum::<f64>() > 1e-4);
        let s = Sphere::new(Point::new(center[..n].to_vec()).unwrap(), radius).unwrap();
        let u = unit(&dir[..n]);
        let p = Point::new(center[..n].iter().zip(&u).map(|(c, ui)| c + dist_factor * radius * ui).collect()).unwrap();
        let q = reflect(&p, &s).unwrap();
        prop_assert!(q.distance(&s.center) < radius);
        let back = reflect(&q, &s).unwrap();
        prop_assert!(back.distance(&p) <= 1e-12 * (1.0 + p.norm()) * dist_factor);
    }

    #[test]
    fn apollonius_identity_holds_on_the_sphere(
        radius in 0.1f64..4.0,
        dist_factor in 1.05f64..20.0,
        theta in 0.0f64..std::f64::consts::PI,
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        let s = Sphere::new(Point::new(vec![0.5, -1.0, 2.0]).unwrap(), radius).unwrap();
        let p = Point::new(vec![0.5 + dist_factor * radius, -1.0, 2.0]).unwrap();
        let image = reflect(&p, &s).unwrap();
        let x = Point::new(vec![
            0.5 + radius * theta.cos(),
            -1.0 + radius * theta.sin() * phi.cos(),
            2.0 + radius * theta.sin() * phi.sin(),
        ]).unwrap();
        let ratio = x.distance(&p) / x.distance(&image);
        let expected = 1.0 / apollonius_ratio(&p, &s).unwrap();
        prop_assert!((ratio / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn placement_normalization_preserves_gap(
        c1 in prop::collection::vec(-5.0f64..5.0, 3),
        dir in prop::collection::vec(-1.0f64..1.0, 3),
        r1 in 0.2f64..3.0,
        r2 in 0.2f64..3.0,
        gap in 1e-4f64..0.5,
    ) {
        prop_assume!(dir.iter().map(|c| c * c).sum::<f64>() > 1e-3);
        let u = unit(&dir);
        let a = Sphere::new(Point::new(c1.clone()).unwrap(), r1).unwrap();
        let c2: Vec<f64> = c1.iter().zip(&u).map(|(c, ui)| c + (r1 + r2 + gap) * ui).collect();
        let b = Sphere::new(Point::new(c2).unwrap(), r2).unwrap();
        let (cfg, motion) = normalize_placement(&a, &b).unwrap();
        prop_assert!((2.0 * cfg.eps / gap - 1.0).abs() < 1e-9);
        let mapped = motion.apply(&a.center);
        prop_assert!(mapped.distance(&cfg.c1()) < 1e-9 * (1.0 + a.center.norm()));
    }

    #[test]
    fn gap_is_linear_in_the_field(
        a in prop::collection::vec(-3.0f64..3.0, 3),
        b in prop::collection::vec(-3.0f64..3.0, 3),
        s in -2.0f64..2.0,
        eps in 1e-4f64..1e-1,
        r2 in 0.2f64..5.0,
    ) {
        let cfg = TwoSphereConfig::new(3, 1.0, r2, eps).unwrap();
        let sys = assemble(&cfg, 1e-12).unwrap();
        let gap = |v: Vec<f64>| potential_difference(&sys, &HarmonicField::linear(v)).unwrap().value;
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let lhs = gap(combo);
        let rhs = gap(a.clone()) + s * gap(b.clone());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gap_is_positive_for_positive_axial_field(
        n in 3usize..6,
        r1 in 0.2f64..5.0,
        r2 in 0.2f64..5.0,
        delta in 1e-6f64..1e-1,
    ) {
        let cfg = TwoSphereConfig::new(n, r1, r2, delta * r1).unwrap();
        let sys = assemble(&cfg, 1e-12).unwrap();
        let v = potential_difference(&sys, &HarmonicField::coordinate(n, 1)).unwrap().value;
        prop_assert!(v > 0.0);
    }
}
