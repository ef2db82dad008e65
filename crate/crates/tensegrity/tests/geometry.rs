use std::f64::consts::PI;

use proptest::prelude::*;
use tensegrity::airfoil::{
    initial_configuration, linear_reference, morph_target, surface_points, target_displacement, AirfoilSpec, MorphSpec,
    Naca4,
};

/// Dense-sampling check of a single chord segment.
fn sampled_deviation(spec: &AirfoilSpec, section: &Naca4, s0: f64, s1: f64, upper: bool) -> f64 {
    let a = spec.point(section, s0, upper);
    let b = spec.point(section, s1, upper);
    let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dz);
    (0..1000)
        .map(|i| {
            let s = s0 + (s1 - s0) * i as f64 / 999.0;
            let p = spec.point(section, s, upper);
            ((p[0] - a[0]) * dz - (p[1] - a[1]) * dx).abs() / len
        })
        .fold(0.0, f64::max)
}

#[test]
fn default_spec_gives_five_bars() {
    let surf = surface_points(&AirfoilSpec::default()).unwrap();
    assert_eq!(surf.q(), 5);
    assert_eq!(*surf.stations.first().unwrap(), 0.3);
    assert_eq!(*surf.stations.last().unwrap(), 1.0);
}

#[test]
fn every_segment_within_bound() {
    let spec = AirfoilSpec::default();
    let section = spec.validate().unwrap();
    let surf = surface_points(&spec).unwrap();
    for w in surf.stations.windows(2) {
        for upper in [true, false] {
            let d = sampled_deviation(&spec, &section, w[0], w[1], upper);
            assert!(d <= spec.delta, "segment {w:?} upper={upper}: {d}");
        }
    }
}

#[test]
fn halving_bound_never_reduces_q() {
    let mut spec = AirfoilSpec::default();
    let mut last = 0;
    for _ in 0..3 {
        let q = surface_points(&spec).unwrap().q();
        assert!(q >= last);
        last = q;
        spec.delta /= 2.0;
    }
}

#[test]
fn interior_nodes_follow_ratio() {
    for mu in [1.0 / 3.0, 0.5] {
        let spec = AirfoilSpec { mu, ..AirfoilSpec::default() };
        let t = initial_configuration(&spec).unwrap();
        for i in 0..t.q {
            let expect = t.nodes.column(t.upper(i)) * mu + t.nodes.column(t.lower(i)) * (1.0 - mu);
            assert!((t.nodes.column(i) - expect).amax() < 1e-15);
        }
    }
}

#[test]
fn layout_is_airfoil_shaped() {
    let t = initial_configuration(&AirfoilSpec::default()).unwrap();
    let te = t.trailing_edge();
    assert_eq!((t.nodes[(0, te)], t.nodes[(2, te)]), (1.0, 0.0));
    for i in 0..t.q {
        assert!(t.nodes[(2, t.upper(i))] > t.nodes[(2, i)]);
        assert!(t.nodes[(2, i)] > t.nodes[(2, t.lower(i))]);
        assert!(t.nodes[(0, i)] < t.nodes[(0, i + 1)]);
        assert_eq!(t.nodes[(1, i)], 0.0);
    }
}

#[test]
fn linear_morph_preserves_bars() {
    let t = initial_configuration(&AirfoilSpec::default()).unwrap();
    let morph = MorphSpec::linear(t.q, PI / 72.0);
    assert!((morph.angles[4] - 5.0 * PI / 72.0).abs() < 1e-15);
    let target = morph_target(&t, &morph).unwrap();
    for &(a, b) in &t.bars {
        let before = (t.nodes.column(b) - t.nodes.column(a)).norm();
        let after = (target.column(b) - target.column(a)).norm();
        assert!((before - after).abs() <= 1e-12);
    }
    // Trailing edge moves down.
    assert!(target[(2, t.trailing_edge())] < 0.0);
}

#[test]
fn rotations_recovered_from_target() {
    let t = initial_configuration(&AirfoilSpec::default()).unwrap();
    let morph = MorphSpec::linear(t.q, PI / 72.0);
    let target = morph_target(&t, &morph).unwrap();
    let heading = |n: &nalgebra::Matrix3xX<f64>, i: usize| {
        (n[(2, i + 1)] - n[(2, i)]).atan2(n[(0, i + 1)] - n[(0, i)])
    };
    for i in 0..t.q {
        let theta = heading(&t.nodes, i) - heading(&target, i);
        assert!((theta - morph.angles[i]).abs() < 1e-10);
    }
}

#[test]
fn reference_endpoints_exact() {
    let t = initial_configuration(&AirfoilSpec::default()).unwrap();
    let target = morph_target(&t, &MorphSpec::linear(t.q, PI / 72.0)).unwrap();
    let d = target_displacement(&t, &target);
    assert_eq!(d.len(), 26);
    let r = linear_reference(&d, 100);
    assert_eq!(r.len(), 101);
    assert!(r[0].iter().all(|&v| v == 0.0));
    assert_eq!(r[100], d);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn any_angles_preserve_bars(angles in proptest::collection::vec(-0.3f64..0.3, 5)) {
        let t = initial_configuration(&AirfoilSpec::default()).unwrap();
        let target = morph_target(&t, &MorphSpec { angles }).unwrap();
        for &(a, b) in &t.bars {
            let before = (t.nodes.column(b) - t.nodes.column(a)).norm();
            let after = (target.column(b) - target.column(a)).norm();
            prop_assert!((before - after).abs() <= 1e-12);
        }
    }

    #[test]
    fn reference_is_linear_in_time(k in 0usize..=50, scale in -2.0f64..2.0) {
        let d = nalgebra::DVector::from_fn(6, |i, _| scale * (i as f64 + 1.0));
        let r = linear_reference(&d, 50);
        let expect = &d * (k as f64 / 50.0);
        prop_assert!((&r[k] - expect).amax() <= 1e-14 * d.amax().max(1.0));
    }
}
