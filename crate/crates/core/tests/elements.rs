use std::f64::consts::{PI, TAU};

use approx::assert_relative_eq;
use lowthrust_core::elements::{
    coe_to_mee, make_scales, mee_to_cartesian, mee_to_coe, ClassicalElements, EquinoctialElements, PhysicalConstants,
};
use proptest::prelude::*;

fn ang_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[test]
fn leo_row_converts() {
    let leo = ClassicalElements { a: 7003e3, e: 0.0, i: 28.5f64.to_radians(), raan: 0.0, argp: 0.0, ta: 0.0 };
    let m = coe_to_mee(&leo).unwrap();
    assert_eq!(m.p, 7003e3);
    assert_eq!((m.f, m.g, m.k), (0.0, 0.0, 0.0));
    assert_relative_eq!(m.h, (28.5f64.to_radians() / 2.0).tan());
    let back = mee_to_coe(&m).unwrap();
    assert_relative_eq!(back.a, leo.a, max_relative = 1e-12);
    assert_relative_eq!(back.i, leo.i, max_relative = 1e-12);
}

#[test]
fn heo_row_semi_parameter_and_round_trip() {
    let heo = ClassicalElements {
        a: 26578e3,
        e: 0.73646,
        i: 63.435f64.to_radians(),
        raan: 0.0,
        argp: 0.0,
        ta: 0.0,
    };
    let m = coe_to_mee(&heo).unwrap();
    let hand = 26578e3 * (1.0 - 0.73646f64 * 0.73646);
    assert_relative_eq!(m.p, hand, max_relative = 1e-15);
    assert_relative_eq!(m.p, 1.216280e7, max_relative = 1e-6);
    let back = mee_to_coe(&m).unwrap();
    assert_relative_eq!(back.e, 0.73646, max_relative = 1e-12);
    assert_relative_eq!(back.i.to_degrees(), 63.435, max_relative = 1e-12);
}

#[test]
fn circular_equatorial_collapses() {
    let c = ClassicalElements { a: 2.0, e: 0.0, i: 0.0, raan: 0.4, argp: 0.2, ta: 1.0 };
    let m = coe_to_mee(&c).unwrap();
    assert_eq!((m.f, m.g, m.h, m.k), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(m.p, 2.0);
    assert_relative_eq!(m.l, 1.6);
    let unit = EquinoctialElements { p: 1.0, f: 0.0, g: 0.0, h: 0.0, k: 0.0, l: 0.0 };
    let coe = mee_to_coe(&unit).unwrap();
    assert_eq!((coe.a, coe.e, coe.i), (1.0, 0.0, 0.0));
}

#[test]
fn leo_cartesian_vis_viva() {
    let mu = 3.986004418e14;
    let leo = ClassicalElements { a: 7003e3, e: 0.0, i: 28.5f64.to_radians(), raan: 0.0, argp: 0.0, ta: 0.0 };
    let (r, v) = mee_to_cartesian(&coe_to_mee(&leo).unwrap(), mu).unwrap();
    let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let vn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    assert_relative_eq!(rn, 7003e3, max_relative = 1e-14);
    assert_relative_eq!(vn, (mu / 7003e3).sqrt(), max_relative = 1e-14);
}

#[test]
fn circular_period_is_two_pi() {
    // With μ = 1 and p = 1 the mean motion is 1.
    let s = make_scales(&PhysicalConstants::default());
    let a = 1.0f64;
    let period = TAU * (a.powi(3) / 1.0).sqrt();
    assert_relative_eq!(period * s.tu, TAU * (s.du.powi(3) / 3.986004418e14).sqrt(), max_relative = 1e-14);
}

prop_compose! {
    fn classical()(a in 0.5f64..20.0, e in 0.0f64..0.95, i in 0.0f64..175f64.to_radians(),
                   raan in 0.0f64..TAU, argp in 0.0f64..TAU, ta in 0.0f64..TAU) -> ClassicalElements {
        ClassicalElements { a, e, i, raan, argp, ta }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn coe_round_trip(c in classical()) {
        let back = mee_to_coe(&coe_to_mee(&c).unwrap()).unwrap();
        prop_assert!((back.a - c.a).abs() <= 1e-12 * c.a * (1.0 / (1.0 - c.e * c.e)));
        prop_assert!((back.e - c.e).abs() <= 1e-12);
        prop_assert!((back.i - c.i).abs() <= 1e-12 * PI);
        // Ω is defined for i > 0, ω for e > 0; their sum and L always are.
        if c.i > 1e-9 {
            prop_assert!(ang_diff(back.raan, c.raan) <= 1e-11);
        }
        if c.e > 1e-9 {
            prop_assert!(ang_diff(back.argp + back.raan, c.argp + c.raan) <= 1e-9 / c.e.max(1e-3));
        }
        prop_assert!(ang_diff(back.raan + back.argp + back.ta, c.raan + c.argp + c.ta) <= 1e-11);
    }

    #[test]
    fn cartesian_preserves_two_body_invariants(c in classical()) {
        let mu = 1.0;
        let m = coe_to_mee(&c).unwrap();
        let (r, v) = mee_to_cartesian(&m, mu).unwrap();
        let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let a = 1.0 / (2.0 / rn - v2 / mu);
        prop_assert!((a - c.a).abs() <= 1e-10 * c.a / (1.0 - c.e).powi(2));
        prop_assert!((rn - m.p / m.w()).abs() <= 1e-13 * rn);
        let hv = [r[1] * v[2] - r[2] * v[1], r[2] * v[0] - r[0] * v[2], r[0] * v[1] - r[1] * v[0]];
        let hn = (hv[0] * hv[0] + hv[1] * hv[1] + hv[2] * hv[2]).sqrt();
        prop_assert!((hn - (mu * m.p).sqrt()).abs() <= 1e-10 * hn);
    }
}
