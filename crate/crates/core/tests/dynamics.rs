use std::f64::consts::TAU;

use approx::assert_relative_eq;
use lowthrust_core::dynamics::{
    mee_rates, propagate_longitude, propagate_time, rhs_longitude, rhs_time, ControlInput, DynamicsParams,
    SpacecraftState,
};
use lowthrust_core::elements::{mee_to_cartesian, rtn_basis, EquinoctialElements};
use lowthrust_core::ode::OdeOptions;
use num_dual::{Dual64, DualNum};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const UNIT: DynamicsParams = DynamicsParams { mu: 1.0, exhaust_velocity: 1.2 };

/// Position/velocity from the equinoctial frame vectors, generic so the
/// time derivative can be pushed forward exactly.
fn cartesian_oracle<D: DualNum<Primitive = f64> + Copy>(x: &[D; 6], mu: f64) -> [D; 6] {
    let [p, f, g, h, k, l] = *x;
    let s2 = h * h + k * k + 1.0;
    let fh = [(h * h - k * k + 1.0) / s2, h * k * 2.0 / s2, -k * 2.0 / s2];
    let gh = [h * k * 2.0 / s2, (k * k - h * h + 1.0) / s2, h * 2.0 / s2];
    let (sl, cl) = l.sin_cos();
    let w = f * cl + g * sl + 1.0;
    let r = p / w;
    let c = (p / mu).sqrt().recip();
    let mut out = [D::zero(); 6];
    for j in 0..3 {
        out[j] = r * (cl * fh[j] + sl * gh[j]);
        out[3 + j] = c * (-(sl + g) * fh[j] + (cl + f) * gh[j]);
    }
    out
}

fn random_case(rng: &mut ChaCha8Rng) -> (SpacecraftState, ControlInput) {
    let e: f64 = rng.gen_range(0.0..0.9);
    let om: f64 = rng.gen_range(0.0..TAU);
    let ti: f64 = rng.gen_range(0.0..1.5);
    let node: f64 = rng.gen_range(0.0..TAU);
    let mee = EquinoctialElements {
        p: rng.gen_range(0.8..8.0),
        f: e * om.cos(),
        g: e * om.sin(),
        h: ti * node.cos(),
        k: ti * node.sin(),
        l: rng.gen_range(-10.0..30.0),
    };
    let mut dir = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    dir.iter_mut().for_each(|d| *d /= n);
    let state = SpacecraftState { mee, mass: rng.gen_range(0.1..1.0) };
    (state, ControlInput { thrust: rng.gen_range(0.0..0.5), dir })
}

#[test]
fn cartesian_oracle_agrees_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (s, u) = random_case(&mut rng);
        let rates = rhs_time(&s, &u, &UNIT).unwrap();
        let x = s.mee.to_array();
        let xd: [Dual64; 6] = std::array::from_fn(|j| Dual64::new(x[j], rates[j]));
        let cart = cartesian_oracle(&xd, UNIT.mu);
        let (r, v) = mee_to_cartesian(&s.mee, UNIT.mu).unwrap();
        let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        let basis = rtn_basis(&r, &v);
        let acc = u.thrust / s.mass;
        for j in 0..3 {
            let thrust_acc: f64 = (0..3).map(|c| basis[c][j] * acc * u.dir[c]).sum();
            let expected_a = -UNIT.mu * r[j] / rn.powi(3) + thrust_acc;
            let vnorm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let anorm = UNIT.mu / (rn * rn) + acc;
            worst = worst.max((cart[j].eps - v[j]).abs() / vnorm);
            worst = worst.max((cart[3 + j].eps - expected_a).abs() / anorm);
        }
    }
    assert!(worst <= 1e-9, "worst relative mismatch {worst:e}");
}

#[test]
fn coast_conserves_elements_over_one_revolution() {
    let mee = EquinoctialElements { p: 1.3, f: 0.2, g: -0.1, h: 0.3, k: 0.1, l: 0.5 };
    let s0 = SpacecraftState { mee, mass: 0.8 };
    let a = mee.p / (1.0 - mee.f * mee.f - mee.g * mee.g);
    let period = TAU * a.powf(1.5);
    let prop = propagate_time(
        &s0,
        0.0,
        period,
        &UNIT,
        |_, _| ControlInput::coast(),
        None::<fn(&SpacecraftState) -> f64>,
        &OdeOptions::default(),
    )
    .unwrap();
    let end = prop.samples.last().unwrap().state;
    for (x, y) in end.to_array()[..5].iter().zip(&s0.to_array()[..5]) {
        assert!((x - y).abs() <= 1e-9);
    }
    assert_eq!(end.mass, s0.mass);
    assert_relative_eq!(end.mee.l, mee.l + TAU, max_relative = 1e-9);
}

#[test]
fn coast_matches_cartesian_two_body_after_one_orbit() {
    let mee = EquinoctialElements { p: 1.0, f: 0.0, g: 0.0, h: 0.0, k: 0.0, l: 0.0 };
    let s0 = SpacecraftState { mee, mass: 1.0 };
    let prop = propagate_longitude(
        &s0,
        0.0,
        TAU,
        &UNIT,
        |_, _| ControlInput::coast(),
        None::<fn(&SpacecraftState) -> f64>,
        &OdeOptions::default(),
    )
    .unwrap();
    let last = prop.samples.last().unwrap();
    assert_relative_eq!(last.t, TAU, max_relative = 1e-10);
    let (r, _) = mee_to_cartesian(&last.state.mee, 1.0).unwrap();

    // Independent Cartesian integration of r'' = -r/|r|³.
    let sol = lowthrust_core::ode::integrate(
        |_, y: &[f64], d: &mut [f64]| {
            let rn = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt().powi(3);
            d[..3].copy_from_slice(&y[3..]);
            for j in 0..3 {
                d[3 + j] = -y[j] / rn;
            }
        },
        0.0,
        &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        last.t,
        &OdeOptions::default(),
        None::<fn(f64, &[f64]) -> f64>,
    )
    .unwrap();
    let rc = sol.last().1;
    for j in 0..3 {
        assert!((rc[j] - r[j]).abs() < 1e-6);
    }
}

#[test]
fn chain_rule_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (s, u) = random_case(&mut rng);
        let dt = rhs_time(&s, &u, &UNIT).unwrap();
        if dt[5] <= 0.0 {
            assert!(rhs_longitude(&s, &u, &UNIT).is_err());
            continue;
        }
        let dl = rhs_longitude(&s, &u, &UNIT).unwrap();
        for j in [0, 1, 2, 3, 4, 6] {
            assert!((dl[j] - dt[j] / dt[5]).abs() <= 1e-14 * dl[j].abs().max(1e-300));
        }
        assert_eq!(dl[5], 1.0 / dt[5]);
    }
}

proptest! {
    #[test]
    fn mass_rate_is_monotone(thrust in 0.0f64..10.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, mut u) = random_case(&mut rng);
        u.thrust = thrust;
        let d = rhs_time(&s, &u, &UNIT).unwrap();
        prop_assert!(d[6] <= 0.0);
        prop_assert_eq!(d[6] == 0.0, thrust == 0.0);
    }

    #[test]
    fn coast_rates_vanish_except_longitude(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, _) = random_case(&mut rng);
        let d = mee_rates(&s.to_array(), 0.0, [0.0, 1.0, 0.0], &UNIT);
        prop_assert_eq!(&d[..5], &[0.0; 5][..]);
        let w = s.mee.w();
        prop_assert!((d[5] - s.mee.p.sqrt() * (w / s.mee.p).powi(2)).abs() <= 1e-14 * d[5]);
    }
}
