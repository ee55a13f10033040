use approx::assert_relative_eq;
use lowthrust_core::collocation::{Ocp, Regime};
use lowthrust_core::dynamics::SpacecraftState;
use lowthrust_core::elements::EquinoctialElements;
use lowthrust_core::problem::*;
use proptest::prelude::*;

const DU: f64 = 6.378145e6;

fn state(p: f64, f: f64, g: f64, h: f64, k: f64) -> SpacecraftState {
    SpacecraftState { mee: EquinoctialElements { p, f, g, h, k, l: 0.0 }, mass: 1.0 }
}

#[test]
fn tabulated_cases_scale_thrust_with_initial_mass() {
    for study in Study::ALL {
        for case in 1..=7 {
            let prob = build_problem(study, case).unwrap();
            let s0 = THRUST_ACCELERATIONS[case - 1];
            assert_relative_eq!(prob.config.thrust.t_max_n, s0 * 1000.0, max_relative = 1e-15);
            // Thrust per unit force: m0·(μ/R²) newtons.
            let fu = 1000.0 * 3.986004418e14 / (DU * DU);
            assert_relative_eq!(prob.t_max, s0 * 1000.0 / fu, max_relative = 1e-12);
        }
    }
    assert!(build_problem(Study::Meo, 0).is_err());
    assert!(build_problem(Study::Geo, 8).is_err());
}

#[test]
fn semi_parameters_in_canonical_units() {
    let meo = build_problem(Study::Meo, 1).unwrap();
    assert_relative_eq!(meo.p0(), 7003e3 / DU, max_relative = 1e-14);
    assert_relative_eq!(meo.pf(), 26560e3 / DU, max_relative = 1e-14);
    let heo = build_problem(Study::Heo, 1).unwrap();
    assert_relative_eq!(heo.pf(), 26578e3 * (1.0 - 0.73646f64.powi(2)) / DU, max_relative = 1e-12);
}

#[test]
fn exact_endpoints_zero_every_event_residual() {
    for study in Study::ALL {
        let prob = build_problem(study, 3).unwrap();
        let x0 = SpacecraftState { mee: prob.initial, mass: 1.0 };
        let xf = SpacecraftState { mee: prob.terminal, mass: 0.7 };
        for r in prob.event_residuals(&x0, &xf) {
            assert!(r.abs() < 1e-14, "{study}: residual {r}");
        }
        let mut out = vec![1.0; prob.event_dim()];
        prob.events(0.0, &x0.to_array(), 1.0, &xf.to_array(), &mut out);
        assert!(out.iter().all(|r| r.abs() < 1e-14), "{study}: {out:?}");
    }
}

#[test]
fn event_residuals_see_each_relation() {
    let prob = build_problem(Study::Heo, 1).unwrap();
    let x0 = SpacecraftState { mee: prob.initial, mass: 1.0 };
    let t = prob.terminal;
    let wrong_e = state(t.p, 0.5, 0.0, t.h, t.k);
    let r = prob.event_residuals(&x0, &wrong_e);
    assert!((r[5] - (0.25 - 0.73646f64.powi(2))).abs() < 1e-14);
    assert_eq!(r[4], 0.0);
}

#[test]
fn zero_targets_become_bounds() {
    let geo = build_problem(Study::Geo, 1).unwrap();
    let fb = geo.final_state_bounds();
    for j in 1..5 {
        assert_eq!((fb.lower[j], fb.upper[j]), (0.0, 0.0));
    }
    let ib = geo.initial_state_bounds();
    assert_eq!((ib.lower[6], ib.upper[6]), (1.0, 1.0));
    assert_eq!((ib.lower[0], ib.upper[0]), (geo.p0(), geo.p0()));
    assert_eq!((ib.lower[1], ib.upper[1]), (0.0, 0.0));
    assert!(ib.lower[3] < ib.upper[3]);
}

#[test]
fn regimes_fix_the_throttle() {
    let prob = build_problem(Study::Meo, 1).unwrap();
    let max = prob.control_bounds(Regime::Max);
    assert_eq!((max.lower[0], max.upper[0]), (1.0, 1.0));
    let coast = prob.control_bounds(Regime::Coast);
    assert_eq!(coast.lower, coast.upper);
    assert_eq!(coast.lower[0], 0.0);
    let free = prob.control_bounds(Regime::Unclassified);
    assert_eq!((free.lower[0], free.upper[0]), (0.0, 1.0));
}

#[test]
fn objective_is_negative_final_mass() {
    let s = SpacecraftState { mee: build_problem(Study::Meo, 1).unwrap().terminal, mass: 0.675 };
    assert_eq!(objective(&s), -0.675);
    assert_eq!(path_constraint(&[0.6, 0.8, 0.0]), 0.0);
}

#[test]
fn horizon_from_guess_admits_coasts() {
    let mut prob = build_problem(Study::Geo, 1).unwrap();
    prob.set_horizon_from_guess(1.0, 0.3, 0.5);
    assert_relative_eq!(prob.horizon.tf_max, 1.0 + 2.0 * prob.terminal_period());
    assert_relative_eq!(prob.horizon.l_max, 0.5 + std::f64::consts::TAU * 2.3);
    assert_eq!(prob.final_time_bounds().1, prob.horizon.tf_max);
}

#[test]
fn config_round_trips_through_toml() {
    for study in Study::ALL {
        let cfg = TransferConfig::tabulated_case(study, 5).unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(TransferConfig::from_toml(&text).unwrap(), cfg);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = TransferConfig::tabulated_case(Study::Meo, 1).unwrap();
    cfg.thrust.t_max_n = -1.0;
    assert!(TransferProblem::new(cfg.clone()).is_err());
    cfg.thrust = ThrustCase { s0: 1.0, t_max_n: 2000.0 };
    assert!(matches!(TransferProblem::new(cfg.clone()), Err(ProblemError::Config(_))));
    cfg.thrust = ThrustCase { s0: 1.0, t_max_n: 1000.0 };
    cfg.terminal.e = 1.2;
    assert!(matches!(TransferProblem::new(cfg), Err(ProblemError::Orbit(_))));
    assert!(TransferConfig::from_toml("name = 3").is_err());
}

proptest! {
    #[test]
    fn custom_orbits_round_trip(a in 6600.0f64..60000.0, e in 0.0f64..0.9, i in 0.0f64..120.0, s0 in 0.001f64..20.0) {
        let cfg = TransferConfig {
            name: "custom".into(),
            constants: Default::default(),
            initial: LEO,
            terminal: OrbitSpec { a_km: a, e, i_deg: i, raan_deg: None, argp_deg: None },
            thrust: ThrustCase { s0, t_max_n: s0 * 1000.0 },
        };
        let back = TransferConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &cfg);
        let prob = TransferProblem::new(cfg).unwrap();
        prop_assert!((prob.pf() - a * 1e3 * (1.0 - e * e) / DU).abs() < 1e-12 * prob.pf());
        prop_assert!((prob.terminal.eccentricity() - e).abs() < 1e-12);
        prop_assert!((prob.terminal.inclination() - i.to_radians()).abs() < 1e-12);
    }
}
