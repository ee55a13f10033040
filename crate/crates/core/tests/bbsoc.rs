use lowthrust_core::bbsoc::*;
use lowthrust_core::benchmarks::DoubleIntegratorMinFuel;
use lowthrust_core::collocation::{Regime, Trajectory};
use lowthrust_core::problem::{build_problem, Study};
use proptest::prelude::*;

/// Burn length of the burn-coast-burn optimum for horizon `tf`, found by
/// bisection on the distance covered: `t² + t(tf − 2t) = 1`.
fn burn_length(tf: f64) -> f64 {
    let covered = |t: f64| t * t + t * (tf - 2.0 * t);
    let (mut lo, mut hi) = (0.0, tf / 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if covered(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn smooth_guess(tf: f64) -> Trajectory {
    Trajectory {
        t: vec![0.0, tf],
        x: vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]],
        u: vec![vec![0.5, -1.0], vec![0.5, 1.0]],
    }
}

fn config() -> DetectionConfig {
    DetectionConfig { eta: 0.1, intervals: 20, points: 3, nlp_tolerance: 1e-10, ..Default::default() }
}

#[test]
fn double_integrator_structure_is_detected() {
    let tf = 3.0;
    let ocp = DoubleIntegratorMinFuel { horizon: tf };
    let out = bbsoc_solve(&ocp, &config(), &smooth_guess(tf)).unwrap();
    assert_eq!(out.structure.kinds(), vec![ArcKind::Max, ArcKind::Coast, ArcKind::Max]);
    let t1 = burn_length(tf);
    assert!((t1 - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-14);
    let s = out.structure.switch_times();
    assert!((s[0] - t1).abs() < 1e-4, "{s:?}");
    assert!((s[1] - (tf - t1)).abs() < 1e-4, "{s:?}");
    assert!((out.solution.objective - 2.0 * t1).abs() < 1e-6);
    assert!(out.mesh_converged);
    assert!(!out.history.is_empty());
}

#[test]
fn typed_solutions_keep_thrust_on_its_bounds() {
    let ocp = DoubleIntegratorMinFuel { horizon: 4.0 };
    let out = bbsoc_solve(&ocp, &config(), &smooth_guess(4.0)).unwrap();
    let sol = &out.solution;
    for (u, &d) in sol.controls.iter().zip(&sol.point_domain) {
        match sol.mesh.domains[d].regime {
            Regime::Max => assert_eq!(u[0], 1.0),
            Regime::Coast => assert_eq!(u[0], 0.0),
            Regime::Unclassified => panic!("untyped domain in the final solution"),
        }
    }
    let times = sol.domain_times();
    for (a, b) in &times {
        assert!(b - a >= config().min_domain_width);
    }
    for w in times.windows(2) {
        assert!(w[1].0 > w[0].0);
    }
    // Structure exploitation never loses to the smooth solve.
    assert!(sol.objective <= out.smooth.objective + 1e-6);
    // Re-detection reproduces the final arc count.
    let again = detect_structure(sol, (0, 1.0), config().eta);
    assert_eq!(again.thrust_arcs(), out.structure.thrust_arcs());
}

#[test]
fn partition_from_a_given_structure() {
    let tf = 3.0;
    let ocp = DoubleIntegratorMinFuel { horizon: tf };
    let cfg = config();
    let out = bbsoc_solve(&ocp, &cfg, &smooth_guess(tf)).unwrap();
    let arcs = vec![
        Arc { kind: ArcKind::Max, start: 0.0, end: 0.5, points: 6 },
        Arc { kind: ArcKind::Coast, start: 0.5, end: 2.5, points: 12 },
        Arc { kind: ArcKind::Max, start: 2.5, end: 3.0, points: 6 },
    ];
    let sol = partition_and_solve(&ocp, &ControlStructure { arcs }, &out.smooth, &cfg, &lowthrust_nlp::InteriorPoint)
        .unwrap();
    assert_eq!(sol.mesh.domains.len(), 3);
    assert!((sol.objective - 2.0 * burn_length(tf)).abs() < 1e-5);
}

#[test]
fn transfer_case_detects_two_burns() {
    let mut prob = build_problem(Study::Meo, 3).unwrap();
    let g = lowthrust_core::guess::propagated_guess(&prob).unwrap();
    g.apply_horizon(&mut prob);
    let cfg = DetectionConfig { eta: 0.1, intervals: 10, ..Default::default() };
    let out = bbsoc_solve(&prob, &cfg, &g.to_trajectory(&prob)).unwrap();
    assert_eq!(out.structure.signature(), "M-C-M");
    assert_eq!(out.structure.thrust_arcs(), 2);
    assert!(out.solution.max_violation <= 1e-6);
}

#[test]
fn bad_settings_are_configuration_errors() {
    let ocp = DoubleIntegratorMinFuel { horizon: 3.0 };
    let cfg = DetectionConfig { eta: 1.5, ..config() };
    assert!(matches!(bbsoc_solve(&ocp, &cfg, &smooth_guess(3.0)), Err(BbsocError::Config(_))));
    let cfg = DetectionConfig { intervals: 0, ..config() };
    assert!(matches!(bbsoc_solve(&ocp, &cfg, &smooth_guess(3.0)), Err(BbsocError::Config(_))));
}

#[test]
fn structure_text_forms() {
    let s = ControlStructure {
        arcs: vec![
            Arc { kind: ArcKind::Coast, start: 0.0, end: 1.0, points: 3 },
            Arc { kind: ArcKind::Max, start: 1.0, end: 2.0, points: 3 },
            Arc { kind: ArcKind::SingularSuspect, start: 2.0, end: 3.0, points: 6 },
        ],
    };
    assert_eq!(s.signature(), "C-M-S");
    assert!(s.has_singular());
    assert_eq!(s.switch_count(), 2);
    assert_eq!(s.switch_times(), vec![1.0, 2.0]);
}

fn profile() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((0.01f64..1.0, prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0]), 1..60).prop_map(|steps| {
        let mut t = 0.0;
        let mut times = Vec::new();
        let mut thrust = Vec::new();
        for (dt, v) in steps {
            times.push(t);
            thrust.push(v);
            t += dt;
        }
        (times, thrust)
    })
}

proptest! {
    #[test]
    fn detection_tiles_the_horizon((times, thrust) in profile(), eta in 0.01f64..0.4) {
        let tf = times.last().unwrap() + 0.5;
        let s = classify_profile(&times, &thrust, 0.0, tf, eta, 1.0);
        prop_assert!(!s.arcs.is_empty());
        prop_assert_eq!(s.arcs[0].start, 0.0);
        prop_assert_eq!(s.arcs.last().unwrap().end, tf);
        for w in s.arcs.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].kind != w[1].kind);
        }
        for a in &s.arcs {
            prop_assert!(a.end > a.start);
        }
        prop_assert_eq!(s.arcs.iter().map(|a| a.points).sum::<usize>(), times.len());
        let switches = s.switch_times();
        prop_assert!(switches.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(s.thrust_arcs(), s.arcs.iter().filter(|a| a.kind == ArcKind::Max).count());
    }

    #[test]
    fn crisp_profiles_detect_their_own_runs(runs in prop::collection::vec(3usize..8, 1..8), first_on in any::<bool>()) {
        let mut thrust = Vec::new();
        for (r, &n) in runs.iter().enumerate() {
            let on = (r % 2 == 0) == first_on;
            thrust.extend(std::iter::repeat(if on { 1.0 } else { 0.0 }).take(n));
        }
        let times: Vec<f64> = (0..thrust.len()).map(|k| k as f64).collect();
        let s = classify_profile(&times, &thrust, 0.0, thrust.len() as f64, 0.1, 1.0);
        prop_assert_eq!(s.arcs.len(), runs.len());
        let mut k = 0;
        for (a, &n) in s.arcs.iter().zip(&runs) {
            prop_assert_eq!(a.points, n);
            if k > 0 {
                prop_assert!((a.start - (k as f64 - 0.5)).abs() < 1e-12);
            }
            k += n;
        }
    }
}
