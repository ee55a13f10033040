use approx::assert_abs_diff_eq;
use lowthrust_core::benchmarks::{DoubleIntegratorMinFuel, ExponentialGrowth};
use lowthrust_core::collocation::refine::bisect_all;
use lowthrust_core::collocation::{
    estimate_error, interpolate_solution, refine_mesh, Domain, LgrRule, Mesh, Regime, Trajectory, Transcription,
    TranscriptionOptions,
};
use lowthrust_nlp::{InteriorPoint, Nlp, SolveStatus, SolverOptions};

fn exp_guess() -> Trajectory {
    Trajectory { t: vec![0.0, 1.0], x: vec![vec![1.0], vec![1.0]], u: vec![vec![], vec![]] }
}

fn solve_exp(mesh: &Mesh) -> lowthrust_core::collocation::CollocationSolution {
    let ocp = ExponentialGrowth;
    let tr = Transcription::new(&ocp, mesh, TranscriptionOptions::default()).unwrap();
    let sol = tr.solve(&exp_guess(), &InteriorPoint, &SolverOptions::with_tolerance(1e-12)).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    sol
}

fn max_node_error(sol: &lowthrust_core::collocation::CollocationSolution) -> f64 {
    sol.node_times.iter().zip(&sol.states).map(|(t, x)| (x[0] - t.exp()).abs()).fold(0.0, f64::max)
}

#[test]
fn lgr_quadrature_and_differentiation_exactness() {
    for n in 1..=10usize {
        let rule = LgrRule::new(n).unwrap();
        assert_abs_diff_eq!(rule.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        for k in 0..=(2 * n - 2) {
            let quad: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!((quad - exact).abs() <= 1e-12, "n={n} k={k}: {quad} vs {exact}");
        }
        let support = rule.support();
        for k in 0..=n {
            for (i, &x) in rule.nodes.iter().enumerate() {
                let d: f64 = (0..=n).map(|l| rule.d(i, l) * support[l].powi(k as i32)).sum();
                let exact = if k == 0 { 0.0 } else { k as f64 * x.powi(k as i32 - 1) };
                assert!((d - exact).abs() <= 1e-12, "n={n} k={k}: {d} vs {exact}");
            }
        }
    }
}

#[test]
fn exponential_meets_tolerance_on_coarse_meshes() {
    // Five points on two intervals; three points need eight intervals.
    assert!(max_node_error(&solve_exp(&Mesh::uniform(2, 5))) <= 1e-6);
    assert!(max_node_error(&solve_exp(&Mesh::uniform(8, 3))) <= 1e-6);
}

#[test]
fn exponential_single_interval_errors_match_oracle() {
    // Values from an independent dense solve of the same LGR system.
    assert_abs_diff_eq!(max_node_error(&solve_exp(&Mesh::uniform(1, 3))), 1.5e-3, epsilon = 1e-4);
    assert_abs_diff_eq!(max_node_error(&solve_exp(&Mesh::uniform(1, 5))), 3.1e-6, epsilon = 2e-7);
}

#[test]
fn exponential_error_decreases_under_refinement() {
    let mut mesh = Mesh::uniform(1, 3);
    let mut prev = f64::INFINITY;
    for _ in 0..12 {
        let err = max_node_error(&solve_exp(&mesh));
        assert!(err < prev, "error rose from {prev:e} to {err:e}");
        prev = err;
        if err < 1e-10 {
            return;
        }
        mesh = bisect_all(&mesh);
    }
    panic!("did not reach 1e-10, last error {prev:e}");
}

#[test]
fn interpolation_is_exact_at_nodes_and_accurate_between() {
    let sol = solve_exp(&Mesh::uniform(2, 5));
    let traj = interpolate_solution(&sol, &sol.node_times).unwrap();
    for (a, b) in traj.x.iter().zip(&sol.states) {
        assert_eq!(a[0], b[0]);
    }
    let mids: Vec<f64> = sol.node_times.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let traj = interpolate_solution(&sol, &mids).unwrap();
    for (t, x) in traj.t.iter().zip(&traj.x) {
        assert!((x[0] - t.exp()).abs() < 1e-5);
    }
    assert!(interpolate_solution(&sol, &[1.5]).is_err());
}

#[test]
fn error_estimate_orders_with_degree() {
    let ocp = ExponentialGrowth;
    let coarse = estimate_error(&ocp, &solve_exp(&Mesh::uniform(1, 2)));
    let fine = estimate_error(&ocp, &solve_exp(&Mesh::uniform(1, 8)));
    assert!(fine[0] < coarse[0]);
    assert!(fine[0] < 1e-6);
}

#[test]
fn refinement_is_local() {
    let mesh = Mesh::uniform(4, 3);
    assert_eq!(refine_mesh(&mesh, &[1e-5; 4], 1e-2), None);
    let refined = refine_mesh(&mesh, &[1e-5, 5.0, 1e-5, 1e-5], 1e-2).unwrap();
    assert_eq!(refined.domains[0].intervals, vec![0.25, 0.125, 0.125, 0.25, 0.25]);
    assert_eq!(refined.domains[0].points, vec![3; 5]);
    let raised = refine_mesh(&mesh, &[1e-5, 1e-5, 0.05, 1e-5], 1e-2).unwrap();
    assert_eq!(raised.domains[0].points, vec![3, 3, 4, 3]);
}

#[test]
fn fixed_partition_leaves_solution_unchanged() {
    let single = solve_exp(&Mesh::uniform(2, 5));
    let split = Mesh {
        domains: vec![Domain::uniform(Regime::Unclassified, 1, 5), Domain::uniform(Regime::Unclassified, 1, 5)],
        fractions: vec![0.0, 0.5, 1.0],
        free_boundaries: false,
    };
    let two = solve_exp(&split);
    for (a, b) in single.states.iter().zip(&two.states) {
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
    }
}

#[test]
fn coast_domain_fixes_throttle() {
    let ocp = DoubleIntegratorMinFuel { horizon: 3.0 };
    let mesh = Mesh {
        domains: vec![
            Domain::uniform(Regime::Max, 2, 3),
            Domain::uniform(Regime::Coast, 2, 3),
            Domain::uniform(Regime::Max, 2, 3),
        ],
        fractions: vec![0.0, 0.2, 0.8, 1.0],
        free_boundaries: true,
    };
    let tr = Transcription::new(&ocp, &mesh, TranscriptionOptions::default()).unwrap();
    let n = tr.num_variables();
    let (mut lo, mut hi) = (vec![0.0; n], vec![0.0; n]);
    tr.variable_bounds(&mut lo, &mut hi);
    for p in 6..12 {
        let v = tr.control_var(p, 0);
        assert_eq!((lo[v], hi[v]), (0.0, 0.0));
    }
    for p in (0..6).chain(12..18) {
        let v = tr.control_var(p, 0);
        assert_eq!((lo[v], hi[v]), (1.0, 1.0));
    }
}

#[test]
fn double_integrator_with_known_structure() {
    let ocp = DoubleIntegratorMinFuel { horizon: 3.0 };
    let mesh = Mesh {
        domains: vec![
            Domain::uniform(Regime::Max, 1, 3),
            Domain::uniform(Regime::Coast, 1, 3),
            Domain::uniform(Regime::Max, 1, 3),
        ],
        fractions: vec![0.0, 0.3, 0.7, 1.0],
        free_boundaries: true,
    };
    let guess = Trajectory {
        t: vec![0.0, 3.0],
        x: vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.8]],
        u: vec![vec![1.0, -1.0], vec![1.0, 1.0]],
    };
    let tr = Transcription::new(&ocp, &mesh, TranscriptionOptions::default()).unwrap();
    let sol = tr.solve(&guess, &InteriorPoint, &SolverOptions::with_tolerance(1e-10)).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let [s1, s2] = ocp.switch_times();
    assert_abs_diff_eq!(sol.time_vars[1], s1, epsilon = 1e-8);
    assert_abs_diff_eq!(sol.time_vars[2], s2, epsilon = 1e-8);
    assert_abs_diff_eq!(sol.objective, ocp.minimum_fuel(), epsilon = 1e-8);
}

/// Worst relative gap between the analytic Jacobian and central differences
/// at `z`.
fn jacobian_gap<N: Nlp>(nlp: &N, z: &[f64]) -> f64 {
    let (n, m) = (nlp.num_variables(), nlp.num_constraints());
    let mut dense = vec![0.0; n * m];
    let structure = nlp.jacobian_structure();
    let mut values = vec![0.0; structure.len()];
    nlp.jacobian_values(z, &mut values);
    for (&(r, c), v) in structure.iter().zip(&values) {
        dense[r * n + c] += v;
    }
    let (mut plus, mut minus) = (vec![0.0; m], vec![0.0; m]);
    let mut zz = z.to_vec();
    let mut worst: f64 = 0.0;
    for c in 0..n {
        let h = 1e-6 * z[c].abs().max(1.0);
        zz[c] = z[c] + h;
        nlp.constraints(&zz, &mut plus);
        zz[c] = z[c] - h;
        nlp.constraints(&zz, &mut minus);
        zz[c] = z[c];
        for r in 0..m {
            let fd = (plus[r] - minus[r]) / (2.0 * h);
            let an = dense[r * n + c];
            worst = worst.max((fd - an).abs() / an.abs().max(1.0));
        }
    }
    worst
}

#[test]
fn transfer_jacobian_matches_central_differences() {
    use lowthrust_core::guess::propagated_guess;
    use lowthrust_core::problem::{build_problem, Study};
    use rand::{Rng, SeedableRng};

    let mut prob = build_problem(Study::Meo, 1).unwrap();
    let g = propagated_guess(&prob).unwrap();
    g.apply_horizon(&mut prob);
    let mesh = Mesh::uniform(4, 3);
    let tr = Transcription::new(&prob, &mesh, TranscriptionOptions::default()).unwrap();
    let z0 = tr.initial_point(&g.to_trajectory(&prob)).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let z: Vec<f64> = z0.iter().map(|v| v + 1e-2 * v.abs().max(1e-2) * rng.gen_range(-1.0..1.0)).collect();
        let gap = jacobian_gap(&tr, &z);
        assert!(gap <= 1e-5, "relative gap {gap}");
    }
}
