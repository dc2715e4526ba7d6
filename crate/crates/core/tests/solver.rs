use bloch_transfer::{
    adjoint_gradient_check, solve_tracking, solve_tracking_from, stationarity_residual, BlochState,
    ControlComponent, ControlInput, ControlTrajectory, CostWeights, SweepSettings, SystemParams,
    TargetSpec, TimeGrid,
};

fn x0() -> BlochState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    BlochState::new(h, h, 1.0)
}

fn solve(n: f64, theta: f64, tf: f64, steps: usize) -> bloch_transfer::OptimalSolution {
    let p = SystemParams::new(0.1, n, 1.0).unwrap();
    solve_tracking(
        &x0(),
        &p,
        &CostWeights::new(theta).unwrap(),
        &TimeGrid::new(0.0, tf, steps).unwrap(),
        &SweepSettings::default(),
        &TargetSpec::for_system(&p),
    )
    .unwrap()
}

#[test]
fn zero_temperature_initial_cost_is_control_energy_only() {
    let sol = solve(0.0, 0.1, 20.0, 4000);
    // The guess (0, ω0) reproduces the target, so J = θ ω0² tf.
    assert!((sol.cost_history[0] - 0.1 * 20.0).abs() < 1e-9);
    assert!(sol.final_cost() <= 0.1 * 20.0);
    assert!(sol.converged);
}

#[test]
fn solution_invariants_hold() {
    for n in [0.01, 0.5, 2.0] {
        let sol = solve(n, 0.1, 20.0, 4000);
        assert_eq!(*sol.states.first(), x0());
        assert_eq!(*sol.costates.last(), [0.0; 3]);
        for w in sol.cost_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(sol.converged, "N={n}");
        assert!(sol.stationarity_residual < 10.0 * SweepSettings::default().control_abs_tol);
        let w = CostWeights::new(0.1).unwrap();
        assert_eq!(stationarity_residual(&sol, &w), sol.stationarity_residual);
    }
}

#[test]
fn huge_theta_switches_the_field_off() {
    let sol = solve(0.01, 1e6, 20.0, 2000);
    assert!(sol.controls.max_abs() <= 1e-3);
    let p = SystemParams::new(0.1, 0.01, 1.0).unwrap();
    let relax = bloch_transfer::simulate(
        &x0(),
        &p,
        &ControlTrajectory::constant(*sol.controls.grid(), ControlInput::new(0.0, 0.0)),
    )
    .unwrap();
    for (a, b) in sol.states.samples().iter().zip(relax.samples()) {
        assert!((*a - *b).norm() < 1e-2);
    }
}

#[test]
fn cold_reservoir_transfers_population_on_default_horizon() {
    let sol = solve(0.01, 0.1, 30.0, 6000);
    let (_, pe) = bloch_transfer::populations(sol.states.last());
    assert!(pe > 0.9, "p_e = {pe}");
    assert!(sol.stationarity_residual < 1e-3);
}

#[test]
fn plain_relaxed_sweep_is_monotone() {
    let p = SystemParams::new(0.1, 0.5, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 10.0, 1000).unwrap();
    let settings = SweepSettings {
        memory: 0,
        max_iterations: 40,
        ..SweepSettings::default()
    };
    let sol = solve_tracking_from(
        &x0(),
        &p,
        &CostWeights::default(),
        &settings,
        &TargetSpec::for_system(&p),
        ControlTrajectory::constant(grid, ControlInput::new(0.0, 1.0)),
    )
    .unwrap();
    assert!(sol.iterations > 0);
    assert!(sol.final_cost() < sol.cost_history[0]);
    for w in sol.cost_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn gradients_vanish_at_the_optimum() {
    let sol = solve(0.5, 0.1, 10.0, 2000);
    let p = SystemParams::new(0.1, 0.5, 1.0).unwrap();
    for node in [1, 250, 999, 1500, 1999] {
        for component in [ControlComponent::Bx, ControlComponent::Bz] {
            let c = adjoint_gradient_check(
                &x0(),
                &p,
                &CostWeights::default(),
                &TargetSpec::for_system(&p),
                &sol.controls,
                node,
                component,
                1e-6,
            )
            .unwrap();
            assert!(
                c.adjoint.abs() < 1e-6 && c.finite_difference.abs() < 1e-6,
                "{c:?}"
            );
        }
    }
}

#[test]
fn effort_gradient_scales_with_theta_when_costate_vanishes() {
    // N = 0 with the free field tracks the target, so only 2θu remains.
    let p = SystemParams::new(0.1, 0.0, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 10.0, 1000).unwrap();
    let controls = ControlTrajectory::constant(grid, ControlInput::new(0.0, 1.0));
    let grad = |theta: f64| {
        adjoint_gradient_check(
            &x0(),
            &p,
            &CostWeights::new(theta).unwrap(),
            &TargetSpec::for_system(&p),
            &controls,
            400,
            ControlComponent::Bz,
            1e-6,
        )
        .unwrap()
    };
    let (a, b) = (grad(0.1), grad(0.2));
    assert!((b.adjoint / a.adjoint - 2.0).abs() < 1e-6);
    assert!((a.adjoint - grid.step_size() * 2.0 * 0.1).abs() < 1e-9);
    assert!(a.relative_error() < 1e-4);
}
