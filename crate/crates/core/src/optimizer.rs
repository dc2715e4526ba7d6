//! Pontryagin tracking control solved by forward-backward sweep.
//!
//! The state runs forward from `x(t0) = x0`, the costate
//!
//! ```text
//! dλ/dt = -2 (x - x⁰) - A(u)ᵀ λ,    λ(tf) = 0
//! ```
//!
//! runs backward, and the stationarity condition `∂H/∂u = 0` gives the
//! control in closed form from `(x, λ)`. Each sweep relaxes the current
//! control toward that candidate, halving the relaxation until the cost
//! stops increasing, so the accepted cost sequence is monotone.

use std::collections::VecDeque;

use thiserror::Error;

use crate::adjoint::discrete_cost_gradient;
use crate::integrate::{integrate_backward, integrate_forward, IntegrationError};
use crate::physics::{bloch_rhs, target_trajectory};
use crate::types::{
    compensated_sum, positive, BlochState, ControlInput, ControlTrajectory, ParamError,
    SystemParams, TimeGrid, Trajectory, Vec3,
};

/// Relaxation below this is treated as a failed line search.
const MIN_RELAXATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("sweep iteration {iteration}: {source}")]
    Integration {
        iteration: usize,
        #[source]
        source: IntegrationError,
    },
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("trajectories are sampled on different grids")]
    GridMismatch,
}

/// Weight θ of the control energy against the tracking error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    theta: f64,
}

impl CostWeights {
    pub fn new(theta: f64) -> Result<Self, ParamError> {
        positive("theta", theta)?;
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { theta: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub max_iterations: usize,
    /// Stop when the relative decrease of the cost falls below this.
    pub cost_rel_tol: f64,
    /// Stop when the full sweep update moves no node by more than this.
    pub control_abs_tol: f64,
    /// Relaxation tried first at each iteration, in `(0, 1]`.
    pub relaxation_init: f64,
    /// Factor applied to the relaxation on a rejected step, in `(0, 1)`.
    pub relaxation_backtrack: f64,
    /// Past steps kept to precondition the sweep direction; 0 gives the
    /// plain relaxed update `u <- (1 - α) u + α u*`.
    pub memory: usize,
}

impl SweepSettings {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.max_iterations == 0 {
            return Err(ParamError::OutOfRange {
                name: "max_iterations",
                requirement: "at least 1",
                value: 0.0,
            });
        }
        positive("cost_rel_tol", self.cost_rel_tol)?;
        positive("control_abs_tol", self.control_abs_tol)?;
        if !(self.relaxation_init > 0.0 && self.relaxation_init <= 1.0) {
            return Err(ParamError::OutOfRange {
                name: "relaxation_init",
                requirement: "in (0, 1]",
                value: self.relaxation_init,
            });
        }
        if !(self.relaxation_backtrack > 0.0 && self.relaxation_backtrack < 1.0) {
            return Err(ParamError::OutOfRange {
                name: "relaxation_backtrack",
                requirement: "in (0, 1)",
                value: self.relaxation_backtrack,
            });
        }
        Ok(())
    }
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            cost_rel_tol: 1e-8,
            control_abs_tol: 1e-6,
            relaxation_init: 1.0,
            relaxation_backtrack: 0.5,
            memory: 10,
        }
    }
}

/// Parameters of the tracking target, the uncontrolled zero-temperature
/// trajectory from the same initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec {
    pub gamma0: f64,
    pub omega_ref: f64,
}

impl TargetSpec {
    pub fn for_system(p: &SystemParams) -> Self {
        Self {
            gamma0: p.gamma0,
            omega_ref: p.omega0,
        }
    }

    pub fn sample(&self, x0: &BlochState, grid: &TimeGrid) -> Trajectory<BlochState> {
        Trajectory::from_fn(*grid, |t| self.at(x0, t - grid.t0()))
    }

    fn at(&self, x0: &BlochState, elapsed: f64) -> BlochState {
        target_trajectory(x0, elapsed, self.gamma0, self.omega_ref)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlComponent {
    Bx,
    Bz,
}

impl ControlComponent {
    fn get(self, u: &ControlInput) -> f64 {
        match self {
            Self::Bx => u.bx,
            Self::Bz => u.bz,
        }
    }

    fn get_mut(self, u: &mut ControlInput) -> &mut f64 {
        match self {
            Self::Bx => &mut u.bx,
            Self::Bz => &mut u.bz,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub controls: ControlTrajectory,
    pub states: Trajectory<BlochState>,
    pub costates: Trajectory<Vec3>,
    pub targets: Trajectory<BlochState>,
    /// Cost of the initial guess followed by every accepted iterate.
    pub cost_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub stationarity_residual: f64,
    /// The line search could not find a non-increasing step.
    pub stalled: bool,
}

impl OptimalSolution {
    pub fn final_cost(&self) -> f64 {
        *self
            .cost_history
            .last()
            .expect("history holds the initial cost")
    }

    /// `∫ |x - x⁰|² dt`.
    pub fn tracking_error(&self) -> f64 {
        tracking_error(&self.states, &self.targets).expect("solver trajectories share a grid")
    }

    /// `∫ (Bx² + Bz²) dt`.
    pub fn control_energy(&self) -> f64 {
        control_energy(&self.controls)
    }
}

/// Costate rate `-2 (x - x⁰) - A(u)ᵀ λ`, written out per component.
pub fn costate_rhs(
    lam: &Vec3,
    x: &BlochState,
    x_target: &BlochState,
    u: &ControlInput,
    p: &SystemParams,
) -> Vec3 {
    let g = p.transverse_rate();
    [
        -2.0 * (x.x1 - x_target.x1) + g * lam[0] + u.bz * lam[1],
        -2.0 * (x.x2 - x_target.x2) - u.bz * lam[0] + g * lam[1] + u.bx * lam[2],
        -2.0 * (x.x3 - x_target.x3) - u.bx * lam[1] + p.longitudinal_rate() * lam[2],
    ]
}

/// Control zeroing `∂H/∂u` for the given state and costate.
pub fn control_from_costate(x: &BlochState, lam: &Vec3, w: &CostWeights) -> ControlInput {
    let scale = 0.5 / w.theta;
    ControlInput::new(
        scale * (lam[2] * x.x2 - lam[1] * x.x3),
        scale * (lam[1] * x.x1 - lam[0] * x.x2),
    )
}

fn check_grids(a: &TimeGrid, b: &TimeGrid) -> Result<(), SolveError> {
    if a == b {
        Ok(())
    } else {
        Err(SolveError::GridMismatch)
    }
}

/// Trapezoidal `∫ |x - x⁰|² dt`.
pub fn tracking_error(
    states: &Trajectory<BlochState>,
    targets: &Trajectory<BlochState>,
) -> Result<f64, SolveError> {
    check_grids(states.grid(), targets.grid())?;
    let grid = states.grid();
    Ok(compensated_sum(
        states
            .samples()
            .iter()
            .zip(targets.samples())
            .enumerate()
            .map(|(k, (x, x0))| grid.trapezoid_weight(k) * (*x - *x0).norm_squared()),
    ))
}

/// Trapezoidal `∫ (Bx² + Bz²) dt`.
pub fn control_energy(controls: &ControlTrajectory) -> f64 {
    controls.integrate(|_, u| u.norm_squared())
}

/// Trapezoidal quadrature of the tracking cost
/// `∫ |x - x⁰|² + θ (Bx² + Bz²) dt`.
pub fn evaluate_cost(
    states: &Trajectory<BlochState>,
    targets: &Trajectory<BlochState>,
    controls: &ControlTrajectory,
    w: &CostWeights,
) -> Result<f64, SolveError> {
    check_grids(states.grid(), controls.grid())?;
    Ok(tracking_error(states, targets)? + w.theta * control_energy(controls))
}

/// Integrates the Bloch equations under `controls` from `x0`.
pub fn simulate(
    x0: &BlochState,
    p: &SystemParams,
    controls: &ControlTrajectory,
) -> Result<Trajectory<BlochState>, IntegrationError> {
    let field = |t: f64, y: &Vec3| bloch_rhs(&BlochState::from(*y), &controls.at(t), p).to_array();
    Ok(integrate_forward(&field, x0.to_array(), controls.grid())?.map(|y| BlochState::from(*y)))
}

/// Cubic Hermite interpolant of the state between nodes, using the Bloch
/// rates at the nodes as slopes. Keeps the costate pass fourth-order.
struct StateInterpolant<'a> {
    states: &'a Trajectory<BlochState>,
    rates: Vec<BlochState>,
}

impl<'a> StateInterpolant<'a> {
    fn new(
        states: &'a Trajectory<BlochState>,
        controls: &ControlTrajectory,
        p: &SystemParams,
    ) -> Self {
        let rates = states
            .samples()
            .iter()
            .zip(controls.samples())
            .map(|(x, u)| bloch_rhs(x, u, p))
            .collect();
        Self { states, rates }
    }

    fn at(&self, t: f64) -> BlochState {
        let grid = self.states.grid();
        let (k, s) = grid.locate(t);
        let xs = self.states.samples();
        if s == 0.0 {
            return xs[k];
        }
        if s == 1.0 {
            return xs[k + 1];
        }
        let h = grid.step_size();
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * xs[k] + (h * h10) * self.rates[k] + h01 * xs[k + 1] + (h * h11) * self.rates[k + 1]
    }
}

/// Integrates the costate backward from `λ(tf) = 0` along `states`.
pub fn solve_costate(
    states: &Trajectory<BlochState>,
    controls: &ControlTrajectory,
    x0: &BlochState,
    target: &TargetSpec,
    p: &SystemParams,
) -> Result<Trajectory<Vec3>, IntegrationError> {
    let interp = StateInterpolant::new(states, controls, p);
    let t0 = states.grid().t0();
    let field = |t: f64, lam: &Vec3| {
        costate_rhs(
            lam,
            &interp.at(t),
            &target.at(x0, t - t0),
            &controls.at(t),
            p,
        )
    };
    integrate_backward(&field, [0.0; 3], states.grid())
}

fn candidate_controls(
    states: &Trajectory<BlochState>,
    costates: &Trajectory<Vec3>,
    w: &CostWeights,
) -> ControlTrajectory {
    let samples = states
        .samples()
        .iter()
        .zip(costates.samples())
        .map(|(x, lam)| control_from_costate(x, lam, w))
        .collect();
    Trajectory::new(*states.grid(), samples).expect("same grid")
}

fn max_node_diff(a: &ControlTrajectory, b: &ControlTrajectory) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(u, v)| u.max_abs_diff(v))
        .fold(0.0, f64::max)
}

/// Max over nodes of `|u - u*(x, λ)|`, the distance from the stationarity
/// condition.
pub fn stationarity_residual(solution: &OptimalSolution, w: &CostWeights) -> f64 {
    max_node_diff(
        &solution.controls,
        &candidate_controls(&solution.states, &solution.costates, w),
    )
}

/// `[bx0, bz0, bx1, bz1, ...]`.
fn flatten(u: &ControlTrajectory) -> Vec<f64> {
    u.samples().iter().flat_map(|c| [c.bx, c.bz]).collect()
}

fn unflatten(grid: TimeGrid, values: impl Iterator<Item = f64>) -> ControlTrajectory {
    let flat: Vec<f64> = values.collect();
    let samples = flat
        .chunks_exact(2)
        .map(|c| ControlInput::new(c[0], c[1]))
        .collect();
    Trajectory::new(grid, samples).expect("same grid")
}

/// `∂H/∂u = 2θ (u - u*)` at every node, flattened. This is the L² gradient
/// of the cost with respect to the control.
fn control_gradient(
    controls: &ControlTrajectory,
    candidate: &ControlTrajectory,
    w: &CostWeights,
) -> Vec<f64> {
    let two_theta = 2.0 * w.theta;
    flatten(controls)
        .iter()
        .zip(flatten(candidate))
        .map(|(u, c)| two_theta * (u - c))
        .collect()
}

/// Limited-memory BFGS directions in the trapezoid-weighted L² inner
/// product. With no stored pairs the direction is `u* - u`, the plain
/// sweep update.
struct QuasiNewton {
    capacity: usize,
    weights: Vec<f64>,
    theta: f64,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl QuasiNewton {
    fn new(capacity: usize, weights: Vec<f64>, theta: f64) -> Self {
        Self {
            capacity,
            weights,
            theta,
            pairs: VecDeque::with_capacity(capacity),
        }
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    fn steepest(&self, gradient: &[f64]) -> Vec<f64> {
        let scale = -0.5 / self.theta;
        gradient.iter().map(|g| scale * g).collect()
    }

    fn direction(&mut self, gradient: &[f64]) -> Vec<f64> {
        let Some((s_last, y_last, _)) = self.pairs.back() else {
            return self.steepest(gradient);
        };
        let gamma = self.dot(s_last, y_last) / self.dot(y_last, y_last);
        let mut q = gradient.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * self.dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        q.iter_mut().for_each(|qi| *qi *= gamma);
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * self.dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|qi| *qi = -*qi);
        if self.dot(&q, gradient) < 0.0 {
            q
        } else {
            // lost positive definiteness; restart from the plain sweep
            self.pairs.clear();
            self.steepest(gradient)
        }
    }

    fn record(&mut self, moved: Vec<f64>, change: Vec<f64>) {
        if self.capacity == 0 {
            return;
        }
        let curvature = self.dot(&moved, &change);
        let scale = self.dot(&moved, &moved).sqrt() * self.dot(&change, &change).sqrt();
        // Also rejects NaN curvature.
        if curvature.partial_cmp(&(1e-14 * scale)) != Some(std::cmp::Ordering::Greater) {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((moved, change, 1.0 / curvature));
    }
}

/// Runs the sweep from the free-evolution guess `u ≡ (0, ω0)`.
pub fn solve_tracking(
    x0: &BlochState,
    p: &SystemParams,
    w: &CostWeights,
    grid: &TimeGrid,
    settings: &SweepSettings,
    target: &TargetSpec,
) -> Result<OptimalSolution, SolveError> {
    let guess = ControlTrajectory::constant(*grid, ControlInput::new(0.0, p.omega0));
    solve_tracking_from(x0, p, w, settings, target, guess)
}

/// Runs the sweep from an explicit initial control guess.
///
/// Convergence is declared when the full (unrelaxed) sweep update moves no
/// node by more than `control_abs_tol`, or when an accepted step lowers the
/// cost by less than `cost_rel_tol` relative while that update is within
/// `10 * control_abs_tol`. Running out of iterations or relaxation returns
/// the best iterate with `converged = false`.
pub fn solve_tracking_from(
    x0: &BlochState,
    p: &SystemParams,
    w: &CostWeights,
    settings: &SweepSettings,
    target: &TargetSpec,
    initial: ControlTrajectory,
) -> Result<OptimalSolution, SolveError> {
    p.validate()?;
    settings.validate()?;
    let grid = *initial.grid();
    let targets = target.sample(x0, &grid);
    let fail = |iteration| move |source| SolveError::Integration { iteration, source };

    let mut controls = initial;
    let mut states = simulate(x0, p, &controls).map_err(fail(0))?;
    let mut cost = evaluate_cost(&states, &targets, &controls, w)?;
    let mut costates = solve_costate(&states, &controls, x0, target, p).map_err(fail(0))?;
    let mut candidate = candidate_controls(&states, &costates, w);
    let mut residual = max_node_diff(&controls, &candidate);

    let mut history = vec![cost];
    let mut converged = residual < settings.control_abs_tol;
    let mut stalled = false;
    let mut iterations = 0;

    let weights: Vec<f64> = (0..grid.len())
        .flat_map(|k| {
            let w = grid.trapezoid_weight(k);
            [w, w]
        })
        .collect();
    let mut directions = QuasiNewton::new(settings.memory, weights, w.theta);
    let mut gradient = control_gradient(&controls, &candidate, w);

    while !converged && iterations < settings.max_iterations {
        let iteration = iterations + 1;
        let current = flatten(&controls);
        let step = directions.direction(&gradient);
        let mut alpha = settings.relaxation_init;
        let accepted = loop {
            let trial = unflatten(grid, current.iter().zip(&step).map(|(u, d)| u + alpha * d));
            let trial_states = simulate(x0, p, &trial).map_err(fail(iteration))?;
            let trial_cost = evaluate_cost(&trial_states, &targets, &trial, w)?;
            if trial_cost <= cost {
                break Some((trial, trial_states, trial_cost));
            }
            alpha *= settings.relaxation_backtrack;
            if alpha < MIN_RELAXATION {
                break None;
            }
        };
        let Some((trial, trial_states, trial_cost)) = accepted else {
            stalled = true;
            break;
        };
        iterations = iteration;
        let rel_change = (cost - trial_cost) / cost.abs().max(f64::MIN_POSITIVE);
        controls = trial;
        states = trial_states;
        cost = trial_cost;
        history.push(cost);
        costates = solve_costate(&states, &controls, x0, target, p).map_err(fail(iteration))?;
        candidate = candidate_controls(&states, &costates, w);
        residual = max_node_diff(&controls, &candidate);

        let new_gradient = control_gradient(&controls, &candidate, w);
        let moved: Vec<f64> = flatten(&controls)
            .iter()
            .zip(&current)
            .map(|(a, b)| a - b)
            .collect();
        let change: Vec<f64> = new_gradient
            .iter()
            .zip(&gradient)
            .map(|(a, b)| a - b)
            .collect();
        directions.record(moved, change);
        gradient = new_gradient;

        converged = residual < settings.control_abs_tol
            || (rel_change < settings.cost_rel_tol && residual < 10.0 * settings.control_abs_tol);
    }

    Ok(OptimalSolution {
        controls,
        states,
        costates,
        targets,
        cost_history: history,
        converged,
        iterations,
        stationarity_residual: residual,
        stalled,
    })
}

/// Adjoint and central-difference derivatives of the cost with respect to
/// one control sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Exact derivative of the discretized cost from the discrete adjoint.
    pub adjoint: f64,
    /// Central difference of the discretized cost.
    pub finite_difference: f64,
    /// `w_k ∂H/∂u(t_k)` from the continuous costate, accurate to `O(h²)`.
    pub costate_estimate: f64,
}

impl GradientCheck {
    /// `|adjoint - fd| / max(|fd|, 1e-8)`.
    pub fn relative_error(&self) -> f64 {
        (self.adjoint - self.finite_difference).abs() / self.finite_difference.abs().max(1e-8)
    }
}

/// Compares the adjoint derivative of the cost at control sample `node`
/// against a central difference with step `step`.
#[allow(clippy::too_many_arguments)]
pub fn adjoint_gradient_check(
    x0: &BlochState,
    p: &SystemParams,
    w: &CostWeights,
    target: &TargetSpec,
    controls: &ControlTrajectory,
    node: usize,
    component: ControlComponent,
    step: f64,
) -> Result<GradientCheck, SolveError> {
    let grid = *controls.grid();
    assert!(
        node > 0 && node < grid.steps(),
        "node {node} is not interior"
    );
    assert!(step > 0.0, "step must be positive");
    let fail = |source| SolveError::Integration {
        iteration: 0,
        source,
    };
    let targets = target.sample(x0, &grid);

    let states = simulate(x0, p, controls).map_err(fail)?;
    let gradient = discrete_cost_gradient(x0, p, w, target, controls).ok_or_else(|| {
        fail(IntegrationError::Diverged {
            step: 0,
            time: grid.t0(),
        })
    })?;
    let adjoint = component.get(&gradient[node]);

    let costates = solve_costate(&states, controls, x0, target, p).map_err(fail)?;
    let x = &states.samples()[node];
    let lam = &costates.samples()[node];
    let u = &controls.samples()[node];
    let switching = control_from_costate(x, lam, &CostWeights { theta: 0.5 });
    let costate_estimate = grid.trapezoid_weight(node)
        * (2.0 * w.theta * component.get(u) - component.get(&switching));

    let cost_with = |delta: f64| -> Result<f64, SolveError> {
        let mut perturbed = controls.clone();
        *component.get_mut(&mut perturbed.samples_mut()[node]) += delta;
        let s = simulate(x0, p, &perturbed).map_err(fail)?;
        evaluate_cost(&s, &targets, &perturbed, w)
    };
    let finite_difference = (cost_with(step)? - cost_with(-step)?) / (2.0 * step);
    Ok(GradientCheck {
        adjoint,
        finite_difference,
        costate_estimate,
    })
}
