//! Population transfer in a dissipative two-level system.
//!
//! The qubit is described by its Bloch vector `x = (x1, x2, x3)` obeying the
//! affine Lindblad-Bloch equations
//!
//! ```text
//! dx1/dt = -((2N+1)/2) γ0 x1 + Bz x2
//! dx2/dt = -Bz x1 - ((2N+1)/2) γ0 x2 + Bx x3
//! dx3/dt = -Bx x2 - (2N+1) γ0 x3 - γ0
//! ```
//!
//! where `N` is the mean thermal occupation of the reservoir and
//! `u = (Bx, Bz)` the external control. The crate provides closed-form free
//! evolution, a fixed-step RK4 integrator for state and costate, and a
//! forward-backward sweep solver for the quadratic tracking problem
//!
//! ```text
//! J[u] = ∫ |x(t) - x⁰(t)|² + θ (Bx² + Bz²) dt
//! ```
//!
//! whose target `x⁰` is the uncontrolled zero-temperature trajectory.

pub mod adjoint;
pub mod integrate;
pub mod optimizer;
pub mod physics;
pub mod types;

pub use adjoint::discrete_cost_gradient;
pub use integrate::{integrate_backward, integrate_forward, IntegrationError, VectorField};
pub use optimizer::{
    adjoint_gradient_check, control_energy, control_from_costate, costate_rhs, evaluate_cost,
    simulate, solve_costate, solve_tracking, solve_tracking_from, stationarity_residual,
    tracking_error, ControlComponent, CostWeights, GradientCheck, OptimalSolution, SolveError,
    SweepSettings, TargetSpec,
};
pub use physics::{
    bloch_rhs, decoherence_factor, eigen_basis, free_evolution, mean_occupation_to_temperature,
    populations, stationary_state, target_trajectory, EigenBasis, PhysicsError, BOLTZMANN,
    REDUCED_PLANCK,
};
pub use types::{
    BlochState, ControlInput, ControlTrajectory, ParamError, SystemParams, TimeGrid, Trajectory,
    Vec3,
};
