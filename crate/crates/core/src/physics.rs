//! Bloch equations of the thermally damped qubit and their closed-form
//! solutions.

use thiserror::Error;

use crate::types::{BlochState, ControlInput, SystemParams, Vec3};

/// Boltzmann constant in J/K, at the precision used for the temperature scale.
pub const BOLTZMANN: f64 = 1.380662e-23;
/// Reduced Planck constant in J·s.
pub const REDUCED_PLANCK: f64 = 1.0545887e-34;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("degenerate Hamiltonian: Bx = Bz = 0 has no preferred eigenbasis")]
    DegenerateHamiltonian,
    #[error("mean occupation must be >= 0, got {0}")]
    NegativeOccupation(f64),
}

/// Right-hand side `A(u) x + b` of the Bloch equations.
pub fn bloch_rhs(x: &BlochState, u: &ControlInput, p: &SystemParams) -> BlochState {
    let g = p.transverse_rate();
    BlochState::new(
        -g * x.x1 + u.bz * x.x2,
        -u.bz * x.x1 - g * x.x2 + u.bx * x.x3,
        -u.bx * x.x2 - p.longitudinal_rate() * x.x3 - p.gamma0,
    )
}

/// Drift matrix `A(u)`, row-major.
pub fn drift_matrix(u: &ControlInput, p: &SystemParams) -> [Vec3; 3] {
    let g = p.transverse_rate();
    [
        [-g, u.bz, 0.0],
        [-u.bz, -g, u.bx],
        [0.0, -u.bx, -p.longitudinal_rate()],
    ]
}

/// Uncontrolled evolution (`Bx = 0`, `Bz = ω0`) from `x0` after time `t`.
pub fn free_evolution(x0: &BlochState, t: f64, p: &SystemParams) -> BlochState {
    relax(
        x0,
        t,
        p.transverse_rate(),
        p.longitudinal_rate(),
        p.omega0,
        p.n_mean,
    )
}

fn relax(
    x0: &BlochState,
    t: f64,
    transverse: f64,
    longitudinal: f64,
    omega: f64,
    n: f64,
) -> BlochState {
    let coherence = (-transverse * t).exp();
    let (s, c) = (omega * t).sin_cos();
    let x3_inf = -1.0 / (2.0 * n + 1.0);
    let decay = (-longitudinal * t).exp();
    BlochState::new(
        coherence * (x0.x2 * s + x0.x1 * c),
        coherence * (x0.x2 * c - x0.x1 * s),
        decay * x0.x3 + (1.0 - decay) * x3_inf,
    )
}

/// Fixed point `(0, 0, -1/(2N+1))` of the uncontrolled dynamics.
pub fn stationary_state(p: &SystemParams) -> BlochState {
    BlochState::new(0.0, 0.0, -1.0 / (2.0 * p.n_mean + 1.0))
}

/// Ground and excited populations `(p_g, p_e)`.
pub fn populations(x: &BlochState) -> (f64, f64) {
    (x.rho00(), x.rho11())
}

/// Decoherence factor `Λ = |ρ01| = ½ √(x1² + x2²)`.
pub fn decoherence_factor(x: &BlochState) -> f64 {
    0.5 * x.x1.hypot(x.x2)
}

/// Tracking target: the zero-temperature, uncontrolled trajectory from `x0`,
/// rotating at `omega_ref`.
pub fn target_trajectory(x0: &BlochState, t: f64, gamma0: f64, omega_ref: f64) -> BlochState {
    relax(x0, t, 0.5 * gamma0, gamma0, omega_ref, 0.0)
}

/// Instantaneous eigensystem of `H = ½ (Bz σz + Bx σx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenBasis {
    /// Level splitting `ΔE = √(Bx² + Bz²)`.
    pub delta_e: f64,
    /// Mixing angle `η`, the direction of the field in the x-z plane.
    pub eta: f64,
    /// Amplitudes of `|λ+⟩` on `(|0⟩, |1⟩)`; eigenvalue `+ΔE/2`.
    pub plus: [f64; 2],
    /// Amplitudes of `|λ−⟩`; eigenvalue `−ΔE/2`.
    pub minus: [f64; 2],
}

pub fn eigen_basis(u: &ControlInput) -> Result<EigenBasis, PhysicsError> {
    if u.bx == 0.0 && u.bz == 0.0 {
        return Err(PhysicsError::DegenerateHamiltonian);
    }
    // atan2 keeps the quadrant when Bz < 0 and handles Bz = 0.
    let eta = u.bx.atan2(u.bz);
    let (s, c) = (0.5 * eta).sin_cos();
    Ok(EigenBasis {
        delta_e: u.bx.hypot(u.bz),
        eta,
        plus: [c, s],
        minus: [-s, c],
    })
}

/// Reservoir temperature in kelvin for mean occupation `n_mean`, inverting
/// the Bose-Einstein law `N = 1/(exp(ħω0/k_B T) - 1)`. `N = 0` maps to 0 K.
pub fn mean_occupation_to_temperature(n_mean: f64, omega0: f64) -> Result<f64, PhysicsError> {
    if n_mean < 0.0 || n_mean.is_nan() {
        return Err(PhysicsError::NegativeOccupation(n_mean));
    }
    if n_mean == 0.0 {
        return Ok(0.0);
    }
    Ok(REDUCED_PLANCK * omega0 / (BOLTZMANN * (1.0 / n_mean).ln_1p()))
}
