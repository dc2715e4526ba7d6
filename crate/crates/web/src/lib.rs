//! Browser bindings for the interactive demo in `www/`.
//!
//! Every exported function returns a flat `Float64Array` of fixed-width
//! rows so the page can plot without parsing. The `*_rows` functions are
//! the plain-Rust versions the bindings wrap.

use bloch_transfer::{
    decoherence_factor, free_evolution, mean_occupation_to_temperature, populations,
    solve_tracking, BlochState, CostWeights, SweepSettings, SystemParams, TargetSpec, TimeGrid,
};
use wasm_bindgen::prelude::*;

/// Columns of [`free_curves`]: t, p_g, p_e, Lambda.
pub const FREE_WIDTH: usize = 4;
/// Columns of [`OptimizeResult::series`]: t, p_e, pe_free, pe_target,
/// Lambda, Lambda_free, Bx, Bz.
pub const OPTIMIZE_WIDTH: usize = 8;

/// Demo initial state, equal weights on the coherences with the atom in
/// its ground state.
pub fn initial_state() -> BlochState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    BlochState::new(h, h, 1.0)
}

fn setup(
    n_mean: f64,
    gamma0: f64,
    tf: f64,
    steps: usize,
) -> Result<(SystemParams, TimeGrid), String> {
    let p = SystemParams::new(gamma0, n_mean, 1.0).map_err(|e| e.to_string())?;
    let grid = TimeGrid::new(0.0, tf, steps).map_err(|e| e.to_string())?;
    Ok((p, grid))
}

pub fn free_rows(n_mean: f64, gamma0: f64, tf: f64, steps: usize) -> Result<Vec<f64>, String> {
    let (p, grid) = setup(n_mean, gamma0, tf, steps)?;
    let x0 = initial_state();
    let mut out = Vec::with_capacity(grid.len() * FREE_WIDTH);
    for t in grid.times() {
        let x = free_evolution(&x0, t, &p);
        let (pg, pe) = populations(&x);
        out.extend([t, pg, pe, decoherence_factor(&x)]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub struct OptimizeResult {
    converged: bool,
    iterations: usize,
    final_cost: f64,
    residual: f64,
    series: Vec<f64>,
}

#[wasm_bindgen]
impl OptimizeResult {
    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.converged
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(getter, js_name = finalCost)]
    pub fn final_cost(&self) -> f64 {
        self.final_cost
    }

    #[wasm_bindgen(getter)]
    pub fn residual(&self) -> f64 {
        self.residual
    }

    #[wasm_bindgen(getter)]
    pub fn series(&self) -> Vec<f64> {
        self.series.clone()
    }
}

pub fn optimize_rows(
    n_mean: f64,
    theta: f64,
    gamma0: f64,
    tf: f64,
    steps: usize,
) -> Result<OptimizeResult, String> {
    let (p, grid) = setup(n_mean, gamma0, tf, steps)?;
    let w = CostWeights::new(theta).map_err(|e| e.to_string())?;
    let x0 = initial_state();
    let sol = solve_tracking(
        &x0,
        &p,
        &w,
        &grid,
        &SweepSettings::default(),
        &TargetSpec::for_system(&p),
    )
    .map_err(|e| e.to_string())?;

    let mut series = Vec::with_capacity(grid.len() * OPTIMIZE_WIDTH);
    let rows = sol
        .states
        .iter()
        .zip(sol.targets.samples())
        .zip(sol.controls.samples());
    for (((t, x), xt), u) in rows {
        let free = free_evolution(&x0, t, &p);
        series.extend([
            t,
            populations(x).1,
            populations(&free).1,
            populations(xt).1,
            decoherence_factor(x),
            decoherence_factor(&free),
            u.bx,
            u.bz,
        ]);
    }
    Ok(OptimizeResult {
        converged: sol.converged,
        iterations: sol.iterations,
        final_cost: sol.final_cost(),
        residual: sol.stationarity_residual,
        series,
    })
}

/// Uncontrolled evolution: rows of t, p_g, p_e, Lambda.
#[wasm_bindgen(js_name = freeCurves)]
pub fn free_curves(n_mean: f64, gamma0: f64, tf: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    free_rows(n_mean, gamma0, tf, steps).map_err(|e| JsError::new(&e))
}

/// Optimal tracking solve; see [`OPTIMIZE_WIDTH`] for the row layout.
#[wasm_bindgen]
pub fn optimize(
    n_mean: f64,
    theta: f64,
    gamma0: f64,
    tf: f64,
    steps: usize,
) -> Result<OptimizeResult, JsError> {
    optimize_rows(n_mean, theta, gamma0, tf, steps).map_err(|e| JsError::new(&e))
}

/// Reservoir temperature in kelvin per unit ω0 (rad/s) for occupation N.
#[wasm_bindgen]
pub fn temperature(n_mean: f64) -> f64 {
    mean_occupation_to_temperature(n_mean, 1.0).unwrap_or(f64::NAN)
}
