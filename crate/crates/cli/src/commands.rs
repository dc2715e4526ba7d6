//! The four subcommands. Each returns its tables or report so tests can
//! inspect them without touching the filesystem.

use std::path::{Path, PathBuf};

use bloch_transfer::{
    adjoint_gradient_check, bloch_rhs, decoherence_factor, free_evolution, integrate_forward,
    mean_occupation_to_temperature, populations, solve_tracking, stationarity_residual, BlochState,
    ControlComponent, ControlInput, ControlTrajectory, OptimalSolution, SolveError, Trajectory,
    Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::Problem;
use crate::csv::{Cell, Table};
use crate::error::CliError;

pub const FREE_HEADER: [&str; 7] = ["t", "x1", "x2", "x3", "p_g", "p_e", "Lambda"];
pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t",
    "x1",
    "x2",
    "x3",
    "p_g",
    "p_e",
    "Lambda",
    "pg_free",
    "pe_free",
    "pg_target",
    "pe_target",
];
pub const CONTROLS_HEADER: [&str; 3] = ["t", "Bx", "Bz"];
pub const SWEEP_HEADER: [&str; 11] = [
    "n_mean",
    "temperature_kelvin_per_omega0",
    "converged",
    "iterations",
    "final_cost",
    "tracking_error_integral",
    "control_energy_integral",
    "terminal_pg",
    "terminal_pe",
    "mean_decoherence_controlled",
    "mean_decoherence_free",
];

/// Tolerances of the `verify` oracle suite.
pub const INTEGRATOR_TOL: f64 = 1e-8;
pub const GRADIENT_REL_TOL: f64 = 1e-4;
pub const GRADIENT_STEP: f64 = 1e-6;
pub const GRADIENT_NODES: usize = 10;
pub const STATIONARITY_TOL: f64 = 1e-3;
pub const MONOTONE_TOL: f64 = 1e-12;

/// Message for `stderr` when the configured initial state lies outside
/// the Bloch ball.
pub fn physicality_warning(x0: &BlochState) -> Option<String> {
    let norm = x0.norm();
    (norm > 1.0 + 1e-12).then(|| {
        format!(
            "warning: initial state ({}, {}, {}) has |x| = {norm:.6} > 1 and is not a physical density matrix; integrating anyway",
            x0.x1, x0.x2, x0.x3
        )
    })
}

fn default_output(problem: &Problem, name: &str) -> PathBuf {
    problem
        .output_path
        .clone()
        .unwrap_or_else(|| PathBuf::from(name))
}

/// `runs/opt.csv` -> `runs/opt_controls.csv`.
pub fn controls_path(trajectory: &Path) -> PathBuf {
    let stem = trajectory
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match trajectory.extension() {
        Some(ext) => format!("{stem}_controls.{}", ext.to_string_lossy()),
        None => format!("{stem}_controls"),
    };
    trajectory.with_file_name(name)
}

fn free_at(problem: &Problem, n_mean: f64) -> Trajectory<BlochState> {
    let p = problem.params.with_n_mean(n_mean);
    let t0 = problem.grid.t0();
    Trajectory::from_fn(problem.grid, |t| free_evolution(&problem.x0, t - t0, &p))
}

fn mean_decoherence(states: &Trajectory<BlochState>) -> f64 {
    states.integrate(|_, x| decoherence_factor(x)) / states.grid().duration()
}

pub fn free_table(problem: &Problem) -> Table {
    let mut table = Table::new(&FREE_HEADER);
    for (t, x) in free_at(problem, problem.params.n_mean).iter() {
        let (pg, pe) = populations(x);
        table.push(&[
            t.into(),
            x.x1.into(),
            x.x2.into(),
            x.x3.into(),
            pg.into(),
            pe.into(),
            decoherence_factor(x).into(),
        ]);
    }
    table
}

pub fn run_free(problem: &Problem) -> Result<PathBuf, CliError> {
    let out = default_output(problem, "free.csv");
    free_table(problem).write(&out)?;
    Ok(out)
}

pub fn solve(problem: &Problem, n_mean: f64) -> Result<OptimalSolution, SolveError> {
    solve_tracking(
        &problem.x0,
        &problem.params.with_n_mean(n_mean),
        &problem.weights,
        &problem.grid,
        &problem.settings,
        &problem.target,
    )
}

pub struct OptimizeOutput {
    pub solution: OptimalSolution,
    pub trajectory: Table,
    pub controls: Table,
}

impl OptimizeOutput {
    /// Machine-parseable `key=value` summary.
    pub fn summary(&self) -> String {
        let s = &self.solution;
        let (pg, pe) = populations(s.states.last());
        format!(
            "converged={} iterations={} final_cost={} stationarity_residual={} stalled={} terminal_pg={} terminal_pe={}",
            s.converged,
            s.iterations,
            crate::csv::format_float(s.final_cost()),
            crate::csv::format_float(s.stationarity_residual),
            s.stalled,
            crate::csv::format_float(pg),
            crate::csv::format_float(pe),
        )
    }
}

pub fn optimize(problem: &Problem) -> Result<OptimizeOutput, CliError> {
    let solution = solve(problem, problem.params.n_mean)?;
    let free = free_at(problem, problem.params.n_mean);

    let mut trajectory = Table::new(&TRAJECTORY_HEADER);
    let rows = solution
        .states
        .iter()
        .zip(free.samples())
        .zip(solution.targets.samples());
    for (((t, x), xf), xt) in rows {
        let (pg, pe) = populations(x);
        let (pgf, pef) = populations(xf);
        let (pgt, pet) = populations(xt);
        trajectory.push(&[
            t.into(),
            x.x1.into(),
            x.x2.into(),
            x.x3.into(),
            pg.into(),
            pe.into(),
            decoherence_factor(x).into(),
            pgf.into(),
            pef.into(),
            pgt.into(),
            pet.into(),
        ]);
    }

    let mut controls = Table::new(&CONTROLS_HEADER);
    for (t, u) in solution.controls.iter() {
        controls.push(&[t.into(), u.bx.into(), u.bz.into()]);
    }
    Ok(OptimizeOutput {
        solution,
        trajectory,
        controls,
    })
}

pub fn run_optimize(problem: &Problem) -> Result<OptimizeOutput, CliError> {
    let output = optimize(problem)?;
    let out = default_output(problem, "optimize.csv");
    output.trajectory.write(&out)?;
    output.controls.write(&controls_path(&out))?;
    Ok(output)
}

/// One line of the temperature sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummaryRow {
    pub n_mean: f64,
    pub temperature_kelvin_per_omega0: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    pub tracking_error_integral: f64,
    pub control_energy_integral: f64,
    pub terminal_pg: f64,
    pub terminal_pe: f64,
    pub mean_decoherence_controlled: f64,
    pub mean_decoherence_free: f64,
    /// Accepted-iteration costs; not written to the CSV.
    pub cost_history: Vec<f64>,
}

impl SweepSummaryRow {
    fn cells(&self) -> [Cell; 11] {
        [
            self.n_mean.into(),
            self.temperature_kelvin_per_omega0.into(),
            self.converged.into(),
            self.iterations.into(),
            self.final_cost.into(),
            self.tracking_error_integral.into(),
            self.control_energy_integral.into(),
            self.terminal_pg.into(),
            self.terminal_pe.into(),
            self.mean_decoherence_controlled.into(),
            self.mean_decoherence_free.into(),
        ]
    }
}

fn sweep_row(problem: &Problem, n_mean: f64) -> SweepSummaryRow {
    let temperature = mean_occupation_to_temperature(n_mean, 1.0).unwrap_or(f64::NAN);
    let free = mean_decoherence(&free_at(problem, n_mean));
    match solve(problem, n_mean) {
        Ok(sol) => {
            let (pg, pe) = populations(sol.states.last());
            SweepSummaryRow {
                n_mean,
                temperature_kelvin_per_omega0: temperature,
                converged: sol.converged,
                iterations: sol.iterations,
                final_cost: sol.final_cost(),
                tracking_error_integral: sol.tracking_error(),
                control_energy_integral: sol.control_energy(),
                terminal_pg: pg,
                terminal_pe: pe,
                mean_decoherence_controlled: mean_decoherence(&sol.states),
                mean_decoherence_free: free,
                cost_history: sol.cost_history,
            }
        }
        Err(_) => SweepSummaryRow {
            n_mean,
            temperature_kelvin_per_omega0: temperature,
            converged: false,
            iterations: 0,
            final_cost: f64::NAN,
            tracking_error_integral: f64::NAN,
            control_energy_integral: f64::NAN,
            terminal_pg: f64::NAN,
            terminal_pe: f64::NAN,
            mean_decoherence_controlled: f64::NAN,
            mean_decoherence_free: free,
            cost_history: Vec::new(),
        },
    }
}

/// Solves every configured N concurrently; rows come back sorted by N.
pub fn sweep(problem: &Problem) -> Vec<SweepSummaryRow> {
    let mut rows: Vec<SweepSummaryRow> = problem
        .n_sweep_values
        .par_iter()
        .map(|&n| sweep_row(problem, n))
        .collect();
    rows.sort_by(|a, b| a.n_mean.total_cmp(&b.n_mean));
    rows
}

pub fn sweep_table(rows: &[SweepSummaryRow]) -> Table {
    let mut table = Table::new(&SWEEP_HEADER);
    for row in rows {
        table.push(&row.cells());
    }
    table
}

pub fn run_sweep(problem: &Problem) -> Result<(PathBuf, Vec<SweepSummaryRow>), CliError> {
    if problem.n_sweep_values.is_empty() {
        return Err(CliError::Config("n_sweep_values is empty".into()));
    }
    let rows = sweep(problem);
    let out = default_output(problem, "sweep.csv");
    sweep_table(&rows).write(&out)?;
    Ok((out, rows))
}

/// Smooth pseudo-random controls around the free field `(0, ω0)`: six
/// sinusoids per component with amplitudes up to 0.5. Deterministic in
/// `seed`.
pub fn random_controls(problem: &Problem, seed: u64) -> ControlTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<[f64; 5]> = (0..6)
        .map(|_| {
            [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.05..2.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
            ]
        })
        .collect();
    let omega0 = problem.params.omega0;
    Trajectory::from_fn(problem.grid, |t| {
        modes
            .iter()
            .fold(ControlInput::new(0.0, omega0), |u, [ax, az, f, px, pz]| {
                ControlInput::new(
                    u.bx + ax * (f * t + px).sin(),
                    u.bz + az * (f * t + pz).sin(),
                )
            })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn render(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                )
            })
            .collect()
    }
}

/// Largest node error of RK4 under the free field against the closed form.
pub fn integrator_error(problem: &Problem) -> f64 {
    let p = problem.params;
    let u = ControlInput::new(0.0, p.omega0);
    let field = |_t: f64, y: &Vec3| bloch_rhs(&BlochState::from(*y), &u, &p).to_array();
    let t0 = problem.grid.t0();
    match integrate_forward(&field, problem.x0.to_array(), &problem.grid) {
        Ok(traj) => traj
            .iter()
            .map(|(t, y)| {
                let exact = free_evolution(&problem.x0, t - t0, &p).to_array();
                (0..3).map(|i| (y[i] - exact[i]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Worst relative adjoint/finite-difference mismatch over `nodes` random
/// interior nodes and both control components.
pub fn gradient_mismatch(problem: &Problem, seed: u64, nodes: usize) -> Result<f64, SolveError> {
    let controls = random_controls(problem, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let steps = problem.grid.steps();
    if steps < 2 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for _ in 0..nodes {
        let node = rng.gen_range(1..steps);
        for component in [ControlComponent::Bx, ControlComponent::Bz] {
            let check = adjoint_gradient_check(
                &problem.x0,
                &problem.params,
                &problem.weights,
                &problem.target,
                &controls,
                node,
                component,
                GRADIENT_STEP,
            )?;
            let err = check.relative_error();
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
    }
    Ok(worst)
}

/// Largest increase between consecutive accepted costs (≤ 0 when monotone).
pub fn max_cost_increase(history: &[f64]) -> f64 {
    history
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn verify(problem: &Problem) -> VerifyReport {
    let mut checks = Vec::new();

    let err = integrator_error(problem);
    checks.push(Check {
        name: "integrator_closed_form",
        passed: err < INTEGRATOR_TOL,
        detail: format!("max node error {err:.3e} (tolerance {INTEGRATOR_TOL:e})"),
    });

    checks.push(match gradient_mismatch(problem, 2024, GRADIENT_NODES) {
        Ok(worst) => Check {
            name: "adjoint_finite_difference",
            passed: worst < GRADIENT_REL_TOL,
            detail: format!(
                "worst relative error {worst:.3e} over {GRADIENT_NODES} nodes x 2 components (tolerance {GRADIENT_REL_TOL:e})"
            ),
        },
        Err(e) => Check {
            name: "adjoint_finite_difference",
            passed: false,
            detail: e.to_string(),
        },
    });

    match solve(problem, problem.params.n_mean) {
        Ok(sol) => {
            let residual = stationarity_residual(&sol, &problem.weights);
            checks.push(Check {
                name: "stationarity",
                passed: sol.converged && residual < STATIONARITY_TOL,
                detail: format!(
                    "converged={} after {} iterations, residual {residual:.3e} (tolerance {STATIONARITY_TOL:e})",
                    sol.converged, sol.iterations
                ),
            });
            let rise = max_cost_increase(&sol.cost_history);
            checks.push(Check {
                name: "monotone_cost",
                passed: rise <= MONOTONE_TOL,
                detail: format!(
                    "largest cost increase {rise:.3e} over {} accepted iterations",
                    sol.cost_history.len() - 1
                ),
            });
        }
        Err(e) => {
            for name in ["stationarity", "monotone_cost"] {
                checks.push(Check {
                    name,
                    passed: false,
                    detail: e.to_string(),
                });
            }
        }
    }
    VerifyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn problem() -> Problem {
        RunConfig::default().validate().unwrap()
    }

    #[test]
    fn controls_path_inserts_suffix() {
        assert_eq!(
            controls_path(Path::new("runs/opt.csv")),
            PathBuf::from("runs/opt_controls.csv")
        );
        assert_eq!(
            controls_path(Path::new("out")),
            PathBuf::from("out_controls")
        );
    }

    #[test]
    fn warning_only_outside_bloch_ball() {
        assert!(physicality_warning(&BlochState::new(0.0, 0.0, 1.0)).is_none());
        assert!(physicality_warning(&BlochState::new(0.6, 0.8, 0.0)).is_none());
        assert!(physicality_warning(&BlochState::new(0.6, 0.8, 1e-5)).is_some());
        let w = physicality_warning(&BlochState::from_array(
            crate::config::DEFAULT_INITIAL_STATE,
        ));
        assert!(w.unwrap().contains("1.414214"));
    }

    #[test]
    fn free_table_endpoints() {
        let mut cfg = RunConfig::default();
        cfg.system.n_mean = 0.0;
        cfg.grid.tf = 20.0;
        cfg.grid.steps = 4000;
        let text = free_table(&cfg.validate().unwrap()).render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], FREE_HEADER.join(","));
        assert_eq!(lines.len(), 4002);
        let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first[4], 1.0);
        assert_eq!(first[5], 0.0);
        let last: Vec<f64> = lines[4001].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last[0], 20.0);
        assert!((last[5] - (1.0 - (-2.0f64).exp())).abs() < 1e-12);
        assert!((last[5] - 0.8647).abs() < 1e-4);
    }

    #[test]
    fn free_table_hot_reservoir_approaches_stationary_populations() {
        let mut cfg = RunConfig::default();
        cfg.system.n_mean = 10.0;
        cfg.grid.tf = 100.0;
        cfg.grid.steps = 100;
        let text = free_table(&cfg.validate().unwrap()).render();
        let last: Vec<f64> = text
            .lines()
            .last()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert!((last[4] - 0.5 * (1.0 - 1.0 / 21.0)).abs() < 1e-12);
        assert!((last[5] - 0.5 * (1.0 + 1.0 / 21.0)).abs() < 1e-12);
    }

    #[test]
    fn max_cost_increase_detects_rise() {
        assert!(max_cost_increase(&[3.0, 2.0, 2.0, 1.0]) <= 0.0);
        assert_eq!(max_cost_increase(&[3.0, 2.0, 2.5]), 0.5);
    }

    #[test]
    fn random_controls_are_deterministic() {
        let p = problem();
        assert_eq!(random_controls(&p, 5), random_controls(&p, 5));
        assert_ne!(random_controls(&p, 5), random_controls(&p, 6));
    }
}
