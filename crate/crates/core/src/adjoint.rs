//! Discrete adjoint of the RK4-discretized tracking cost.
//!
//! Differentiates exactly what [`crate::integrate::integrate_forward`] and
//! the trapezoidal cost compute, so the result agrees with finite differences
//! of the discrete cost to rounding. The continuous costate used by the sweep
//! approximates the same gradient to `O(h²)`.

use crate::optimizer::{CostWeights, TargetSpec};
use crate::physics::drift_matrix;
use crate::types::{BlochState, ControlInput, ControlTrajectory, SystemParams, Vec3};

fn rate(a: &[Vec3; 3], b: f64, y: &Vec3) -> Vec3 {
    std::array::from_fn(|i| {
        a[i][0] * y[0] + a[i][1] * y[1] + a[i][2] * y[2] + if i == 2 { b } else { 0.0 }
    })
}

fn transpose_apply(a: &[Vec3; 3], v: &Vec3) -> Vec3 {
    std::array::from_fn(|j| a[0][j] * v[0] + a[1][j] * v[1] + a[2][j] * v[2])
}

/// `(∂f/∂Bx, ∂f/∂Bz)ᵀ v` at state `y`.
fn control_sensitivity(y: &Vec3, v: &Vec3) -> [f64; 2] {
    [y[2] * v[1] - y[1] * v[2], y[1] * v[0] - y[0] * v[1]]
}

fn axpy(a: f64, x: &Vec3, y: &Vec3) -> Vec3 {
    [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2]]
}

fn add_into(acc: &mut Vec3, v: &Vec3) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

/// Gradient of the discrete cost with respect to every control sample.
///
/// Returns `None` if the forward pass produces non-finite values.
pub fn discrete_cost_gradient(
    x0: &BlochState,
    p: &SystemParams,
    w: &CostWeights,
    target: &TargetSpec,
    controls: &ControlTrajectory,
) -> Option<Vec<ControlInput>> {
    let grid = *controls.grid();
    let n = grid.steps();
    let h = grid.step_size();
    let u = controls.samples();
    let drift = |c: ControlInput| drift_matrix(&c, p);
    let b = -p.gamma0;

    // forward pass, same arithmetic as the integrator
    let mut xs = Vec::with_capacity(n + 1);
    xs.push(x0.to_array());
    for k in 0..n {
        let (a0, am, a1) = (
            drift(u[k]),
            drift(u[k].lerp(u[k + 1], 0.5)),
            drift(u[k + 1]),
        );
        let y = xs[k];
        let k1 = rate(&a0, b, &y);
        let k2 = rate(&am, b, &axpy(0.5 * h, &k1, &y));
        let k3 = rate(&am, b, &axpy(0.5 * h, &k2, &y));
        let k4 = rate(&a1, b, &axpy(h, &k3, &y));
        let next: Vec3 =
            std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]));
        if !next.iter().all(|v| v.is_finite()) {
            return None;
        }
        xs.push(next);
    }

    let targets = target.sample(x0, &grid);
    let two_theta = 2.0 * w.theta();
    let mut grad: Vec<[f64; 2]> = (0..=n)
        .map(|k| {
            let wk = grid.trapezoid_weight(k);
            [two_theta * wk * u[k].bx, two_theta * wk * u[k].bz]
        })
        .collect();
    let tracking = |k: usize| -> Vec3 {
        let e = (BlochState::from(xs[k]) - targets.samples()[k]).to_array();
        let wk = 2.0 * grid.trapezoid_weight(k);
        [wk * e[0], wk * e[1], wk * e[2]]
    };

    // reverse sweep; mu is dJ/dx_k
    let mut mu = tracking(n);
    for k in (0..n).rev() {
        let (a0, am, a1) = (
            drift(u[k]),
            drift(u[k].lerp(u[k + 1], 0.5)),
            drift(u[k + 1]),
        );
        let y1 = xs[k];
        let k1 = rate(&a0, b, &y1);
        let y2 = axpy(0.5 * h, &k1, &y1);
        let k2 = rate(&am, b, &y2);
        let y3 = axpy(0.5 * h, &k2, &y1);
        let k3 = rate(&am, b, &y3);
        let y4 = axpy(h, &k3, &y1);

        let scale = |s: f64| -> Vec3 { [s * mu[0], s * mu[1], s * mu[2]] };
        let mut bar_x = mu;
        let bar_k4 = scale(h / 6.0);
        let mut bar_k3 = scale(h / 3.0);
        let mut bar_k2 = scale(h / 3.0);
        let mut bar_k1 = scale(h / 6.0);
        let mut bar_mid = [0.0; 2];

        let bar_y4 = transpose_apply(&a1, &bar_k4);
        let s4 = control_sensitivity(&y4, &bar_k4);
        add_into(&mut bar_x, &bar_y4);
        add_into(&mut bar_k3, &bar_y4.map(|v| h * v));

        let bar_y3 = transpose_apply(&am, &bar_k3);
        let s3 = control_sensitivity(&y3, &bar_k3);
        add_into(&mut bar_x, &bar_y3);
        add_into(&mut bar_k2, &bar_y3.map(|v| 0.5 * h * v));

        let bar_y2 = transpose_apply(&am, &bar_k2);
        let s2 = control_sensitivity(&y2, &bar_k2);
        add_into(&mut bar_x, &bar_y2);
        add_into(&mut bar_k1, &bar_y2.map(|v| 0.5 * h * v));

        let bar_y1 = transpose_apply(&a0, &bar_k1);
        let s1 = control_sensitivity(&y1, &bar_k1);
        add_into(&mut bar_x, &bar_y1);

        for i in 0..2 {
            bar_mid[i] = s2[i] + s3[i];
            grad[k][i] += s1[i] + 0.5 * bar_mid[i];
            grad[k + 1][i] += s4[i] + 0.5 * bar_mid[i];
        }

        mu = bar_x;
        add_into(&mut mu, &tracking(k));
    }

    Some(
        grad.into_iter()
            .map(|[bx, bz]| ControlInput::new(bx, bz))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{evaluate_cost, simulate};
    use crate::types::{TimeGrid, Trajectory};

    #[test]
    fn matches_central_differences_on_small_grid() {
        let grid = TimeGrid::new(0.0, 2.0, 20).unwrap();
        let p = SystemParams::new(0.1, 0.7, 1.0).unwrap();
        let w = CostWeights::new(0.3).unwrap();
        let x0 = BlochState::new(0.4, -0.3, 0.8);
        let target = TargetSpec::for_system(&p);
        let u = Trajectory::from_fn(grid, |t| {
            ControlInput::new((3.0 * t).sin(), 1.0 + (7.0 * t).cos())
        });
        let grad = discrete_cost_gradient(&x0, &p, &w, &target, &u).unwrap();
        let targets = target.sample(&x0, &grid);
        let cost = |u: &ControlTrajectory| {
            evaluate_cost(&simulate(&x0, &p, u).unwrap(), &targets, u, &w).unwrap()
        };
        let eps = 1e-6;
        for (k, gk) in grad.iter().enumerate() {
            for comp in 0..2 {
                let bump = |d: f64| {
                    let mut v = u.clone();
                    let c = &mut v.samples_mut()[k];
                    if comp == 0 {
                        c.bx += d
                    } else {
                        c.bz += d
                    }
                    cost(&v)
                };
                let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
                let g = if comp == 0 { gk.bx } else { gk.bz };
                assert!((g - fd).abs() < 1e-8, "node {k} comp {comp}: {g} vs {fd}");
            }
        }
    }
}
