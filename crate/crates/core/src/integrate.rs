//! Fixed-step classical RK4 on a [`TimeGrid`], forward for the state and
//! backward for the costate.

use thiserror::Error;

use crate::types::{TimeGrid, Trajectory, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("integration diverged at step {step} (t = {time})")]
    Diverged { step: usize, time: f64 },
}

/// A time-dependent rate `dy/dt = f(t, y)` on 3-vectors.
///
/// Controls enter through whatever the implementor closes over; the solver
/// samples them at nodes and midpoints, so piecewise-linear control
/// interpolation is the expected convention.
pub trait VectorField {
    fn eval(&self, t: f64, y: &Vec3) -> Vec3;
}

impl<F> VectorField for F
where
    F: Fn(f64, &Vec3) -> Vec3,
{
    fn eval(&self, t: f64, y: &Vec3) -> Vec3 {
        self(t, y)
    }
}

#[inline]
fn axpy(a: f64, x: &Vec3, y: &Vec3) -> Vec3 {
    [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2]]
}

fn rk4_step<F: VectorField + ?Sized>(field: &F, t: f64, y: &Vec3, h: f64) -> Vec3 {
    let half = 0.5 * h;
    let k1 = field.eval(t, y);
    let k2 = field.eval(t + half, &axpy(half, &k1, y));
    let k3 = field.eval(t + half, &axpy(half, &k2, y));
    let k4 = field.eval(t + h, &axpy(h, &k3, y));
    let sixth = h / 6.0;
    std::array::from_fn(|i| y[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]))
}

fn finite(y: &Vec3) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Integrates from node 0 to the last node; sample 0 is `y0` untouched.
pub fn integrate_forward<F: VectorField + ?Sized>(
    field: &F,
    y0: Vec3,
    grid: &TimeGrid,
) -> Result<Trajectory<Vec3>, IntegrationError> {
    if !finite(&y0) {
        return Err(IntegrationError::Diverged {
            step: 0,
            time: grid.t0(),
        });
    }
    let h = grid.step_size();
    let mut samples = Vec::with_capacity(grid.len());
    samples.push(y0);
    let mut y = y0;
    for k in 0..grid.steps() {
        y = rk4_step(field, grid.time(k), &y, h);
        if !finite(&y) {
            return Err(IntegrationError::Diverged {
                step: k + 1,
                time: grid.time(k + 1),
            });
        }
        samples.push(y);
    }
    Ok(Trajectory::new(*grid, samples).expect("one sample per node"))
}

/// Integrates from the last node down to node 0 with a negated step; the
/// final sample is `y_final` untouched.
pub fn integrate_backward<F: VectorField + ?Sized>(
    field: &F,
    y_final: Vec3,
    grid: &TimeGrid,
) -> Result<Trajectory<Vec3>, IntegrationError> {
    let n = grid.steps();
    if !finite(&y_final) {
        return Err(IntegrationError::Diverged {
            step: n,
            time: grid.tf(),
        });
    }
    let h = grid.step_size();
    let mut samples = vec![[0.0; 3]; grid.len()];
    samples[n] = y_final;
    let mut y = y_final;
    for k in (0..n).rev() {
        y = rk4_step(field, grid.time(k + 1), &y, -h);
        if !finite(&y) {
            return Err(IntegrationError::Diverged {
                step: k,
                time: grid.time(k),
            });
        }
        samples[k] = y;
    }
    Ok(Trajectory::new(*grid, samples).expect("one sample per node"))
}
