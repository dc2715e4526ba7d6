//! Domain types shared by the physics, integrator and optimizer.

use std::ops::{Add, Mul, Sub};

use thiserror::Error;

/// Plain 3-vector used for rates and costates.
pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be {requirement}, got {value}")]
    OutOfRange {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("grid needs at least one step")]
    EmptyGrid,
    #[error("{0} must be finite")]
    NotFinite(&'static str),
}

/// Bloch vector `(x1, x2, x3)`.
///
/// `x1`, `x2` carry the coherences and `x3 = ρ00 - ρ11` the population
/// difference. Vectors longer than one are representable (the linear
/// equations of motion do not care) and reported by [`BlochState::is_physical`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlochState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl BlochState {
    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3 }
    }

    pub const fn from_array(v: Vec3) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub const fn to_array(self) -> Vec3 {
        [self.x1, self.x2, self.x3]
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    /// `|x| <= 1`, the condition for a valid density matrix.
    pub fn is_physical(&self) -> bool {
        self.norm_squared() <= 1.0
    }

    /// Ground-state population `ρ00 = (1 + x3)/2`.
    pub fn rho00(&self) -> f64 {
        0.5 * (1.0 + self.x3)
    }

    /// Excited-state population `ρ11 = (1 - x3)/2`.
    pub fn rho11(&self) -> f64 {
        0.5 * (1.0 - self.x3)
    }

    /// Off-diagonal element `ρ01 = (x1 - i x2)/2` as `(re, im)`.
    pub fn rho01(&self) -> (f64, f64) {
        (0.5 * self.x1, -0.5 * self.x2)
    }
}

impl From<Vec3> for BlochState {
    fn from(v: Vec3) -> Self {
        Self::from_array(v)
    }
}

impl From<BlochState> for Vec3 {
    fn from(x: BlochState) -> Self {
        x.to_array()
    }
}

impl Add for BlochState {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x1 + rhs.x1, self.x2 + rhs.x2, self.x3 + rhs.x3)
    }
}

impl Sub for BlochState {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x1 - rhs.x1, self.x2 - rhs.x2, self.x3 - rhs.x3)
    }
}

impl Mul<BlochState> for f64 {
    type Output = BlochState;
    fn mul(self, rhs: BlochState) -> BlochState {
        BlochState::new(self * rhs.x1, self * rhs.x2, self * rhs.x3)
    }
}

/// Control fields `u = (Bx, Bz)` in units of ω0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub bx: f64,
    pub bz: f64,
}

impl ControlInput {
    pub const fn new(bx: f64, bz: f64) -> Self {
        Self { bx, bz }
    }

    pub fn norm_squared(&self) -> f64 {
        self.bx * self.bx + self.bz * self.bz
    }

    pub fn is_finite(&self) -> bool {
        self.bx.is_finite() && self.bz.is_finite()
    }

    /// `self + weight * (other - self)`.
    pub fn lerp(self, other: Self, weight: f64) -> Self {
        Self::new(
            self.bx + weight * (other.bx - self.bx),
            self.bz + weight * (other.bz - self.bz),
        )
    }

    /// Max-norm distance.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.bx - other.bx).abs().max((self.bz - other.bz).abs())
    }
}

/// Physical constants of the dissipative qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Spontaneous emission rate γ0.
    pub gamma0: f64,
    /// Mean thermal occupation N of the reservoir.
    pub n_mean: f64,
    /// Transition frequency ω0, the unit of frequency.
    pub omega0: f64,
}

impl SystemParams {
    pub fn new(gamma0: f64, n_mean: f64, omega0: f64) -> Result<Self, ParamError> {
        let p = Self {
            gamma0,
            n_mean,
            omega0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        positive("gamma0", self.gamma0)?;
        if !(self.n_mean.is_finite() && self.n_mean >= 0.0) {
            return Err(ParamError::OutOfRange {
                name: "n_mean",
                requirement: "finite and >= 0",
                value: self.n_mean,
            });
        }
        positive("omega0", self.omega0)
    }

    /// Same parameters at a different temperature.
    pub fn with_n_mean(self, n_mean: f64) -> Self {
        Self { n_mean, ..self }
    }

    /// Coherence decay rate `(2N+1) γ0 / 2`.
    pub fn transverse_rate(&self) -> f64 {
        0.5 * self.longitudinal_rate()
    }

    /// Population decay rate `(2N+1) γ0`.
    pub fn longitudinal_rate(&self) -> f64 {
        (2.0 * self.n_mean + 1.0) * self.gamma0
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            gamma0: 0.1,
            n_mean: 0.0,
            omega0: 1.0,
        }
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ParamError::OutOfRange {
            name,
            requirement: "finite and > 0",
            value,
        })
    }
}

/// Uniform grid on `[t0, tf]` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    tf: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, tf: f64, steps: usize) -> Result<Self, ParamError> {
        if !t0.is_finite() {
            return Err(ParamError::NotFinite("t0"));
        }
        if !tf.is_finite() {
            return Err(ParamError::NotFinite("tf"));
        }
        if tf <= t0 {
            return Err(ParamError::OutOfRange {
                name: "tf",
                requirement: "greater than t0",
                value: tf,
            });
        }
        if steps == 0 {
            return Err(ParamError::EmptyGrid);
        }
        Ok(Self { t0, tf, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step_size(&self) -> f64 {
        (self.tf - self.t0) / self.steps as f64
    }

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    /// Time of node `k`; the last node is `tf` exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.tf
        } else {
            self.t0 + k as f64 * self.step_size()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    /// Composite trapezoidal weight of node `k`.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        let h = self.step_size();
        if k == 0 || k == self.steps {
            0.5 * h
        } else {
            h
        }
    }

    /// Interval index and fractional position of `t`, clamped to the grid.
    pub(crate) fn locate(&self, t: f64) -> (usize, f64) {
        let s = ((t - self.t0) / self.step_size()).clamp(0.0, self.steps as f64);
        let k = (s.floor() as usize).min(self.steps - 1);
        (k, s - k as f64)
    }
}

/// Neumaier summation. Keeps quadrature noise near one ulp of the total,
/// which finite-difference checks of the cost rely on.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Samples on every node of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    grid: TimeGrid,
    samples: Vec<T>,
}

pub type ControlTrajectory = Trajectory<ControlInput>;

impl<T> Trajectory<T> {
    /// Fails unless there is exactly one sample per node.
    pub fn new(grid: TimeGrid, samples: Vec<T>) -> Result<Self, ParamError> {
        if samples.len() != grid.len() {
            return Err(ParamError::OutOfRange {
                name: "sample count",
                requirement: "equal to the grid node count",
                value: samples.len() as f64,
            });
        }
        Ok(Self { grid, samples })
    }

    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64) -> T) -> Self {
        let samples = grid.times().map(&mut f).collect();
        Self { grid, samples }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [T] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &T {
        &self.samples[0]
    }

    pub fn last(&self) -> &T {
        &self.samples[self.samples.len() - 1]
    }

    /// `(t_k, sample_k)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, &T)> + '_ {
        self.grid.times().zip(self.samples.iter())
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Trajectory<U> {
        Trajectory {
            grid: self.grid,
            samples: self.samples.iter().map(f).collect(),
        }
    }

    /// Trapezoidal integral of `f` over the grid.
    pub fn integrate(&self, mut f: impl FnMut(f64, &T) -> f64) -> f64 {
        compensated_sum(
            self.iter()
                .enumerate()
                .map(|(k, (t, s))| self.grid.trapezoid_weight(k) * f(t, s)),
        )
    }
}

impl ControlTrajectory {
    pub fn constant(grid: TimeGrid, u: ControlInput) -> Self {
        Self::from_fn(grid, |_| u)
    }

    /// Piecewise-linear interpolation between node samples.
    pub fn at(&self, t: f64) -> ControlInput {
        let (k, frac) = self.grid.locate(t);
        self.samples[k].lerp(self.samples[k + 1], frac)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples
            .iter()
            .map(|u| u.bx.abs().max(u.bz.abs()))
            .fold(0.0, f64::max)
    }
}
