//! Run configuration: a TOML file whose every key is optional, plus
//! command-line overrides.

use std::path::{Path, PathBuf};

use bloch_transfer::{
    BlochState, CostWeights, ParamError, SweepSettings, SystemParams, TargetSpec, TimeGrid,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Initial state used when none is configured.
pub const DEFAULT_INITIAL_STATE: [f64; 3] = [
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
    1.0,
];

/// Mean occupations visited by `sweep` by default.
pub const DEFAULT_SWEEP: [f64; 6] = [0.01, 0.2, 0.5, 1.0, 2.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub gamma0: f64,
    pub n_mean: f64,
    pub omega0: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            gamma0: 0.1,
            n_mean: 0.01,
            omega0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub t0: f64,
    pub tf: f64,
    pub steps: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            t0: 0.0,
            tf: 30.0,
            steps: 6000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub theta: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self { theta: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub max_iterations: usize,
    pub cost_rel_tol: f64,
    pub control_abs_tol: f64,
    pub relaxation_init: f64,
    pub relaxation_backtrack: f64,
    pub memory: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepSettings::default();
        Self {
            max_iterations: s.max_iterations,
            cost_rel_tol: s.cost_rel_tol,
            control_abs_tol: s.control_abs_tol,
            relaxation_init: s.relaxation_init,
            relaxation_backtrack: s.relaxation_backtrack,
            memory: s.memory,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    /// Rotation rate of the target; `omega0` when absent.
    pub omega_ref: Option<f64>,
}

/// Everything a run needs, as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub initial_state: [f64; 3],
    pub n_sweep_values: Vec<f64>,
    pub output_path: Option<PathBuf>,
    pub system: SystemSection,
    pub grid: GridSection,
    pub weights: WeightsSection,
    pub sweep: SweepSection,
    pub target: TargetSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            initial_state: DEFAULT_INITIAL_STATE,
            n_sweep_values: DEFAULT_SWEEP.to_vec(),
            output_path: None,
            system: SystemSection::default(),
            grid: GridSection::default(),
            weights: WeightsSection::default(),
            sweep: SweepSection::default(),
            target: TargetSection::default(),
        }
    }
}

/// Per-field values from the command line that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n_mean: Option<f64>,
    pub theta: Option<f64>,
    pub gamma0: Option<f64>,
    pub tf: Option<f64>,
    pub steps: Option<usize>,
    pub output_path: Option<PathBuf>,
}

/// Validated configuration in domain types.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub x0: BlochState,
    pub params: SystemParams,
    pub grid: TimeGrid,
    pub weights: CostWeights,
    pub settings: SweepSettings,
    pub target: TargetSpec,
    pub n_sweep_values: Vec<f64>,
    pub output_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.n_mean {
            self.system.n_mean = v;
        }
        if let Some(v) = o.theta {
            self.weights.theta = v;
        }
        if let Some(v) = o.gamma0 {
            self.system.gamma0 = v;
        }
        if let Some(v) = o.tf {
            self.grid.tf = v;
        }
        if let Some(v) = o.steps {
            self.grid.steps = v;
        }
        if let Some(v) = &o.output_path {
            self.output_path = Some(v.clone());
        }
    }

    pub fn validate(&self) -> Result<Problem, CliError> {
        let named = |section: &str| {
            let section = section.to_string();
            move |e: ParamError| CliError::Config(format!("[{section}] {e}"))
        };
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("initial_state must be finite".into()));
        }
        let params = SystemParams::new(self.system.gamma0, self.system.n_mean, self.system.omega0)
            .map_err(named("system"))?;
        let grid =
            TimeGrid::new(self.grid.t0, self.grid.tf, self.grid.steps).map_err(named("grid"))?;
        let weights = CostWeights::new(self.weights.theta).map_err(named("weights"))?;
        let s = &self.sweep;
        let settings = SweepSettings {
            max_iterations: s.max_iterations,
            cost_rel_tol: s.cost_rel_tol,
            control_abs_tol: s.control_abs_tol,
            relaxation_init: s.relaxation_init,
            relaxation_backtrack: s.relaxation_backtrack,
            memory: s.memory,
        };
        settings.validate().map_err(named("sweep"))?;
        let omega_ref = self.target.omega_ref.unwrap_or(params.omega0);
        if !(omega_ref.is_finite() && omega_ref > 0.0) {
            return Err(CliError::Config(format!(
                "[target] omega_ref must be finite and > 0, got {omega_ref}"
            )));
        }
        if let Some(bad) = self
            .n_sweep_values
            .iter()
            .find(|n| !(n.is_finite() && **n >= 0.0))
        {
            return Err(CliError::Config(format!(
                "n_sweep_values entries must be finite and >= 0, got {bad}"
            )));
        }
        Ok(Problem {
            x0: BlochState::from_array(self.initial_state),
            params,
            grid,
            weights,
            settings,
            target: TargetSpec {
                gamma0: params.gamma0,
                omega_ref,
            },
            n_sweep_values: self.n_sweep_values.clone(),
            output_path: self.output_path.clone(),
        })
    }
}
