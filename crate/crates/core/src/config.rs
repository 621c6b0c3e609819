//! TOML run configuration.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{ControlFamily, ControlPoint};
use crate::energy::{Energy, EnergySpec};
use crate::error::{Result, WedError};
use crate::flow::FlowProblem;
use crate::grid::TimeGrid;
use crate::norms::DEFAULT_SIGMA;
use crate::optctl::TargetFunctional;
use crate::options::SolverOptions;
use crate::sweep::{LambdaSchedule, SweepPlan};
use crate::wed::{epsilon0, WedProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub y0: Vec<f64>,
    /// State dimension; defaults to `y0.len()`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    pub energy: EnergySpec,
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

/// Subcommand parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Control used by `gradient-flow`, `wed-min` and `gamma-probe`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_params: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilon_list: Vec<f64>,
    #[serde(default)]
    pub lambda_list: Vec<f64>,
    #[serde(default)]
    pub schedule: LambdaSchedule,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Known optimal control, if any, for trend assertions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_target: Option<Vec<f64>>,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            epsilon: None,
            lambda: None,
            u_params: None,
            epsilon_list: Vec::new(),
            lambda_list: Vec::new(),
            schedule: LambdaSchedule::default(),
            sigma: DEFAULT_SIGMA,
            u_target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub control: ControlFamily,
    pub target: TargetFunctional,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub run: RunParams,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| WedError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(WedError::Config(format!(
            "{name} must be positive (got {v})"
        )))
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        positive("problem.T", p.t_final)?;
        if p.n < 2 {
            return Err(WedError::Config(format!(
                "problem.N must be at least 2 (grid invariant N >= 2), got {}",
                p.n
            )));
        }
        if p.y0.is_empty() {
            return Err(WedError::Config("problem.y0 must not be empty".into()));
        }
        if let Some(d) = p.d {
            if d != p.y0.len() {
                return Err(WedError::Config(format!(
                    "problem.d = {d} but y0 has {} entries",
                    p.y0.len()
                )));
            }
        }
        let energy = Energy::from_spec(&p.energy)
            .map_err(|e| WedError::Config(format!("problem.energy: {e}")))?;
        energy
            .check_dim(p.y0.len())
            .map_err(|e| WedError::Config(format!("problem.energy: {e}")))?;
        if !energy.in_domain(&p.y0) {
            return Err(WedError::Config(
                "problem.y0 lies outside the energy domain".into(),
            ));
        }
        self.control
            .validate()
            .map_err(|e| WedError::Config(format!("control: {e}")))?;
        if self.control.dim() != p.y0.len() {
            return Err(WedError::Config(format!(
                "control dimension {} != state dimension {}",
                self.control.dim(),
                p.y0.len()
            )));
        }
        let grid = self.grid()?;
        self.target
            .validate(&grid, p.y0.len())
            .map_err(|e| WedError::Config(format!("target: {e}")))?;
        self.solver.validate()?;
        let r = &self.run;
        let eps0 = epsilon0(energy.kappa());
        let check_eps = |name: &str, e: f64| -> Result<()> {
            if !(e > 0.0 && e.is_finite()) {
                return Err(WedError::Config(format!(
                    "{name}: epsilon must be positive"
                )));
            }
            if e >= eps0 {
                return Err(WedError::Config(format!(
                    "{name}: epsilon = {e} violates the convexity guard epsilon < epsilon0 = {eps0}"
                )));
            }
            Ok(())
        };
        if let Some(e) = r.epsilon {
            check_eps("run.epsilon", e)?;
        }
        for &e in &r.epsilon_list {
            check_eps("run.epsilon_list", e)?;
        }
        if let Some(l) = r.lambda {
            positive("run.lambda", l)?;
        }
        for &l in &r.lambda_list {
            positive("run.lambda_list", l)?;
        }
        if !(r.sigma > 0.0 && r.sigma < 1.0) {
            return Err(WedError::Config(format!(
                "run.sigma must lie in (0, 1), got {}",
                r.sigma
            )));
        }
        if let Some(u) = &r.u_params {
            if !self.control.contains(u) {
                return Err(WedError::Config(format!(
                    "run.u_params {u:?} outside the control box"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.problem.t_final, self.problem.n)
            .map_err(|e| WedError::Config(e.to_string()))
    }

    pub fn energy(&self) -> Result<Energy> {
        Energy::from_spec(&self.problem.energy)
    }

    pub fn family(&self) -> Arc<ControlFamily> {
        Arc::new(self.control.clone())
    }

    pub fn flow(&self) -> Result<FlowProblem> {
        FlowProblem::new(self.energy()?, self.problem.y0.clone(), self.grid()?)
    }

    pub fn epsilon(&self) -> Result<f64> {
        self.run
            .epsilon
            .ok_or_else(|| WedError::Config("run.epsilon is required for this subcommand".into()))
    }

    pub fn lambda(&self) -> Result<f64> {
        self.run
            .lambda
            .ok_or_else(|| WedError::Config("run.lambda is required for this subcommand".into()))
    }

    pub fn wed(&self, eps: f64) -> Result<WedProblem> {
        WedProblem::with_options(
            self.energy()?,
            self.problem.y0.clone(),
            self.grid()?,
            eps,
            self.solver.clone(),
        )
    }

    pub fn control_point(&self) -> Result<ControlPoint> {
        let p = self.run.u_params.clone().ok_or_else(|| {
            WedError::Config("run.u_params is required for this subcommand".into())
        })?;
        ControlPoint::new(self.family(), p)
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        Ok(SweepPlan {
            energy: self.energy()?,
            y0: self.problem.y0.clone(),
            grid: self.grid()?,
            target: self.target.clone(),
            family: self.family(),
            epsilons: self.run.epsilon_list.clone(),
            lambdas: self.run.lambda_list.clone(),
            schedule: self.run.schedule.clone(),
            sigma: self.run.sigma,
            options: self.solver.clone(),
            u_target: self.run.u_target.clone(),
        })
    }
}
