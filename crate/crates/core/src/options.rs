use serde::{Deserialize, Serialize};

use crate::error::{Result, WedError};

/// Solver knobs shared by the inner and outer solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Scaled first-order residual tolerance of the inner solvers.
    pub tol: f64,
    /// Newton iteration cap.
    pub max_iter: usize,
    /// Projected-gradient iteration cap for nonsmooth energies.
    pub max_prox_iter: usize,
    /// Lattice points per parameter axis in the outer search.
    pub lattice: usize,
    /// Cap on the total number of lattice points.
    pub max_lattice_points: usize,
    pub nm_max_iter: usize,
    /// Parameter-space tolerance of the outer refinement.
    pub xtol: f64,
    pub parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            max_prox_iter: 200_000,
            lattice: 11,
            max_lattice_points: 4096,
            nm_max_iter: 400,
            xtol: 1e-9,
            parallel: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(WedError::Config("solver.tol must be positive".into()));
        }
        if self.max_iter == 0 || self.max_prox_iter == 0 || self.nm_max_iter == 0 {
            return Err(WedError::Config("iteration caps must be at least 1".into()));
        }
        if self.lattice < 2 {
            return Err(WedError::Config("solver.lattice must be at least 2".into()));
        }
        if self.max_lattice_points < 2 {
            return Err(WedError::Config(
                "solver.max_lattice_points must be at least 2".into(),
            ));
        }
        if !(self.xtol > 0.0 && self.xtol.is_finite()) {
            return Err(WedError::Config("solver.xtol must be positive".into()));
        }
        Ok(())
    }

    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }
}
