use serde::{Deserialize, Serialize};

/// Telemetry attached to every solver result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub functional_value: f64,
    pub converged: bool,
    /// Tolerance the residual was tested against.
    pub tolerance: f64,
    pub wall_time: f64,
}

impl SolveReport {
    pub(crate) fn new(
        iterations: usize,
        final_residual: f64,
        functional_value: f64,
        tolerance: f64,
        wall_time: f64,
    ) -> Self {
        Self {
            iterations,
            final_residual,
            functional_value,
            converged: final_residual <= tolerance,
            tolerance,
            wall_time,
        }
    }
}
