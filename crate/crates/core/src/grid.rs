use serde::{Deserialize, Serialize};

use crate::error::{Result, WedError};

/// Uniform partition of `[0, T]` into `n` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n: usize,
    h: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(WedError::Parameter(format!(
                "final time must be positive and finite, got {t_final}"
            )));
        }
        if n < 2 {
            return Err(WedError::Parameter(format!(
                "grid needs at least 2 cells (N >= 2), got N = {n}"
            )));
        }
        Ok(Self {
            t_final,
            n,
            h: t_final / n as f64,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Number of cells.
    pub fn cells(&self) -> usize {
        self.n
    }

    /// Number of nodes, `N + 1`.
    pub fn nodes(&self) -> usize {
        self.n + 1
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n {
            self.t_final
        } else {
            k as f64 * self.h
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |k| self.time(k))
    }

    /// Trapezoidal quadrature weight of node `k`.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n {
            0.5 * self.h
        } else {
            self.h
        }
    }

    pub(crate) fn same_as(&self, other: &TimeGrid) -> bool {
        self.n == other.n && self.t_final == other.t_final
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_times_cells_is_final_time() {
        for &(t, n) in &[(1.0, 3usize), (0.7, 1000), (13.0, 77)] {
            let g = TimeGrid::new(t, n).unwrap();
            assert!((g.step() * n as f64 - t).abs() <= f64::EPSILON * t);
            assert_eq!(g.time(n), t);
            let ts: Vec<f64> = g.times().collect();
            assert!(ts.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
    }
}
