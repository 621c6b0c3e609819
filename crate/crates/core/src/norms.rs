//! Discrete L², H¹ and fractional H^σ norms of trajectories.

use crate::error::{Result, WedError};
use crate::par;
use crate::trajectory::{dist, norm2, Trajectory};

/// Default fractional exponent for H^σ.
pub const DEFAULT_SIGMA: f64 = 0.5;

fn l2_squared(y: &Trajectory) -> f64 {
    let g = y.grid();
    (0..g.nodes())
        .map(|k| g.trapezoid_weight(k) * norm2(y.node(k)))
        .sum()
}

fn velocity_squared(y: &Trajectory) -> f64 {
    let h = y.grid().step();
    (0..y.grid().cells())
        .map(|k| {
            let d = dist(y.node(k + 1), y.node(k)) / h;
            h * d * d
        })
        .sum()
}

/// Trapezoidal `(∫ ‖y‖² dt)^{1/2}`.
pub fn norm_l2(y: &Trajectory) -> Result<f64> {
    y.check_finite()?;
    Ok(l2_squared(y).sqrt())
}

/// `(‖y‖²_{L²} + ‖ẏ‖²_{L²})^{1/2}` with forward-difference velocity.
pub fn norm_h1(y: &Trajectory) -> Result<f64> {
    y.check_finite()?;
    Ok((l2_squared(y) + velocity_squared(y)).sqrt())
}

/// L² norm of the forward-difference velocity.
pub fn velocity_l2(y: &Trajectory) -> Result<f64> {
    y.check_finite()?;
    Ok(velocity_squared(y).sqrt())
}

/// Largest nodal Euclidean norm.
pub fn norm_c0(y: &Trajectory) -> Result<f64> {
    y.check_finite()?;
    Ok((0..y.grid().nodes())
        .map(|k| norm2(y.node(k)).sqrt())
        .fold(0.0, f64::max))
}

/// L² part plus the Gagliardo double sum over node pairs `j != k`.
pub fn norm_hsigma(y: &Trajectory, sigma: f64) -> Result<f64> {
    norm_hsigma_with(y, sigma, true)
}

pub fn norm_hsigma_with(y: &Trajectory, sigma: f64, parallel: bool) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(WedError::Parameter(format!(
            "fractional exponent must lie in (0, 1), got {sigma}"
        )));
    }
    y.check_finite()?;
    let g = y.grid();
    let h = g.step();
    let n = g.nodes();
    let p = 1.0 + 2.0 * sigma;
    // Pairs are symmetric: sum j < k and double.
    let half = par::sum_range(n, parallel, |j| {
        let tj = g.time(j);
        let yj = y.node(j);
        (j + 1..n)
            .map(|k| {
                let d2 = y
                    .node(k)
                    .iter()
                    .zip(yj)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                d2 / (g.time(k) - tj).powf(p)
            })
            .sum::<f64>()
    });
    Ok((l2_squared(y) + 2.0 * h * h * half).sqrt())
}
