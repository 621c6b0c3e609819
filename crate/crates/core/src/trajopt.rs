//! Minimization of trajectory functionals of the form
//!
//! ```text
//! F(y) = Σ_k ½ c_k ‖y_{k+1} − y_k‖² + Σ_{j≥1} [ a_j φ(y_j) + ½ q_j ‖y_j‖² − (b_j, y_j) ]
//! ```
//!
//! over trajectories with pinned `y_0`. Both the WED functional and the
//! penalized control objective reduce to this shape.

use crate::banded::BlockTridiag;
use crate::energy::{Energy, Smoothness};
use crate::error::{Result, WedError};
use crate::options::SolverOptions;
use crate::trajectory::Trajectory;
use nalgebra::DMatrix;

pub(crate) struct NodalObjective<'a> {
    pub energy: &'a Energy,
    /// `c_k`, `k = 0..N`.
    pub coupling: Vec<f64>,
    /// `a_j` for nodes `1..=N` (index `j − 1`).
    pub phi_weight: Vec<f64>,
    /// `q_j` for nodes `1..=N`.
    pub quad_weight: Vec<f64>,
    /// `b_j` for nodes `1..=N`, flattened.
    pub linear: Vec<f64>,
}

pub(crate) struct Minimized {
    pub y: Trajectory,
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
}

impl NodalObjective<'_> {
    fn dim(&self, y: &Trajectory) -> usize {
        y.dim()
    }

    /// Objective value up to a `y`-independent constant; `+∞` outside the
    /// energy domain.
    pub fn value(&self, y: &Trajectory) -> f64 {
        let d = self.dim(y);
        let n = y.grid().cells();
        let mut total = 0.0;
        for k in 0..n {
            let (a, b) = (y.node(k), y.node(k + 1));
            let s: f64 = a.iter().zip(b).map(|(x, z)| (z - x) * (z - x)).sum();
            total += 0.5 * self.coupling[k] * s;
        }
        for j in 1..=n {
            let v = y.node(j);
            let phi = self.energy.value_unchecked(v);
            if !phi.is_finite() {
                return f64::INFINITY;
            }
            let lin = &self.linear[(j - 1) * d..j * d];
            let sq: f64 = v.iter().map(|x| x * x).sum();
            let dotb: f64 = v.iter().zip(lin).map(|(x, b)| x * b).sum();
            total += self.phi_weight[j - 1] * phi + 0.5 * self.quad_weight[j - 1] * sq - dotb;
        }
        total
    }

    /// Gradient of the smooth part with respect to nodes `1..=N`. For the
    /// obstacle energy the `½‖y‖²` part of `φ` is included, the indicator
    /// is not.
    fn gradient(&self, y: &Trajectory) -> Vec<f64> {
        let d = y.dim();
        let n = y.grid().cells();
        let mut g = vec![0.0; n * d];
        let mut gphi = vec![0.0; d];
        for j in 1..=n {
            let gj = &mut g[(j - 1) * d..j * d];
            let v = y.node(j);
            self.energy.grad_into(v, &mut gphi);
            for i in 0..d {
                let mut s = self.coupling[j - 1] * (v[i] - y.node(j - 1)[i]);
                if j < n {
                    s -= self.coupling[j] * (y.node(j + 1)[i] - v[i]);
                }
                gj[i] = s + self.phi_weight[j - 1] * gphi[i] + self.quad_weight[j - 1] * v[i]
                    - self.linear[(j - 1) * d + i];
            }
        }
        g
    }

    fn row_diag(&self, j: usize) -> f64 {
        let n = self.phi_weight.len();
        self.coupling[j - 1]
            + if j < n { self.coupling[j] } else { 0.0 }
            + self.phi_weight[j - 1]
            + self.quad_weight[j - 1]
    }

    fn row_scale(&self, j: usize) -> f64 {
        self.phi_weight[j - 1] + self.quad_weight[j - 1]
    }

    /// Backward-error denominators `D_j ‖y‖_∞ + ‖b_j‖`, `‖y‖_∞ ≥ 1`, where
    /// `D_j` is the diagonal of the quadratic part.
    fn residual_denominators(&self, y: &Trajectory) -> Vec<f64> {
        let d = y.dim();
        let ymax = y.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        (1..=self.phi_weight.len())
            .map(|j| {
                let b = self.linear[(j - 1) * d..j * d]
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                self.row_diag(j) * ymax + b
            })
            .collect()
    }

    /// Largest per-row stationarity defect relative to the row's scale.
    fn scaled_residual(&self, y: &Trajectory, g: &[f64]) -> f64 {
        let d = y.dim();
        let den = self.residual_denominators(y);
        let mut m: f64 = 0.0;
        for (j, s) in den.iter().enumerate() {
            let gj = &g[j * d..(j + 1) * d];
            let norm = gj.iter().map(|v| v * v).sum::<f64>().sqrt();
            m = m.max(norm / s);
        }
        m
    }

    fn hessian(&self, y: &Trajectory) -> BlockTridiag {
        let d = y.dim();
        let n = y.grid().cells();
        let diag = (1..=n)
            .map(|j| {
                let mut b: DMatrix<f64> =
                    self.energy.hess_unchecked(y.node(j)) * self.phi_weight[j - 1];
                let c = self.coupling[j - 1] + if j < n { self.coupling[j] } else { 0.0 };
                for i in 0..d {
                    b[(i, i)] += c + self.quad_weight[j - 1];
                }
                b
            })
            .collect();
        let off = (1..n).map(|j| -self.coupling[j]).collect();
        BlockTridiag { dim: d, diag, off }
    }

    pub fn minimize(&self, init: Trajectory, opts: &SolverOptions) -> Result<Minimized> {
        match self.energy.smoothness() {
            Smoothness::Smooth => self.newton(init, opts),
            Smoothness::ProxOnly => self.projected_gradient(init, opts),
        }
    }

    /// Damped Newton with Armijo backtracking on the objective value.
    fn newton(&self, mut y: Trajectory, opts: &SolverOptions) -> Result<Minimized> {
        let d = y.dim();
        let n = y.grid().cells();
        let tol = opts.tol;
        let mut f = self.value(&y);
        let mut g = self.gradient(&y);
        let mut res = self.scaled_residual(&y, &g);
        for it in 0..opts.max_iter {
            if res <= tol {
                return Ok(Minimized {
                    y,
                    iterations: it,
                    residual: res,
                    tolerance: tol,
                });
            }
            let mut hess = self.hessian(&y);
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut step = hess.solve_spd(&neg_g);
            // Levenberg shift if the Hessian is not positive definite here.
            let mut shift = 1e-8;
            while step.is_none() && shift < 1e8 {
                for j in 1..=n {
                    let w = self.row_scale(j) * shift;
                    for i in 0..d {
                        hess.diag[j - 1][(i, i)] += w;
                    }
                }
                step = hess.solve_spd(&neg_g);
                shift *= 10.0;
            }
            let step = step.ok_or_else(|| {
                WedError::solver_with("Newton system could not be factorized", y.clone())
            })?;
            let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial = y.clone();
                for (v, s) in trial.values_mut()[d..].iter_mut().zip(&step) {
                    *v += alpha * s;
                }
                let ft = self.value(&trial);
                let noise = 1e-13 * (f.abs() + 1.0);
                if ft.is_finite()
                    && (ft <= f + 1e-4 * alpha * slope || (alpha == 1.0 && (ft - f).abs() <= noise))
                {
                    accepted = Some((trial, ft));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, ft)) = accepted else {
                return Err(WedError::solver_with(
                    format!("line search failed at iteration {it} (residual {res:.3e})"),
                    y,
                ));
            };
            y = trial;
            f = ft;
            g = self.gradient(&y);
            res = self.scaled_residual(&y, &g);
        }
        if res <= tol {
            return Ok(Minimized {
                y,
                iterations: opts.max_iter,
                residual: res,
                tolerance: tol,
            });
        }
        Err(WedError::solver_with(
            format!(
                "Newton did not converge in {} iterations (residual {res:.3e} > {tol:.3e})",
                opts.max_iter
            ),
            y,
        ))
    }

    /// Accelerated projected gradient in the Jacobi metric, with adaptive
    /// restart. Only valid for the obstacle energy, whose smooth part is
    /// quadratic.
    fn projected_gradient(&self, init: Trajectory, opts: &SolverOptions) -> Result<Minimized> {
        let Energy::Obstacle { a: lo, b: hi } = *self.energy else {
            return Err(WedError::Capability(
                "projected gradient needs a box-constrained energy".into(),
            ));
        };
        let d = init.dim();
        let n = init.grid().cells();
        let tol = opts.tol;
        // Jacobi metric D_j and Gershgorin bound on the spectrum of D⁻¹H.
        let metric: Vec<f64> = (1..=n).map(|j| self.row_diag(j)).collect();
        let lip = (1..=n)
            .map(|j| {
                let off = self.coupling[j - 1] + if j < n { self.coupling[j] } else { 0.0 };
                1.0 + off / metric[j - 1]
            })
            .fold(1.0, f64::max);

        let project = |y: &mut Trajectory| {
            for v in y.values_mut()[d..].iter_mut() {
                *v = v.clamp(lo, hi);
            }
        };
        let step_from = |z: &Trajectory, g: &[f64]| {
            let mut next = z.clone();
            for j in 1..=n {
                let w = 1.0 / (lip * metric[j - 1]);
                for i in 0..d {
                    next.node_mut(j)[i] -= w * g[(j - 1) * d + i];
                }
            }
            project(&mut next);
            next
        };
        let mapping_residual = |z: &Trajectory, next: &Trajectory| {
            let den = self.residual_denominators(z);
            let mut m: f64 = 0.0;
            for j in 1..=n {
                let diff = z
                    .node(j)
                    .iter()
                    .zip(next.node(j))
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                m = m.max(lip * metric[j - 1] * diff / den[j - 1]);
            }
            m
        };

        let mut x = init;
        project(&mut x);
        let mut z = x.clone();
        let mut t = 1.0f64;
        let mut res = f64::INFINITY;
        for it in 0..opts.max_prox_iter {
            let gz = self.gradient(&z);
            let next = step_from(&z, &gz);
            // Fixed-point residual measured at the extrapolated point.
            res = mapping_residual(&z, &next);
            if res <= tol {
                return Ok(Minimized {
                    y: next,
                    iterations: it + 1,
                    residual: res,
                    tolerance: tol,
                });
            }
            // Restart when the step opposes the momentum direction.
            let restart: f64 = gz
                .iter()
                .zip(next.values()[d..].iter().zip(&x.values()[d..]))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            let t_next = if restart > 0.0 {
                1.0
            } else {
                0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
            };
            let beta = if restart > 0.0 {
                0.0
            } else {
                (t - 1.0) / t_next
            };
            let mut z_next = next.clone();
            for (zv, (nv, xv)) in z_next.values_mut()[d..]
                .iter_mut()
                .zip(next.values()[d..].iter().zip(&x.values()[d..]))
            {
                *zv = nv + beta * (nv - xv);
            }
            project(&mut z_next);
            x = next;
            z = z_next;
            t = t_next;
        }
        Err(WedError::solver_with(
            format!(
                "projected gradient did not converge in {} iterations (residual {res:.3e} > {tol:.3e})",
                opts.max_prox_iter
            ),
            x,
        ))
    }
}
