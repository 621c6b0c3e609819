//! Tracking functionals and the three control problems: the gradient-flow
//! problem, its bilevel WED approximation and the penalized WED problem.

pub mod outer;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::control::{render_control, ControlFamily, ControlPoint, Profile};
use crate::error::{Result, WedError};
use crate::flow::{solve_gradient_flow, FlowProblem};
use crate::grid::TimeGrid;
use crate::options::SolverOptions;
use crate::report::SolveReport;
use crate::trajectory::Trajectory;
use crate::wed::WedProblem;

pub use outer::{minimize_box, OuterResult};

fn zero_profile() -> Profile {
    Profile::Constant { value: 0.0 }
}

/// `J(y,u) = w_f ½‖y(T) − y_T‖² + ½∫ w_y ‖y − y^ref‖² + ½∫ w_u ‖u − u^ref‖²`.
///
/// Missing reference components are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFunctional {
    #[serde(default)]
    pub w_f: f64,
    #[serde(default)]
    pub y_terminal_ref: Vec<f64>,
    #[serde(default = "zero_profile")]
    pub w_y: Profile,
    #[serde(default)]
    pub y_ref: Vec<Profile>,
    #[serde(default = "zero_profile")]
    pub w_u: Profile,
    #[serde(default)]
    pub u_ref: Vec<Profile>,
}

impl TargetFunctional {
    /// `½∫(y − e^{−t})² + ½∫t²(u − e^{−t})²`.
    pub fn example() -> Self {
        let decay = Profile::Exp {
            amp: 1.0,
            rate: -1.0,
        };
        Self {
            w_f: 0.0,
            y_terminal_ref: Vec::new(),
            w_y: Profile::Constant { value: 1.0 },
            y_ref: vec![decay.clone()],
            w_u: Profile::Power {
                coef: 1.0,
                exponent: 2.0,
            },
            u_ref: vec![decay],
        }
    }

    pub fn validate(&self, grid: &TimeGrid, d: usize) -> Result<()> {
        if !(self.w_f >= 0.0 && self.w_f.is_finite()) {
            return Err(WedError::Parameter(
                "w_f must be finite and nonnegative".into(),
            ));
        }
        if self.y_terminal_ref.len() > d || self.y_ref.len() > d || self.u_ref.len() > d {
            return Err(WedError::Input(format!(
                "reference has more components than the state dimension {d}"
            )));
        }
        if self.y_terminal_ref.iter().any(|v| !v.is_finite()) {
            return Err(WedError::Parameter("y_terminal_ref must be finite".into()));
        }
        for (name, w) in [("w_y", &self.w_y), ("w_u", &self.w_u)] {
            if !w.is_finite()
                || grid
                    .times()
                    .any(|t| !(w.eval(t) >= 0.0 && w.eval(t).is_finite()))
            {
                return Err(WedError::Parameter(format!(
                    "{name} must be finite and nonnegative on the grid"
                )));
            }
        }
        for p in self.y_ref.iter().chain(&self.u_ref) {
            if !p.is_finite() || grid.times().any(|t| !p.eval(t).is_finite()) {
                return Err(WedError::Parameter(
                    "references must be finite on the grid".into(),
                ));
            }
        }
        Ok(())
    }

    fn reference(refs: &[Profile], t: f64, i: usize) -> f64 {
        refs.get(i).map_or(0.0, |p| p.eval(t))
    }

    fn terminal_ref(&self, i: usize) -> f64 {
        self.y_terminal_ref.get(i).copied().unwrap_or(0.0)
    }

    /// `J(y, u)` by trapezoidal quadrature on `y`'s grid.
    pub fn eval(&self, y: &Trajectory, u: &ControlPoint) -> Result<f64> {
        let grid = *y.grid();
        let d = y.dim();
        if u.dim() != d {
            return Err(WedError::Input(format!(
                "control dimension {} != state dimension {d}",
                u.dim()
            )));
        }
        self.validate(&grid, d)?;
        y.check_finite()?;
        let uh = render_control(u, &grid)?;
        let mut total = 0.0;
        for (k, t) in grid.times().enumerate() {
            let w = grid.trapezoid_weight(k);
            let (wy, wu) = (self.w_y.eval(t), self.w_u.eval(t));
            let mut sy = 0.0;
            let mut su = 0.0;
            for i in 0..d {
                sy += (y.node(k)[i] - Self::reference(&self.y_ref, t, i)).powi(2);
                su += (uh.node(k)[i] - Self::reference(&self.u_ref, t, i)).powi(2);
            }
            total += 0.5 * w * (wy * sy + wu * su);
        }
        let n = grid.cells();
        let st: f64 = (0..d)
            .map(|i| (y.node(n)[i] - self.terminal_ref(i)).powi(2))
            .sum();
        Ok(total + self.w_f * 0.5 * st)
    }

    /// Quadratic-in-`y` part of `J` at nodes `1..=N`: `(q_j, b_j)` such that
    /// `J = Σ ½ q_j ‖y_j‖² − (b_j, y_j) + const`.
    fn nodal_terms(&self, grid: &TimeGrid, d: usize) -> (Vec<f64>, Vec<f64>) {
        let n = grid.cells();
        let mut q = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n * d);
        for j in 1..=n {
            let t = grid.time(j);
            let mut qj = grid.trapezoid_weight(j) * self.w_y.eval(t);
            for i in 0..d {
                b.push(qj * Self::reference(&self.y_ref, t, i));
            }
            if j == n {
                for i in 0..d {
                    b[(j - 1) * d + i] += self.w_f * self.terminal_ref(i);
                }
                qj += self.w_f;
            }
            q.push(qj);
        }
        (q, b)
    }
}

/// `J(y, u)`.
pub fn eval_j(j: &TargetFunctional, y: &Trajectory, u: &ControlPoint) -> Result<f64> {
    j.eval(y, u)
}

#[derive(Debug, Clone)]
pub struct OptimalPair {
    pub y: Trajectory,
    pub u: ControlPoint,
    /// `j_part + penalty_part`.
    pub value: f64,
    pub j_part: f64,
    /// `(W_ε(y,u) − M_ε^u)/λ`; zero for the unpenalized problems.
    pub penalty_part: f64,
    /// `W_ε(y,u) − M_ε^u`; zero for the unpenalized problems.
    pub penalty_residual: f64,
    /// Lattice points and refinement iterates evaluated.
    pub evaluations: usize,
    /// Evaluations skipped because the inner solver failed.
    pub skipped: usize,
    pub lattice_min: f64,
    pub report: SolveReport,
}

/// JSON result record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub u_params: Vec<f64>,
    pub value: f64,
    #[serde(rename = "J_part")]
    pub j_part: f64,
    pub penalty_part: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

impl OptimalPair {
    pub fn record(&self) -> ResultRecord {
        ResultRecord {
            u_params: self.u.params().to_vec(),
            value: self.value,
            j_part: self.j_part,
            penalty_part: self.penalty_part,
            iterations: self.report.iterations,
            wall_time: self.report.wall_time,
        }
    }
}

fn check_family(family: &ControlFamily, d: usize) -> Result<()> {
    family.validate()?;
    if family.dim() != d {
        return Err(WedError::Input(format!(
            "control family dimension {} != state dimension {d}",
            family.dim()
        )));
    }
    if family.params_len() > 16 {
        return Err(WedError::Parameter(
            "at most 16 control parameters are supported".into(),
        ));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    start: Instant,
    res: &OuterResult,
    opts: &SolverOptions,
    y: Trajectory,
    u: ControlPoint,
    j_part: f64,
    penalty_residual: f64,
    lambda: Option<f64>,
) -> OptimalPair {
    let penalty_part = lambda.map_or(0.0, |l| penalty_residual / l);
    let value = j_part + penalty_part;
    let lattice_min = res
        .lattice
        .iter()
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    OptimalPair {
        y,
        u,
        value,
        j_part,
        penalty_part,
        penalty_residual,
        evaluations: res.evaluations,
        skipped: res.failures,
        lattice_min,
        report: SolveReport::new(
            res.evaluations,
            res.final_step,
            value,
            opts.xtol,
            start.elapsed().as_secs_f64(),
        ),
    }
}

/// Problem P: minimize `J(S(u), u)` over the family.
pub fn solve_p(
    j: &TargetFunctional,
    flow: &FlowProblem,
    family: &Arc<ControlFamily>,
    opts: &SolverOptions,
) -> Result<OptimalPair> {
    let start = Instant::now();
    opts.validate()?;
    flow.validate()?;
    check_family(family, flow.y0.len())?;
    j.validate(&flow.grid, flow.y0.len())?;
    let objective = |p: &[f64]| {
        let u = ControlPoint::new(Arc::clone(family), p.to_vec())?;
        let (y, _) = solve_gradient_flow(flow, &u)?;
        j.eval(&y, &u)
    };
    let res = minimize_box(&family.lower(), &family.upper(), opts, objective)?;
    let u = ControlPoint::new(Arc::clone(family), res.params.clone())?;
    let (y, _) = solve_gradient_flow(flow, &u)?;
    let jv = j.eval(&y, &u)?;
    Ok(finish(start, &res, opts, y, u, jv, 0.0, None))
}

/// Problem P_ε: minimize `J(y_ε^u, u)` with `y_ε^u = argmin W_ε(·, u)`.
pub fn solve_p_eps(
    j: &TargetFunctional,
    wed: &WedProblem,
    family: &Arc<ControlFamily>,
    opts: &SolverOptions,
) -> Result<OptimalPair> {
    let start = Instant::now();
    opts.validate()?;
    check_family(family, wed.dim())?;
    j.validate(wed.grid(), wed.dim())?;
    let objective = |p: &[f64]| {
        let u = ControlPoint::new(Arc::clone(family), p.to_vec())?;
        let (y, _) = wed.wed_minimize(&u)?;
        j.eval(&y, &u)
    };
    let res = minimize_box(&family.lower(), &family.upper(), opts, objective)?;
    let u = ControlPoint::new(Arc::clone(family), res.params.clone())?;
    let (y, _) = wed.wed_minimize(&u)?;
    let jv = j.eval(&y, &u)?;
    Ok(finish(start, &res, opts, y, u, jv, 0.0, None))
}

/// Inner problem of P_ελ at a fixed control: minimizes
/// `J(·, u) + (W_ε(·, u) − M_ε^u)/λ` from `y_ε^u`. Returns `(y, J, W − M)`.
pub fn penalized_inner(
    j: &TargetFunctional,
    wed: &WedProblem,
    u: &ControlPoint,
    lambda: f64,
) -> Result<(Trajectory, f64, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(WedError::Parameter("lambda must be positive".into()));
    }
    let sol = wed.minimizer(u)?;
    let uh = wed.render(u)?;
    let d = wed.dim();
    // λJ + W − M has the same minimizer and is bounded as λ → 0.
    let mut obj = wed.objective(&uh);
    let (q, b) = j.nodal_terms(wed.grid(), d);
    for (qo, qj) in obj.quad_weight.iter_mut().zip(&q) {
        *qo += lambda * qj;
    }
    for (bo, bj) in obj.linear.iter_mut().zip(&b) {
        *bo += lambda * bj;
    }
    let cond = {
        let n = obj.phi_weight.len();
        let hi = (0..n)
            .map(|k| {
                obj.coupling[k]
                    + if k + 1 < n { obj.coupling[k + 1] } else { 0.0 }
                    + obj.phi_weight[k]
                    + obj.quad_weight[k]
            })
            .fold(0.0, f64::max);
        let lo = (0..n)
            .map(|k| obj.phi_weight[k] + obj.quad_weight[k])
            .fold(f64::INFINITY, f64::min);
        hi / lo
    };
    let m = obj.minimize(sol.y.clone(), wed.options()).map_err(|e| match e {
        WedError::Solver { message, best } => WedError::Solver {
            message: format!("{message}; penalized system condition estimate {cond:.3e} at lambda = {lambda:e}"),
            best,
        },
        other => other,
    })?;
    let jv = j.eval(&m.y, u)?;
    let w = wed.value_rendered(&m.y, &uh)?;
    Ok((m.y, jv, w - sol.value))
}

/// Problem P_ελ: minimize `J(y,u) + (W_ε(y,u) − M_ε^u)/λ` over pairs.
pub fn solve_p_eps_lambda(
    j: &TargetFunctional,
    wed: &WedProblem,
    family: &Arc<ControlFamily>,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<OptimalPair> {
    let start = Instant::now();
    opts.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(WedError::Parameter("lambda must be positive".into()));
    }
    check_family(family, wed.dim())?;
    j.validate(wed.grid(), wed.dim())?;
    let objective = |p: &[f64]| {
        let u = ControlPoint::new(Arc::clone(family), p.to_vec())?;
        let (_, jv, gap) = penalized_inner(j, wed, &u, lambda)?;
        Ok(jv + gap / lambda)
    };
    let res = minimize_box(&family.lower(), &family.upper(), opts, objective)?;
    let u = ControlPoint::new(Arc::clone(family), res.params.clone())?;
    let (y, jv, gap) = penalized_inner(j, wed, &u, lambda)?;
    Ok(finish(start, &res, opts, y, u, jv, gap, Some(lambda)))
}
