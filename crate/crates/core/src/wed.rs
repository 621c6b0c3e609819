//! Discrete weighted energy-dissipation functional
//!
//! ```text
//! W_ε(y, u) = ∫₀ᵀ e^{−t/ε} ( ε/2 ‖ẏ‖² + φ(y) − (u, y) ) dt
//! ```
//!
//! with exact exponential cell masses for the kinetic term and exponentially
//! weighted piecewise-linear quadrature for the potential and forcing terms.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use crate::control::{render_control, ControlPoint};
use crate::energy::{Energy, Smoothness};
use crate::error::{Result, WedError};
use crate::grid::TimeGrid;
use crate::norms::{norm_h1, velocity_l2};
use crate::options::SolverOptions;
use crate::report::SolveReport;
use crate::trajectory::{dot, Trajectory};
use crate::trajopt::NodalObjective;

/// Smallest admissible `ε / T`; below it `e^{−T/ε}` approaches the
/// subnormal range.
pub const EPS_FLOOR_RATIO: f64 = 1.0 / 700.0;

/// `ε₀ = 1/(4|κ|)` for `κ < 0`, unrestricted otherwise.
pub fn epsilon0(kappa: f64) -> f64 {
    if kappa < 0.0 {
        1.0 / (4.0 * -kappa)
    } else {
        f64::INFINITY
    }
}

/// `f(a) = 1 − (1 + a)e^{−a}`, accurate for small `a`.
fn first_moment(a: f64) -> f64 {
    if a < 0.1 {
        // Σ_{n≥2} (−1)^n aⁿ (n − 1) / n!
        let mut term = 1.0;
        let mut sum = 0.0;
        for n in 1..30 {
            term *= -a / n as f64;
            if n >= 2 {
                sum += term * (n as f64 - 1.0);
            }
        }
        sum
    } else {
        1.0 - (1.0 + a) * (-a).exp()
    }
}

/// Quadrature weights of the discrete functional on a fixed grid.
#[derive(Debug, Clone)]
pub struct WedWeights {
    /// `μ_k = ∫_{t_k}^{t_{k+1}} e^{−t/ε} dt`.
    pub mass: Vec<f64>,
    /// `c_k = μ_k ε / h²`, coefficient of `½‖y_{k+1} − y_k‖²`.
    pub coupling: Vec<f64>,
    /// `ν_j`, weight of `φ(y_j) − (u_j, y_j)` at node `j = 0..=N`.
    pub node: Vec<f64>,
    /// Left and right linear-interpolation weights per cell.
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl WedWeights {
    pub fn new(grid: &TimeGrid, epsilon: f64) -> Self {
        let n = grid.cells();
        let h = grid.step();
        let a = h / epsilon;
        let m0 = -epsilon * (-a).exp_m1();
        let b0 = epsilon * epsilon * first_moment(a) / h;
        let a0 = m0 - b0;
        let mut mass = Vec::with_capacity(n);
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for k in 0..n {
            let e = (-grid.time(k) / epsilon).exp();
            mass.push(e * m0);
            left.push(e * a0);
            right.push(e * b0);
        }
        let coupling = mass.iter().map(|m| m * epsilon / (h * h)).collect();
        let mut node = vec![0.0; n + 1];
        for k in 0..n {
            node[k] += left[k];
            node[k + 1] += right[k];
        }
        Self {
            mass,
            coupling,
            node,
            left,
            right,
        }
    }
}

/// Minimizer of `W_ε(·, u)` with its value and telemetry.
#[derive(Debug, Clone)]
pub struct WedSolution {
    pub y: Trajectory,
    pub value: f64,
    pub report: SolveReport,
}

type CacheKey = (u64, Vec<u64>);

#[derive(Debug, Clone)]
pub struct WedProblem {
    energy: Energy,
    y0: Vec<f64>,
    grid: TimeGrid,
    epsilon: f64,
    options: SolverOptions,
    weights: Arc<WedWeights>,
    cache: Arc<RwLock<HashMap<CacheKey, Arc<WedSolution>>>>,
}

/// Discrete analogs of the terms in the a-priori regularity estimate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RegularityTerms {
    /// `ε ‖ÿ‖_{L²}`
    pub accel: f64,
    /// `ε^{1/2} ‖ẏ‖_{L∞}`
    pub vel_sup: f64,
    /// `‖ẏ‖_{L²}`
    pub vel_l2: f64,
    /// `‖η‖_{L²}`
    pub eta_l2: f64,
}

impl RegularityTerms {
    pub fn total(&self) -> f64 {
        self.accel + self.vel_sup + self.vel_l2 + self.eta_l2
    }
}

impl WedProblem {
    pub fn new(energy: Energy, y0: Vec<f64>, grid: TimeGrid, epsilon: f64) -> Result<Self> {
        Self::with_options(energy, y0, grid, epsilon, SolverOptions::default())
    }

    pub fn with_options(
        energy: Energy,
        y0: Vec<f64>,
        grid: TimeGrid,
        epsilon: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(WedError::Parameter("epsilon must be positive".into()));
        }
        let floor = EPS_FLOOR_RATIO * grid.t_final();
        if epsilon < floor {
            return Err(WedError::Parameter(format!(
                "epsilon = {epsilon} is below the underflow floor T/700 = {floor}"
            )));
        }
        let eps0 = epsilon0(energy.kappa());
        if epsilon >= eps0 {
            return Err(WedError::Parameter(format!(
                "epsilon = {epsilon} violates the convexity guard epsilon < epsilon0 = {eps0}"
            )));
        }
        energy.check_dim(y0.len())?;
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(WedError::Input("initial state must be finite".into()));
        }
        if !energy.in_domain(&y0) {
            return Err(WedError::Domain(
                "initial state lies outside the energy domain".into(),
            ));
        }
        options.validate()?;
        let weights = WedWeights::new(&grid, epsilon);
        let p = Self {
            energy,
            y0,
            grid,
            epsilon,
            options,
            weights: Arc::new(weights),
            cache: Arc::new(RwLock::new(HashMap::new())),
        };
        p.certify_convexity()?;
        Ok(p)
    }

    /// Checks that the kinetic part plus `κ ν_j ‖y_j‖²/2` is positive
    /// definite via the pivots of its scalar tridiagonal factorization.
    /// This is exactly uniform convexity of the discrete functional.
    fn certify_convexity(&self) -> Result<()> {
        let kappa = self.energy.kappa();
        if kappa >= 0.0 {
            return Ok(());
        }
        let w = &self.weights;
        let n = self.grid.cells();
        let mut pivot = 0.0;
        let mut prev_c = 0.0;
        for j in 1..=n {
            let c_right = if j < n { w.coupling[j] } else { 0.0 };
            let diag = w.coupling[j - 1] + c_right + kappa * w.node[j];
            let p = if j == 1 {
                diag
            } else {
                diag - prev_c * prev_c / pivot
            };
            if !(p > 1e-12 * (w.coupling[j - 1] + c_right)) {
                return Err(WedError::Parameter(format!(
                    "discrete functional is not uniformly convex at node {j}; decrease epsilon (epsilon0 = {})",
                    epsilon0(kappa)
                )));
            }
            pivot = p;
            prev_c = c_right;
        }
        Ok(())
    }

    pub fn energy(&self) -> &Energy {
        &self.energy
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn weights(&self) -> &WedWeights {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub(crate) fn render(&self, u: &ControlPoint) -> Result<Trajectory> {
        if u.dim() != self.dim() {
            return Err(WedError::Input(format!(
                "control dimension {} != state dimension {}",
                u.dim(),
                self.dim()
            )));
        }
        render_control(u, &self.grid)
    }

    fn check_trajectory(&self, y: &Trajectory) -> Result<()> {
        if !y.grid().same_as(&self.grid) {
            return Err(WedError::Input(
                "trajectory grid does not match the problem grid".into(),
            ));
        }
        if y.dim() != self.dim() {
            return Err(WedError::Input(format!(
                "trajectory dimension {} != state dimension {}",
                y.dim(),
                self.dim()
            )));
        }
        y.check_finite()
    }

    /// `W_ε(y, u)`; `+∞` when `y(0) ≠ y⁰` or a node leaves the domain.
    pub fn wed_value(&self, y: &Trajectory, u: &ControlPoint) -> Result<f64> {
        let uh = self.render(u)?;
        self.value_rendered(y, &uh)
    }

    pub(crate) fn value_rendered(&self, y: &Trajectory, uh: &Trajectory) -> Result<f64> {
        self.check_trajectory(y)?;
        if y.node(0) != self.y0.as_slice() {
            return Ok(f64::INFINITY);
        }
        let w = &self.weights;
        let h = self.grid.step();
        let mut total = 0.0;
        for k in 0..self.grid.cells() {
            let s: f64 = y
                .node(k)
                .iter()
                .zip(y.node(k + 1))
                .map(|(a, b)| (b - a) * (b - a))
                .sum();
            total += w.mass[k] * 0.5 * self.epsilon * s / (h * h);
        }
        for j in 0..self.grid.nodes() {
            let phi = self.energy.value_unchecked(y.node(j));
            if !phi.is_finite() {
                return Ok(f64::INFINITY);
            }
            total += w.node[j] * (phi - dot(uh.node(j), y.node(j)));
        }
        Ok(total)
    }

    pub(crate) fn objective(&self, uh: &Trajectory) -> NodalObjective<'_> {
        let w = &self.weights;
        let d = self.dim();
        let n = self.grid.cells();
        let mut linear = Vec::with_capacity(n * d);
        for j in 1..=n {
            linear.extend(uh.node(j).iter().map(|v| w.node[j] * v));
        }
        NodalObjective {
            energy: &self.energy,
            coupling: w.coupling.clone(),
            phi_weight: w.node[1..].to_vec(),
            quad_weight: vec![0.0; n],
            linear,
        }
    }

    pub(crate) fn initial_guess(&self) -> Trajectory {
        Trajectory::constant(self.grid, &self.y0)
    }

    /// Minimizes `W_ε(·, u)` from the constant initial guess. Not cached.
    pub fn wed_minimize(&self, u: &ControlPoint) -> Result<(Trajectory, SolveReport)> {
        self.wed_minimize_from(u, self.initial_guess())
    }

    pub fn wed_minimize_from(
        &self,
        u: &ControlPoint,
        init: Trajectory,
    ) -> Result<(Trajectory, SolveReport)> {
        let start = Instant::now();
        self.check_trajectory(&init)?;
        let uh = self.render(u)?;
        let mut init = init;
        init.node_mut(0).copy_from_slice(&self.y0);
        let obj = self.objective(&uh);
        let m = obj.minimize(init, &self.options)?;
        let value = self.value_rendered(&m.y, &uh)?;
        let report = SolveReport::new(
            m.iterations,
            m.residual,
            value,
            m.tolerance,
            start.elapsed().as_secs_f64(),
        );
        Ok((m.y, report))
    }

    fn key(u: &ControlPoint) -> CacheKey {
        (
            u.family().fingerprint(),
            u.params().iter().map(|p| p.to_bits()).collect(),
        )
    }

    /// Cached minimizer `y_ε^u`.
    pub fn minimizer(&self, u: &ControlPoint) -> Result<Arc<WedSolution>> {
        let key = Self::key(u);
        if let Some(hit) = self.cache.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let (y, report) = self.wed_minimize(u)?;
        let sol = Arc::new(WedSolution {
            value: report.functional_value,
            y,
            report,
        });
        self.cache
            .write()
            .expect("cache lock poisoned")
            .insert(key, Arc::clone(&sol));
        Ok(sol)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().expect("cache lock poisoned").len()
    }

    /// `M_ε^u = min W_ε(·, u)`.
    pub fn m_eps(&self, u: &ControlPoint) -> Result<f64> {
        Ok(self.minimizer(u)?.value)
    }

    /// The closed expression for `M_ε^u` in terms of the minimizer:
    ///
    /// ```text
    /// −ε²/2 ‖ẏ(0)‖² − ε e^{−T/ε} φ(y(T)) + ε φ(y⁰) + ε ∫ e^{−t/ε}(u, ẏ) − ∫ e^{−t/ε}(u, y)
    /// ```
    pub fn lemma1_value(&self, u: &ControlPoint) -> Result<f64> {
        let sol = self.minimizer(u)?;
        let uh = self.render(u)?;
        self.lemma1_expression(&sol.y, &uh)
    }

    pub(crate) fn lemma1_expression(&self, y: &Trajectory, uh: &Trajectory) -> Result<f64> {
        let eps = self.epsilon;
        let h = self.grid.step();
        let n = self.grid.cells();
        let d = self.dim();
        let w = &self.weights;
        let v0: Vec<f64> = (0..d)
            .map(|i| {
                if n >= 2 {
                    (-3.0 * y.node(0)[i] + 4.0 * y.node(1)[i] - y.node(2)[i]) / (2.0 * h)
                } else {
                    (y.node(1)[i] - y.node(0)[i]) / h
                }
            })
            .collect();
        let phi_t = self.energy.value(y.terminal())?;
        let phi_0 = self.energy.value(&self.y0)?;
        let mut forcing_vel = 0.0;
        for k in 0..n {
            for i in 0..d {
                let vel = (y.node(k + 1)[i] - y.node(k)[i]) / h;
                forcing_vel += (w.left[k] * uh.node(k)[i] + w.right[k] * uh.node(k + 1)[i]) * vel;
            }
        }
        let forcing: f64 = (0..=n)
            .map(|j| w.node[j] * dot(uh.node(j), y.node(j)))
            .sum();
        Ok(
            -0.5 * eps * eps * dot(&v0, &v0) - eps * (-self.grid.t_final() / eps).exp() * phi_t
                + eps * phi_0
                + eps * forcing_vel
                - forcing,
        )
    }

    /// `(ε³ e^{−T/ε} ‖y − y_ε^u‖²_{H¹}, W_ε(y, u) − M_ε^u)`.
    pub fn coercivity_gap(&self, y: &Trajectory, u: &ControlPoint) -> Result<(f64, f64)> {
        self.check_trajectory(y)?;
        let sol = self.minimizer(u)?;
        let eps = self.epsilon;
        let dist = norm_h1(&y.sub(&sol.y)?)?;
        let lhs = eps.powi(3) * (-self.grid.t_final() / eps).exp() * dist * dist;
        let rhs = self.wed_value(y, u)? - sol.value;
        Ok((lhs, rhs))
    }

    /// Discrete subgradient selection `η_j = u_j − (kinetic force)_j / ν_j`
    /// for `j = 1..=N`, read off the Euler–Lagrange system. At node 0 the
    /// minimal section of `∂φ(y⁰)` is used.
    pub fn subgradient(&self, y: &Trajectory, u: &ControlPoint) -> Result<Trajectory> {
        self.check_trajectory(y)?;
        let uh = self.render(u)?;
        let d = self.dim();
        let n = self.grid.cells();
        let w = &self.weights;
        let mut eta = Trajectory::zeros(self.grid, d);
        let eta0 = self.energy.minimal_section(y.node(0))?;
        eta.node_mut(0).copy_from_slice(&eta0);
        for j in 1..=n {
            for i in 0..d {
                let mut kin = w.coupling[j - 1] * (y.node(j)[i] - y.node(j - 1)[i]);
                if j < n {
                    kin -= w.coupling[j] * (y.node(j + 1)[i] - y.node(j)[i]);
                }
                eta.node_mut(j)[i] = uh.node(j)[i] - kin / w.node[j];
            }
        }
        Ok(eta)
    }

    /// Defect of the discrete Euler–Lagrange equation `−εÿ + ẏ + ∇φ(y) = u`
    /// at nodes `1..=N`, as a backward error: `ν_j ‖∇φ(y_j) − η_j‖` over
    /// `D_j ‖y‖_∞ + ν_j ‖u_j‖` with `D_j` the diagonal of the quadratic part.
    /// Smooth energies only.
    pub fn euler_lagrange_residual(&self, y: &Trajectory, u: &ControlPoint) -> Result<f64> {
        if self.energy.smoothness() != Smoothness::Smooth {
            return Err(WedError::Capability(
                "Euler-Lagrange residual needs a differentiable energy".into(),
            ));
        }
        let uh = self.render(u)?;
        let eta = self.subgradient(y, u)?;
        let w = &self.weights;
        let n = self.grid.cells();
        let ymax = y.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut worst: f64 = 0.0;
        for j in 1..=n {
            let g = self.energy.grad(y.node(j))?;
            let defect = g
                .iter()
                .zip(eta.node(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let diag = w.coupling[j - 1] + if j < n { w.coupling[j] } else { 0.0 } + w.node[j];
            let den = diag * ymax + w.node[j] * dot(uh.node(j), uh.node(j)).sqrt();
            worst = worst.max(w.node[j] * defect / den);
        }
        Ok(worst)
    }

    /// Terms of the regularity estimate evaluated at `y_ε^u`.
    pub fn regularity_terms(&self, u: &ControlPoint) -> Result<RegularityTerms> {
        let sol = self.minimizer(u)?;
        let y = &sol.y;
        let h = self.grid.step();
        let n = self.grid.cells();
        let d = self.dim();
        let mut acc2 = 0.0;
        for k in 1..n {
            for i in 0..d {
                let a = (y.node(k + 1)[i] - 2.0 * y.node(k)[i] + y.node(k - 1)[i]) / (h * h);
                acc2 += h * a * a;
            }
        }
        let mut vmax: f64 = 0.0;
        for k in 0..n {
            let s: f64 = (0..d)
                .map(|i| ((y.node(k + 1)[i] - y.node(k)[i]) / h).powi(2))
                .sum();
            vmax = vmax.max(s.sqrt());
        }
        let eta = self.subgradient(y, u)?;
        let eta2: f64 = (1..=n).map(|j| h * dot(eta.node(j), eta.node(j))).sum();
        Ok(RegularityTerms {
            accel: self.epsilon * acc2.sqrt(),
            vel_sup: self.epsilon.sqrt() * vmax,
            vel_l2: velocity_l2(y)?,
            eta_l2: eta2.sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(n: usize, eps: f64) -> WedProblem {
        WedProblem::new(
            Energy::isotropic(1, 1.0).unwrap(),
            vec![1.0],
            TimeGrid::new(1.0, n).unwrap(),
            eps,
        )
        .unwrap()
    }

    #[test]
    fn weights_integrate_exponentials() {
        let p = example(50, 0.1);
        let w = p.weights();
        let total: f64 = w.mass.iter().sum();
        let exact = 0.1 * (1.0 - (-10.0f64).exp());
        assert!((total - exact).abs() < 1e-14);
        let nodes: f64 = w.node.iter().sum();
        assert!((nodes - exact).abs() < 1e-14);
        // ∫ t e^{−t/ε} is integrated exactly by the linear weights.
        let first: f64 = (0..=50).map(|j| w.node[j] * p.grid().time(j)).sum();
        let e = (-10.0f64).exp();
        let exact1 = 0.01 * (1.0 - e) - 0.1 * e;
        assert!((first - exact1).abs() < 1e-14);
    }

    #[test]
    fn first_moment_series_matches_closed_form() {
        for a in [0.09f64, 0.0999, 0.1] {
            let closed = 1.0 - (1.0 + a) * (-a).exp();
            assert!((first_moment(a) - closed).abs() < 1e-15);
        }
        assert!(first_moment(1e-9) > 0.0);
    }

    #[test]
    fn zero_data_gives_zero_minimizer() {
        let p = WedProblem::new(
            Energy::isotropic(1, 1.0).unwrap(),
            vec![0.0],
            TimeGrid::new(1.0, 40).unwrap(),
            0.2,
        )
        .unwrap();
        let u = ControlPoint::example(0.0).unwrap();
        let (y, _) = p.wed_minimize(&u).unwrap();
        assert!(y.values().iter().all(|v| *v == 0.0));
        assert_eq!(p.m_eps(&u).unwrap(), 0.0);
        assert_eq!(p.lemma1_value(&u).unwrap(), 0.0);
    }

    #[test]
    fn unpinned_trajectory_has_infinite_value() {
        let p = example(20, 0.2);
        let u = ControlPoint::example(0.5).unwrap();
        let y = Trajectory::zeros(*p.grid(), 1);
        assert_eq!(p.wed_value(&y, &u).unwrap(), f64::INFINITY);
    }

    #[test]
    fn guards() {
        let g = TimeGrid::new(1.0, 20).unwrap();
        let dw = Energy::DoubleWell;
        assert!(matches!(
            WedProblem::new(dw.clone(), vec![0.5], g, 0.25),
            Err(WedError::Parameter(_))
        ));
        assert!(WedProblem::new(dw, vec![0.5], g, 0.2).is_ok());
        let q = Energy::isotropic(1, 1.0).unwrap();
        assert!(matches!(
            WedProblem::new(q.clone(), vec![0.5], g, -1.0),
            Err(WedError::Parameter(_))
        ));
        assert!(matches!(
            WedProblem::new(q, vec![0.5], g, 1e-4),
            Err(WedError::Parameter(_))
        ));
    }

    #[test]
    fn cache_hits_return_same_solution() {
        let p = example(40, 0.2);
        let u = ControlPoint::example(0.3).unwrap();
        let a = p.minimizer(&u).unwrap();
        let b = p.clone().minimizer(&u).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(p.cache_len(), 1);
    }

    #[test]
    fn obstacle_minimizer_respects_box() {
        let g = TimeGrid::new(1.0, 60).unwrap();
        let p = WedProblem::new(Energy::obstacle(0.0, 1.0).unwrap(), vec![1.0], g, 0.1).unwrap();
        let u = ControlPoint::example(1.0).unwrap();
        let (y, rep) = p.wed_minimize(&u).unwrap();
        assert!(rep.converged);
        assert!(y.values().iter().all(|v| (0.0..=1.0).contains(v)));
        // Perturbing inward never decreases the value.
        let m = rep.functional_value;
        for j in 1..=60 {
            let mut z = y.clone();
            let v = z.node_mut(j);
            v[0] = (v[0] - 1e-3).max(0.0);
            assert!(p.wed_value(&z, &u).unwrap() >= m - 1e-12);
        }
    }
}
