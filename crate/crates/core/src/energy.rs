//! κ-convex energies φ: value, proximal map, modulus, and derivatives when
//! they exist.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WedError};

/// Lower bound on `1 + γκ` accepted by [`Energy::prox`].
pub const PROX_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    ProxOnly,
}

/// Structured-text descriptor of an energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergySpec {
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
    },
    DoubleWell,
    Obstacle {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Quadratic {
    q: DMatrix<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum Energy {
    /// `½ yᵀQy`, `Q` symmetric positive definite.
    Quadratic(Quadratic),
    /// `Σᵢ ¼(yᵢ² − 1)²`.
    DoubleWell,
    /// `½‖y‖²` plus the indicator of `[a, b]^d`.
    Obstacle { a: f64, b: f64 },
}

impl Energy {
    pub fn quadratic(q: DMatrix<f64>) -> Result<Self> {
        let (r, c) = q.shape();
        if r != c || r == 0 {
            return Err(WedError::Parameter(format!(
                "Q must be square and nonempty, got {r}x{c}"
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(WedError::Parameter("Q has non-finite entries".into()));
        }
        let asym = (&q - q.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + q.abs().max()) {
            return Err(WedError::Parameter("Q must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(q.clone());
        if eig.eigenvalues.min() <= 0.0 {
            return Err(WedError::Parameter(format!(
                "Q must be positive definite (smallest eigenvalue {})",
                eig.eigenvalues.min()
            )));
        }
        Ok(Energy::Quadratic(Quadratic {
            q,
            eigvecs: eig.eigenvectors,
            eigvals: eig.eigenvalues,
        }))
    }

    /// `φ(y) = ½ c ‖y‖²` in dimension `d`.
    pub fn isotropic(d: usize, c: f64) -> Result<Self> {
        Self::quadratic(DMatrix::identity(d, d) * c)
    }

    pub fn obstacle(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(WedError::Parameter(format!(
                "obstacle box [{a}, {b}] is empty or unbounded"
            )));
        }
        Ok(Energy::Obstacle { a, b })
    }

    pub fn from_spec(spec: &EnergySpec) -> Result<Self> {
        match spec {
            EnergySpec::Quadratic { q } => {
                let n = q.len();
                if q.iter().any(|row| row.len() != n) {
                    return Err(WedError::Parameter(
                        "Q rows must all have length equal to the row count".into(),
                    ));
                }
                Self::quadratic(DMatrix::from_fn(n, n, |i, j| q[i][j]))
            }
            EnergySpec::DoubleWell => Ok(Energy::DoubleWell),
            EnergySpec::Obstacle { a, b } => Self::obstacle(*a, *b),
        }
    }

    pub fn spec(&self) -> EnergySpec {
        match self {
            Energy::Quadratic(qd) => EnergySpec::Quadratic {
                q: (0..qd.q.nrows())
                    .map(|i| qd.q.row(i).iter().copied().collect())
                    .collect(),
            },
            Energy::DoubleWell => EnergySpec::DoubleWell,
            Energy::Obstacle { a, b } => EnergySpec::Obstacle { a: *a, b: *b },
        }
    }

    pub fn kappa(&self) -> f64 {
        match self {
            Energy::Quadratic(qd) => qd.eigvals.min(),
            Energy::DoubleWell => -1.0,
            Energy::Obstacle { .. } => 1.0,
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        match self {
            Energy::Obstacle { .. } => Smoothness::ProxOnly,
            _ => Smoothness::Smooth,
        }
    }

    /// Required state dimension, if the instance fixes one.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            Energy::Quadratic(qd) => Some(qd.q.nrows()),
            _ => None,
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(n) if n != d => Err(WedError::Input(format!(
                "energy acts on R^{n}, state has dimension {d}"
            ))),
            _ if d == 0 => Err(WedError::Input("state dimension must be positive".into())),
            _ => Ok(()),
        }
    }

    fn check_input(&self, v: &[f64]) -> Result<()> {
        self.check_dim(v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(WedError::Input("non-finite state".into()));
        }
        Ok(())
    }

    pub fn in_domain(&self, v: &[f64]) -> bool {
        match self {
            Energy::Obstacle { a, b } => v.iter().all(|x| *a <= *x && *x <= *b),
            _ => true,
        }
    }

    /// `φ(v)`, `+∞` outside the effective domain.
    pub fn value(&self, v: &[f64]) -> Result<f64> {
        self.check_input(v)?;
        Ok(self.value_unchecked(v))
    }

    pub(crate) fn value_unchecked(&self, v: &[f64]) -> f64 {
        match self {
            Energy::Quadratic(qd) => {
                let x = DVector::from_column_slice(v);
                0.5 * x.dot(&(&qd.q * &x))
            }
            Energy::DoubleWell => v
                .iter()
                .map(|x| {
                    let s = x * x - 1.0;
                    0.25 * s * s
                })
                .sum(),
            Energy::Obstacle { .. } => {
                if self.in_domain(v) {
                    0.5 * v.iter().map(|x| x * x).sum::<f64>()
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `argmin_w ½‖w − z‖² + γφ(w)`.
    pub fn prox(&self, z: &[f64], gamma: f64) -> Result<Vec<f64>> {
        self.check_input(z)?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(WedError::Parameter(format!(
                "prox step must be positive, got {gamma}"
            )));
        }
        if 1.0 + gamma * self.kappa() <= PROX_GUARD {
            return Err(WedError::Parameter(format!(
                "prox step {gamma} violates 1 + γκ > {PROX_GUARD} (κ = {})",
                self.kappa()
            )));
        }
        match self {
            Energy::Quadratic(qd) => {
                let zt = qd.eigvecs.transpose() * DVector::from_column_slice(z);
                let scaled = DVector::from_iterator(
                    zt.len(),
                    zt.iter()
                        .zip(qd.eigvals.iter())
                        .map(|(c, l)| c / (1.0 + gamma * l)),
                );
                Ok((&qd.eigvecs * scaled).iter().copied().collect())
            }
            Energy::DoubleWell => z
                .iter()
                .map(|&zi| double_well_resolvent(zi, gamma))
                .collect(),
            Energy::Obstacle { a, b } => Ok(z
                .iter()
                .map(|zi| (zi / (1.0 + gamma)).clamp(*a, *b))
                .collect()),
        }
    }

    pub fn grad(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.require_smooth()?;
        self.check_input(v)?;
        let mut g = vec![0.0; v.len()];
        self.grad_into(v, &mut g);
        Ok(g)
    }

    pub fn hess(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        self.require_smooth()?;
        self.check_input(v)?;
        Ok(self.hess_unchecked(v))
    }

    pub(crate) fn grad_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Energy::Quadratic(qd) => {
                let g = &qd.q * DVector::from_column_slice(v);
                out.copy_from_slice(g.as_slice());
            }
            Energy::DoubleWell => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x * x * x - x;
                }
            }
            Energy::Obstacle { .. } => {
                out.copy_from_slice(v);
            }
        }
    }

    pub(crate) fn hess_unchecked(&self, v: &[f64]) -> DMatrix<f64> {
        match self {
            Energy::Quadratic(qd) => qd.q.clone(),
            Energy::DoubleWell => DMatrix::from_diagonal(&DVector::from_iterator(
                v.len(),
                v.iter().map(|x| 3.0 * x * x - 1.0),
            )),
            Energy::Obstacle { .. } => DMatrix::identity(v.len(), v.len()),
        }
    }

    fn require_smooth(&self) -> Result<()> {
        if self.smoothness() == Smoothness::ProxOnly {
            return Err(WedError::Capability(
                "energy is not differentiable; only value and prox are available".into(),
            ));
        }
        Ok(())
    }

    /// Minimal-norm element of `∂φ(v)`.
    pub fn minimal_section(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_input(v)?;
        match self {
            Energy::Obstacle { a, b } => {
                if !self.in_domain(v) {
                    return Err(WedError::Domain(format!(
                        "{v:?} lies outside the box [{a}, {b}]"
                    )));
                }
                Ok(v.iter().map(|&x| obstacle_min_section(x, *a, *b)).collect())
            }
            _ => self.grad(v),
        }
    }
}

/// Componentwise min-norm selection of `x + N_{[a,b]}(x)`.
fn obstacle_min_section(x: f64, a: f64, b: f64) -> f64 {
    let at_lower = x == a;
    let at_upper = x == b;
    match (at_lower, at_upper) {
        (true, true) => 0.0,
        // normal cone (-∞, 0]
        (true, false) => x.min(0.0),
        // normal cone [0, ∞)
        (false, true) => x.max(0.0),
        (false, false) => x,
    }
}

/// Root of `γw³ + (1 − γ)w − z = 0`, the scalar double-well resolvent.
fn double_well_resolvent(z: f64, gamma: f64) -> Result<f64> {
    let f = |w: f64| gamma * w * w * w + (1.0 - gamma) * w - z;
    let df = |w: f64| 3.0 * gamma * w * w + (1.0 - gamma);
    // f is increasing; f(±R) brackets the root for R = max(1, |z|).
    let r = z.abs().max(1.0);
    let (mut lo, mut hi) = (-r, r);
    let mut w = z / (1.0 - gamma).max(PROX_GUARD);
    if !(lo..=hi).contains(&w) {
        w = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let fw = f(w);
        if fw == 0.0 {
            return Ok(w);
        }
        if fw > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let mut next = w - fw / df(w);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(1.0)
            || hi - lo <= f64::EPSILON * r
        {
            return Ok(next);
        }
        w = next;
    }
    Err(WedError::solver(format!(
        "double-well resolvent did not converge for z = {z}, γ = {gamma}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        while (b - a).abs() > 1e-13 {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn values() {
        let q = Energy::isotropic(2, 1.0).unwrap();
        assert_eq!(q.value(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(Energy::DoubleWell.value(&[1.0]).unwrap(), 0.0);
        let ob = Energy::obstacle(0.0, 1.0).unwrap();
        assert_eq!(ob.value(&[2.0]).unwrap(), f64::INFINITY);
        assert!(q.value(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn quadratic_prox_is_explicit() {
        let q = Energy::isotropic(1, 1.0).unwrap();
        for (z, g) in [(1.0, 0.5), (-3.0, 2.0), (0.2, 1e-3)] {
            let w = q.prox(&[z], g).unwrap()[0];
            assert!((w - z / (1.0 + g)).abs() < 1e-15);
        }
    }

    #[test]
    fn obstacle_prox_matches_grid_search() {
        let ob = Energy::obstacle(0.0, 1.0).unwrap();
        for (z, g) in [(0.5, 0.3), (3.0, 0.5), (-1.0, 2.0), (1.2, 0.1)] {
            let w = ob.prox(&[z], g).unwrap()[0];
            // brute force on a 1e-6 grid of [0, 1]
            let (mut best, mut arg) = (f64::INFINITY, 0.0);
            for i in 0..=1_000_000 {
                let x = i as f64 * 1e-6;
                let v = 0.5 * (x - z) * (x - z) + g * 0.5 * x * x;
                if v < best {
                    best = v;
                    arg = x;
                }
            }
            assert!((w - arg).abs() <= 1e-6, "z {z}: {w} vs {arg}");
            assert!((w - (z / (1.0 + g)).clamp(0.0, 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn double_well_prox_matches_golden_section() {
        let w = Energy::DoubleWell.prox(&[0.9], 0.01).unwrap()[0];
        let oracle = golden_section(
            |x| 0.5 * (x - 0.9) * (x - 0.9) + 0.01 * 0.25 * (x * x - 1.0).powi(2),
            -3.0,
            3.0,
        );
        assert!((w - oracle).abs() < 1e-8, "{w} vs {oracle}");
    }

    #[test]
    fn prox_guard() {
        assert!(matches!(
            Energy::DoubleWell.prox(&[0.3], 1.0),
            Err(WedError::Parameter(_))
        ));
        assert!(Energy::DoubleWell.prox(&[0.3], 0.5).is_ok());
    }

    #[test]
    fn derivatives() {
        let q = Energy::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        assert_eq!(q.grad(&[1.0, 2.0]).unwrap(), vec![3.0, 2.5]);
        assert_eq!(q.hess(&[1.0, 2.0]).unwrap()[(0, 1)], 0.5);
        let dw = Energy::DoubleWell;
        assert_eq!(dw.grad(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(dw.hess(&[0.0]).unwrap()[(0, 0)], -1.0);
        assert_eq!(dw.grad(&[2.0]).unwrap(), vec![6.0]);
        assert_eq!(dw.hess(&[2.0]).unwrap()[(0, 0)], 11.0);
        let h = 1e-6;
        let fd = (dw.value(&[2.0 + h]).unwrap() - dw.value(&[2.0 - h]).unwrap()) / (2.0 * h);
        assert!((fd - 6.0).abs() < 1e-6);
        let fd2 = (dw.grad(&[2.0 + h]).unwrap()[0] - dw.grad(&[2.0 - h]).unwrap()[0]) / (2.0 * h);
        assert!((fd2 - 11.0).abs() < 1e-6);
        let ob = Energy::obstacle(0.0, 1.0).unwrap();
        assert!(matches!(ob.grad(&[0.5]), Err(WedError::Capability(_))));
        assert!(matches!(ob.hess(&[0.5]), Err(WedError::Capability(_))));
    }

    #[test]
    fn minimal_sections() {
        let q = Energy::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).unwrap();
        assert_eq!(q.minimal_section(&[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
        let ob = Energy::obstacle(0.0, 1.0).unwrap();
        assert_eq!(ob.minimal_section(&[0.3]).unwrap(), vec![0.3]);
        assert_eq!(ob.minimal_section(&[1.0]).unwrap(), vec![1.0]);
        assert_eq!(ob.minimal_section(&[0.0]).unwrap(), vec![0.0]);
        let neg = Energy::obstacle(-2.0, -1.0).unwrap();
        // upper face at -1: -1 + [0, ∞) has min-norm element 0
        assert_eq!(neg.minimal_section(&[-1.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            ob.minimal_section(&[1.5]),
            Err(WedError::Domain(_))
        ));
    }

    #[test]
    fn spec_round_trip_and_kappa() {
        let spec: EnergySpec =
            toml::from_str("type = \"quadratic\"\nQ = [[2.0, 0.0], [0.0, 0.5]]").unwrap();
        let e = Energy::from_spec(&spec).unwrap();
        assert!((e.kappa() - 0.5).abs() < 1e-14);
        assert_eq!(e.spec(), spec);
        let dw: EnergySpec = toml::from_str("type = \"double_well\"").unwrap();
        assert_eq!(Energy::from_spec(&dw).unwrap().kappa(), -1.0);
        let ob: EnergySpec = toml::from_str("type = \"obstacle\"\na = 0.0\nb = 1.0").unwrap();
        assert_eq!(Energy::from_spec(&ob).unwrap().kappa(), 1.0);
        assert!(
            toml::from_str::<EnergySpec>("type = \"obstacle\"\na = 0.0\nb = 1.0\nc = 2").is_err()
        );
    }

    fn energies() -> Vec<Energy> {
        vec![
            Energy::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 1.0])).unwrap(),
            Energy::DoubleWell,
            Energy::obstacle(-0.5, 1.5).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn prox_solves_resolvent_equation(z0 in -3.0f64..3.0, z1 in -3.0f64..3.0, g in 0.01f64..0.9) {
            for e in energies().into_iter().filter(|e| e.smoothness() == Smoothness::Smooth) {
                let z = [z0, z1];
                let w = e.prox(&z, g).unwrap();
                let gr = e.grad(&w).unwrap();
                for i in 0..2 {
                    prop_assert!((w[i] + g * gr[i] - z[i]).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn prox_nonexpansive_for_nonnegative_kappa(
            a in prop::array::uniform2(-4.0f64..4.0),
            b in prop::array::uniform2(-4.0f64..4.0),
            g in 0.01f64..5.0,
        ) {
            for e in energies().into_iter().filter(|e| e.kappa() >= 0.0) {
                let pa = e.prox(&a, g).unwrap();
                let pb = e.prox(&b, g).unwrap();
                let d_out = crate::trajectory::dist(&pa, &pb);
                let d_in = crate::trajectory::dist(&a, &b);
                prop_assert!(d_out <= d_in * (1.0 + 1e-14));
            }
        }

        #[test]
        fn kappa_convexity(
            w in prop::array::uniform2(-1.0f64..2.0),
            v in prop::array::uniform2(-1.0f64..2.0),
            r in 0.0f64..1.0,
        ) {
            for e in energies() {
                let m: Vec<f64> = (0..2).map(|i| r * w[i] + (1.0 - r) * v[i]).collect();
                let lhs = e.value(&m).unwrap();
                let d2 = crate::trajectory::dist(&w, &v).powi(2);
                let rhs = r * e.value(&w).unwrap() + (1.0 - r) * e.value(&v).unwrap()
                    - 0.5 * e.kappa() * r * (1.0 - r) * d2;
                if rhs.is_finite() {
                    prop_assert!(lhs <= rhs + 1e-12);
                }
            }
        }

        #[test]
        fn gradient_matches_central_differences(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let step = 1e-5;
            for e in energies().into_iter().filter(|e| e.smoothness() == Smoothness::Smooth) {
                let x = [x0, x1];
                let g = e.grad(&x).unwrap();
                for i in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[i] += step;
                    xm[i] -= step;
                    let fd = (e.value(&xp).unwrap() - e.value(&xm).unwrap()) / (2.0 * step);
                    prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
                }
            }
        }
    }
}
