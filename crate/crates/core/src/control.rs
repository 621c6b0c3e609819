//! Admissible controls: compact, finite-dimensional boxes of coefficients.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WedError};
use crate::grid::TimeGrid;
use crate::trajectory::Trajectory;

/// Scalar function of time used for control bases, weights and references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `coef * t^exponent`
    Power {
        coef: f64,
        exponent: f64,
    },
    /// `amp * exp(rate * t)`
    Exp {
        amp: f64,
        rate: f64,
    },
    /// `amp * sin(freq * t)`
    Sin {
        amp: f64,
        freq: f64,
    },
    /// `amp * cos(freq * t)`
    Cos {
        amp: f64,
        freq: f64,
    },
}

impl Profile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Power { coef, exponent } => {
                if exponent == 0.0 {
                    coef
                } else {
                    coef * t.powf(exponent)
                }
            }
            Profile::Exp { amp, rate } => amp * (rate * t).exp(),
            Profile::Sin { amp, freq } => amp * (freq * t).sin(),
            Profile::Cos { amp, freq } => amp * (freq * t).cos(),
        }
    }

    pub(crate) fn is_finite(&self) -> bool {
        match *self {
            Profile::Constant { value } => value.is_finite(),
            Profile::Power { coef, exponent } => {
                coef.is_finite() && exponent.is_finite() && exponent >= 0.0
            }
            Profile::Exp { amp, rate } => amp.is_finite() && rate.is_finite(),
            Profile::Sin { amp, freq } | Profile::Cos { amp, freq } => {
                amp.is_finite() && freq.is_finite()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisFunction {
    /// State component the function acts on.
    pub component: usize,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlFamily {
    /// `u(t) = sum_i c_i b_i(t)` with `lower_i <= c_i <= upper_i`.
    BasisBox {
        dim: usize,
        basis: Vec<BasisFunction>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `u(t) = u0 exp(-t)` with `u0` in `[0, 1]`.
    ExampleExp,
}

impl ControlFamily {
    pub fn basis_box(
        dim: usize,
        basis: Vec<BasisFunction>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let fam = ControlFamily::BasisBox {
            dim,
            basis,
            lower,
            upper,
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<()> {
        if let ControlFamily::BasisBox {
            dim,
            basis,
            lower,
            upper,
        } = self
        {
            if *dim == 0 {
                return Err(WedError::Parameter(
                    "control dimension must be positive".into(),
                ));
            }
            if basis.is_empty() {
                return Err(WedError::Parameter("control basis is empty".into()));
            }
            if lower.len() != basis.len() || upper.len() != basis.len() {
                return Err(WedError::Parameter(format!(
                    "box bounds must have one entry per basis function ({}), got lower {} / upper {}",
                    basis.len(),
                    lower.len(),
                    upper.len()
                )));
            }
            for (i, b) in basis.iter().enumerate() {
                if b.component >= *dim {
                    return Err(WedError::Parameter(format!(
                        "basis function {i} targets component {} of a {dim}-dimensional control",
                        b.component
                    )));
                }
                if !b.profile.is_finite() {
                    return Err(WedError::Parameter(format!(
                        "basis function {i} has non-finite data"
                    )));
                }
            }
            for (i, (lo, hi)) in lower.iter().zip(upper).enumerate() {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(WedError::Parameter(format!(
                        "box {i} is empty or unbounded: [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlFamily::BasisBox { dim, .. } => *dim,
            ControlFamily::ExampleExp => 1,
        }
    }

    /// Number of free coefficients.
    pub fn params_len(&self) -> usize {
        match self {
            ControlFamily::BasisBox { basis, .. } => basis.len(),
            ControlFamily::ExampleExp => 1,
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        match self {
            ControlFamily::BasisBox { lower, .. } => lower.clone(),
            ControlFamily::ExampleExp => vec![0.0],
        }
    }

    pub fn upper(&self) -> Vec<f64> {
        match self {
            ControlFamily::BasisBox { upper, .. } => upper.clone(),
            ControlFamily::ExampleExp => vec![1.0],
        }
    }

    pub fn contains(&self, params: &[f64]) -> bool {
        params.len() == self.params_len()
            && params
                .iter()
                .zip(self.lower().iter().zip(self.upper()))
                .all(|(p, (lo, hi))| p.is_finite() && *lo <= *p && *p <= hi)
    }

    /// Clamp into the box.
    pub fn project(&self, params: &mut [f64]) {
        for (p, (lo, hi)) in params
            .iter_mut()
            .zip(self.lower().into_iter().zip(self.upper()))
        {
            *p = p.clamp(lo, hi);
        }
    }

    /// Stable fingerprint of the family description.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        serde_json::to_string(self)
            .expect("control family serializes")
            .hash(&mut h);
        h.finish()
    }

    fn eval_into(&self, params: &[f64], t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self {
            ControlFamily::BasisBox { basis, .. } => {
                for (c, b) in params.iter().zip(basis) {
                    out[b.component] += c * b.profile.eval(t);
                }
            }
            ControlFamily::ExampleExp => out[0] = params[0] * (-t).exp(),
        }
    }
}

/// One admissible control `u(.)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoint {
    family: Arc<ControlFamily>,
    params: Vec<f64>,
}

impl ControlPoint {
    pub fn new(family: Arc<ControlFamily>, params: Vec<f64>) -> Result<Self> {
        if params.len() != family.params_len() {
            return Err(WedError::Constraint(format!(
                "control needs {} parameters, got {}",
                family.params_len(),
                params.len()
            )));
        }
        if !family.contains(&params) {
            return Err(WedError::Constraint(format!(
                "control parameters {params:?} outside box lower {:?} upper {:?}",
                family.lower(),
                family.upper()
            )));
        }
        Ok(Self { family, params })
    }

    pub fn example(u0: f64) -> Result<Self> {
        Self::new(Arc::new(ControlFamily::ExampleExp), vec![u0])
    }

    pub fn family(&self) -> &Arc<ControlFamily> {
        &self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.family.eval_into(&self.params, t, &mut out);
        out
    }

    pub fn to_record(&self) -> ControlRecord {
        ControlRecord {
            family: (*self.family).clone(),
            params: self.params.clone(),
        }
    }
}

/// Serialized form of a control: `{family, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlRecord {
    pub family: ControlFamily,
    pub params: Vec<f64>,
}

impl ControlRecord {
    pub fn into_point(self) -> Result<ControlPoint> {
        self.family.validate()?;
        ControlPoint::new(Arc::new(self.family), self.params)
    }
}

/// Nodal samples of `u` on `grid`.
pub fn render_control(u: &ControlPoint, grid: &TimeGrid) -> Result<Trajectory> {
    if !u.family.contains(&u.params) {
        return Err(WedError::Constraint(
            "control parameters outside box".into(),
        ));
    }
    let d = u.dim();
    let mut values = vec![0.0; grid.nodes() * d];
    for (k, t) in grid.times().enumerate() {
        u.family
            .eval_into(&u.params, t, &mut values[k * d..(k + 1) * d]);
    }
    Trajectory::new(*grid, d, values).map_err(|_| {
        WedError::Constraint("control renders to non-finite values on this grid".into())
    })
}
