//! Convergence sweeps over ε and λ, recovery-sequence probes, and the trend
//! assertions evaluated on their tables.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{ControlFamily, ControlPoint};
use crate::energy::Energy;
use crate::error::{Result, WedError};
use crate::flow::{solve_gradient_flow, FlowProblem};
use crate::grid::TimeGrid;
use crate::norms::{norm_c0, norm_h1, norm_hsigma_with, velocity_l2};
use crate::optctl::{solve_p_eps, solve_p_eps_lambda, TargetFunctional};
use crate::options::SolverOptions;
use crate::par::map_collect;
use crate::trajectory::{fmt_f64, Trajectory};
use crate::wed::WedProblem;

/// Rows with `λ` below this are skipped.
pub const LAMBDA_FLOOR: f64 = 1e-14;
/// Relative increase tolerated by [`trend_ok`].
pub const WIGGLE: f64 = 0.1;

/// `λ_ε` as a function of `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaSchedule {
    /// `coef · ε^power · e^{−T/ε}`
    PowerExp { coef: f64, power: f64 },
    /// `λ_ε ≡ value`
    Constant { value: f64 },
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::PowerExp {
            coef: 1.0,
            power: 4.0,
        }
    }
}

impl LambdaSchedule {
    pub fn lambda(&self, eps: f64, t_final: f64) -> f64 {
        match *self {
            LambdaSchedule::PowerExp { coef, power } => {
                coef * eps.powf(power) * (-t_final / eps).exp()
            }
            LambdaSchedule::Constant { value } => value,
        }
    }

    /// `λ_ε ε^{−3} e^{T/ε}`, which must tend to zero for the joint limit.
    pub fn condition(&self, eps: f64, t_final: f64) -> f64 {
        match *self {
            LambdaSchedule::PowerExp { coef, power } => coef * eps.powf(power - 3.0),
            LambdaSchedule::Constant { value } => value * eps.powi(-3) * (t_final / eps).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LambdaSchedule::PowerExp { coef, power } => {
                coef > 0.0 && coef.is_finite() && power.is_finite()
            }
            LambdaSchedule::Constant { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(WedError::Config(
                "lambda schedule must be positive and finite".into(),
            ))
        }
    }
}

/// Everything a sweep needs.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub energy: Energy,
    pub y0: Vec<f64>,
    pub grid: TimeGrid,
    pub target: TargetFunctional,
    pub family: Arc<ControlFamily>,
    pub epsilons: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub schedule: LambdaSchedule,
    /// Exponent of the fractional norm recorded in the tables.
    pub sigma: f64,
    pub options: SolverOptions,
    /// Known limit control, if any; drives the `u*` trend assertions.
    pub u_target: Option<Vec<f64>>,
}

fn strictly_decreasing_positive(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(WedError::Config(format!("{name} entries must be positive")));
    }
    if v.windows(2).any(|w| w[1] >= w[0]) {
        return Err(WedError::Config(format!(
            "{name} must be strictly decreasing"
        )));
    }
    Ok(())
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        strictly_decreasing_positive("epsilon_list", &self.epsilons)?;
        strictly_decreasing_positive("lambda_list", &self.lambdas)?;
        self.schedule.validate()?;
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(WedError::Config("sigma must lie in (0, 1)".into()));
        }
        self.options.validate()
    }

    fn wed(&self, eps: f64) -> Result<WedProblem> {
        WedProblem::with_options(
            self.energy.clone(),
            self.y0.clone(),
            self.grid,
            eps,
            self.options.clone(),
        )
    }

    fn flow(&self) -> Result<FlowProblem> {
        FlowProblem::new(self.energy.clone(), self.y0.clone(), self.grid)
    }

    fn u_columns(&self) -> Vec<String> {
        let m = self.family.params_len();
        if m == 1 {
            vec!["u_star".into()]
        } else {
            (0..m).map(|i| format!("u_star_{i}")).collect()
        }
    }

    fn target_distance(&self, params: &[f64]) -> Option<f64> {
        self.u_target.as_ref().map(|t| {
            t.iter()
                .zip(params)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub values: Vec<f64>,
    /// `ok`, `skipped: ...` or `error: ...`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    fn new(name: &str, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    fn push_result(&mut self, r: Result<Vec<f64>>) {
        let width = self.columns.len();
        self.rows.push(match r {
            Ok(values) => SweepRow {
                values,
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                values: vec![f64::NAN; width],
                status: format!("error: {e}"),
            },
        });
    }

    /// Values of `name` on rows with status `ok`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .filter(|r| r.status == "ok")
                .map(|r| r.values[i])
                .collect(),
        )
    }

    pub fn ok_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.status == "ok").count()
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.columns.clone();
        header.push("status".into());
        w.write_record(&header).expect("in-memory csv");
        for r in &self.rows {
            let mut rec: Vec<String> = r.values.iter().map(|v| fmt_f64(*v)).collect();
            rec.push(r.status.clone());
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

/// One pass/fail statement about a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub table: SweepTable,
    pub assertions: Vec<Assertion>,
}

/// Last entry no larger than the first and no step increase above
/// [`WIGGLE`] times the value it increases from.
pub fn trend_ok(values: &[f64]) -> bool {
    if values.iter().any(|v| !v.is_finite()) {
        return false;
    }
    match (values.first(), values.last()) {
        (Some(f), Some(l)) if l <= f => values
            .windows(2)
            .all(|w| w[1] - w[0] <= WIGGLE * w[0].abs()),
        (Some(_), Some(_)) => false,
        _ => true,
    }
}

pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[1] < w[0])
}

/// Fit of consecutive-level distances `d_i ≤ C (ε_i + ε_{i+1})^{1/2}` with
/// `C` taken from the first pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyFit {
    pub c: f64,
    pub ratios: Vec<f64>,
    /// Every ratio at most `(1 + WIGGLE) C`.
    pub bounded: bool,
    /// Largest over smallest ratio at most 2.
    pub stable: bool,
}

pub fn cauchy_fit(eps: &[f64], dists: &[f64]) -> Option<CauchyFit> {
    if dists.is_empty() || dists.len() + 1 != eps.len() {
        return None;
    }
    let ratios: Vec<f64> = dists
        .iter()
        .enumerate()
        .map(|(i, d)| d / (eps[i] + eps[i + 1]).sqrt())
        .collect();
    let c = ratios[0];
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Some(CauchyFit {
        c,
        bounded: ratios.iter().all(|r| *r <= (1.0 + WIGGLE) * c),
        stable: min > 0.0 && max / min <= 2.0,
        ratios,
    })
}

struct Distances {
    c0: f64,
    hsigma: f64,
    vel: f64,
}

fn distances(a: &Trajectory, b: &Trajectory, sigma: f64, parallel: bool) -> Result<Distances> {
    let d = a.sub(b)?;
    Ok(Distances {
        c0: norm_c0(&d)?,
        hsigma: norm_hsigma_with(&d, sigma, parallel)?,
        vel: velocity_l2(&d)?,
    })
}

/// For each ε: solve P_ε and compare `y_ε^{u*}` with `S(u*)`.
pub fn sweep_eps(plan: &SweepPlan) -> Result<SweepOutcome> {
    plan.validate()?;
    let flow = plan.flow()?;
    let mut cols = vec!["epsilon".to_string()];
    cols.extend(plan.u_columns());
    cols.extend(
        [
            "value",
            "dist_c0",
            "dist_hsigma",
            "dist_h1_surrogate",
            "evaluations",
        ]
        .map(String::from),
    );
    let mut table = SweepTable::new("sweep_eps", cols);
    let opts = plan.options.clone();
    let rows = map_collect(
        &plan.epsilons,
        plan.options.parallel,
        |&eps| -> Result<Vec<f64>> {
            let wed = plan.wed(eps)?;
            let r = solve_p_eps(&plan.target, &wed, &plan.family, &opts)?;
            let (s, _) = solve_gradient_flow(&flow, &r.u)?;
            let dist = distances(&r.y, &s, plan.sigma, plan.options.parallel)?;
            let mut v = vec![eps];
            v.extend_from_slice(r.u.params());
            v.extend([
                r.value,
                dist.c0,
                dist.hsigma,
                dist.vel,
                r.evaluations as f64,
            ]);
            Ok(v)
        },
    );
    for r in rows {
        table.push_result(r);
    }
    let mut assertions = Vec::new();
    if let Some(c0) = table.column("dist_c0") {
        assertions.push(Assertion::new(
            "dist_c0 trend",
            trend_ok(&c0),
            format!("{c0:?}"),
        ));
    }
    push_u_trend(plan, &table, &mut assertions);
    Ok(SweepOutcome { table, assertions })
}

fn u_params_of(plan: &SweepPlan, table: &SweepTable) -> Vec<Vec<f64>> {
    let cols: Vec<Vec<f64>> = plan
        .u_columns()
        .iter()
        .filter_map(|c| table.column(c))
        .collect();
    if cols.is_empty() {
        return Vec::new();
    }
    (0..cols[0].len())
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect()
}

fn push_u_trend(plan: &SweepPlan, table: &SweepTable, out: &mut Vec<Assertion>) {
    if plan.u_target.is_none() {
        return;
    }
    let d: Vec<f64> = u_params_of(plan, table)
        .iter()
        .filter_map(|p| plan.target_distance(p))
        .collect();
    out.push(Assertion::new(
        "u_star distance to target trend",
        trend_ok(&d),
        format!("{d:?}"),
    ));
}

/// For each λ at fixed ε: solve P_ελ and measure the distance to the WED
/// minimizer of the returned control.
pub fn sweep_lambda(plan: &SweepPlan, eps: f64) -> Result<SweepOutcome> {
    plan.validate()?;
    let wed = plan.wed(eps)?;
    let mut cols = vec!["lambda".to_string()];
    cols.extend(plan.u_columns());
    cols.extend(
        [
            "value",
            "j_part",
            "penalty_residual",
            "lambda_times_value",
            "dist_h1",
            "evaluations",
        ]
        .map(String::from),
    );
    let mut table = SweepTable::new("sweep_lambda", cols);
    let opts = plan.options.clone();
    let rows = map_collect(
        &plan.lambdas,
        plan.options.parallel,
        |&lam| -> Result<Vec<f64>> {
            if lam < LAMBDA_FLOOR {
                return Err(WedError::Parameter("lambda below floor".into()));
            }
            let r = solve_p_eps_lambda(&plan.target, &wed, &plan.family, lam, &opts)?;
            let ye = wed.minimizer(&r.u)?;
            let dist = norm_h1(&r.y.sub(&ye.y)?)?;
            let mut v = vec![lam];
            v.extend_from_slice(r.u.params());
            v.extend([
                r.value,
                r.j_part,
                r.penalty_residual,
                lam * r.value,
                dist,
                r.evaluations as f64,
            ]);
            Ok(v)
        },
    );
    for r in rows {
        table.push_result(r);
    }
    let mut assertions = Vec::new();
    if let Some(d) = table.column("dist_h1") {
        assertions.push(Assertion::new(
            "dist_h1 strictly decreasing",
            strictly_decreasing(&d),
            format!("{d:?}"),
        ));
    }
    if let (Some(p), Some(b)) = (
        table.column("penalty_residual"),
        table.column("lambda_times_value"),
    ) {
        let ok = p.iter().zip(&b).all(|(p, b)| *p <= *b);
        assertions.push(Assertion::new(
            "penalty residual <= lambda * value",
            ok,
            format!("{p:?} vs {b:?}"),
        ));
        let nonneg = p.iter().all(|p| *p >= -plan.options.tol);
        assertions.push(Assertion::new(
            "penalty residual nonnegative",
            nonneg,
            format!("{p:?}"),
        ));
    }
    Ok(SweepOutcome { table, assertions })
}

/// For each ε: solve P_ελ with `λ = λ_ε` from the schedule.
pub fn sweep_joint(plan: &SweepPlan) -> Result<SweepOutcome> {
    plan.validate()?;
    let flow = plan.flow()?;
    let t_final = plan.grid.t_final();
    let mut cols = vec!["epsilon".to_string(), "lambda".to_string()];
    cols.extend(plan.u_columns());
    cols.extend(
        [
            "value",
            "dist_c0",
            "dist_hsigma",
            "dist_h1_wed_sq",
            "coercivity_bound",
            "schedule_condition",
            "evaluations",
        ]
        .map(String::from),
    );
    let width = cols.len();
    let mut table = SweepTable::new("sweep_joint", cols);
    let opts = plan.options.clone();
    let rows = map_collect(
        &plan.epsilons,
        plan.options.parallel,
        |&eps| -> Option<Result<Vec<f64>>> {
            let lam = plan.schedule.lambda(eps, t_final);
            if !(lam >= LAMBDA_FLOOR) {
                return None;
            }
            Some((|| {
                let wed = plan.wed(eps)?;
                let r = solve_p_eps_lambda(&plan.target, &wed, &plan.family, lam, &opts)?;
                let (s, _) = solve_gradient_flow(&flow, &r.u)?;
                let dist = distances(&r.y, &s, plan.sigma, plan.options.parallel)?;
                let ye = wed.minimizer(&r.u)?;
                let dw = norm_h1(&r.y.sub(&ye.y)?)?;
                let bound = lam * eps.powi(-3) * (t_final / eps).exp() * r.value;
                let mut v = vec![eps, lam];
                v.extend_from_slice(r.u.params());
                v.extend([
                    r.value,
                    dist.c0,
                    dist.hsigma,
                    dw * dw,
                    bound,
                    plan.schedule.condition(eps, t_final),
                    r.evaluations as f64,
                ]);
                Ok(v)
            })())
        },
    );
    for (eps, r) in plan.epsilons.iter().zip(rows) {
        match r {
            Some(r) => table.push_result(r),
            None => {
                let mut values = vec![f64::NAN; width];
                values[0] = *eps;
                values[1] = plan.schedule.lambda(*eps, t_final);
                table.rows.push(SweepRow {
                    values,
                    status: format!("skipped: lambda below floor {LAMBDA_FLOOR:e} (underflow)"),
                });
            }
        }
    }
    let mut assertions = Vec::new();
    push_u_trend(plan, &table, &mut assertions);
    if let (Some(d), Some(b)) = (
        table.column("dist_h1_wed_sq"),
        table.column("coercivity_bound"),
    ) {
        let ok = d.iter().zip(&b).all(|(d, b)| *d <= *b);
        assertions.push(Assertion::new(
            "coercivity distance bound per row",
            ok,
            format!("{d:?} vs {b:?}"),
        ));
    }
    let cond: Vec<f64> = plan
        .epsilons
        .iter()
        .map(|e| plan.schedule.condition(*e, t_final))
        .collect();
    assertions.push(Assertion::new(
        "schedule condition lambda eps^-3 e^(T/eps) decreasing",
        strictly_decreasing(&cond),
        format!("{cond:?}"),
    ));
    Ok(SweepOutcome { table, assertions })
}

/// Recovery-sequence probe: `P_ε(y_ε^û, û)` against `P(S(û), û)`.
pub fn gamma_liminf_probe(plan: &SweepPlan, u_hat: &ControlPoint) -> Result<SweepOutcome> {
    plan.validate()?;
    let flow = plan.flow()?;
    let (s, _) = solve_gradient_flow(&flow, u_hat)?;
    let limit = plan.target.eval(&s, u_hat)?;
    let mut table = SweepTable::new(
        "gamma_probe",
        ["epsilon", "p_eps", "p_limit", "gap", "dist_c0"]
            .map(String::from)
            .to_vec(),
    );
    let rows = map_collect(
        &plan.epsilons,
        plan.options.parallel,
        |&eps| -> Result<Vec<f64>> {
            let wed = plan.wed(eps)?;
            let (y, _) = wed.wed_minimize(u_hat)?;
            let p = plan.target.eval(&y, u_hat)?;
            Ok(vec![
                eps,
                p,
                limit,
                (p - limit).abs(),
                norm_c0(&y.sub(&s)?)?,
            ])
        },
    );
    for r in rows {
        table.push_result(r);
    }
    let mut assertions = Vec::new();
    if let Some(g) = table.column("gap") {
        if g.len() > 1 {
            assertions.push(Assertion::new("gap trend", trend_ok(&g), format!("{g:?}")));
        }
    }
    Ok(SweepOutcome { table, assertions })
}

/// Fixed-control ε sweep: distance of `y_ε^u` to `S(u)`, consecutive-level
/// Cauchy distances and the regularity-estimate terms.
pub fn sweep_fixed_control(plan: &SweepPlan, u: &ControlPoint) -> Result<SweepOutcome> {
    plan.validate()?;
    let flow = plan.flow()?;
    let (s, _) = solve_gradient_flow(&flow, u)?;
    let mut table = SweepTable::new(
        "fixed_control",
        [
            "epsilon",
            "dist_c0",
            "dist_hsigma",
            "dist_h1_surrogate",
            "cauchy_c0",
            "cauchy_ratio",
            "regularity_total",
        ]
        .map(String::from)
        .to_vec(),
    );
    let sols = map_collect(
        &plan.epsilons,
        plan.options.parallel,
        |&eps| -> Result<(Trajectory, f64)> {
            let wed = plan.wed(eps)?;
            let reg = wed.regularity_terms(u)?;
            let sol = wed.minimizer(u)?;
            Ok((sol.y.clone(), reg.total()))
        },
    );
    let mut prev: Option<(f64, Trajectory)> = None;
    for (&eps, sol) in plan.epsilons.iter().zip(sols) {
        let row = sol.and_then(|(y, reg)| {
            let dist = distances(&y, &s, plan.sigma, plan.options.parallel)?;
            let (cauchy, ratio) = match &prev {
                Some((pe, py)) => {
                    let c = norm_c0(&y.sub(py)?)?;
                    (c, c / (pe + eps).sqrt())
                }
                None => (f64::NAN, f64::NAN),
            };
            prev = Some((eps, y));
            Ok(vec![
                eps,
                dist.c0,
                dist.hsigma,
                dist.vel,
                cauchy,
                ratio,
                reg,
            ])
        });
        table.push_result(row);
    }
    let mut assertions = Vec::new();
    if let Some(c0) = table.column("dist_c0") {
        assertions.push(Assertion::new(
            "dist_c0 trend",
            trend_ok(&c0),
            format!("{c0:?}"),
        ));
    }
    if let (Some(eps), Some(c)) = (table.column("epsilon"), table.column("cauchy_c0")) {
        if let Some(fit) = cauchy_fit(&eps, &c[1..]) {
            assertions.push(Assertion::new(
                "Cauchy rate C (eps + mu)^(1/2)",
                fit.bounded && fit.stable,
                format!("C = {}, ratios = {:?}", fit.c, fit.ratios),
            ));
        }
    }
    if let Some(r) = table.column("regularity_total") {
        let ok = r.iter().all(|v| *v <= 2.0 * r[0]);
        assertions.push(Assertion::new(
            "regularity terms bounded by 2x first",
            ok,
            format!("{r:?}"),
        ));
    }
    Ok(SweepOutcome { table, assertions })
}

/// `max |J(y_ε^u, u) − J(S(u), u)|` over a uniform parameter lattice of a
/// one-parameter family, using the discrete solvers.
pub fn uniform_gap(plan: &SweepPlan, eps: f64, points: usize) -> Result<f64> {
    if plan.family.params_len() != 1 {
        return Err(WedError::Capability(
            "uniform gap needs a one-parameter family".into(),
        ));
    }
    let wed = plan.wed(eps)?;
    let flow = plan.flow()?;
    let (lo, hi) = (plan.family.lower()[0], plan.family.upper()[0]);
    let params: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let gaps = map_collect(&params, plan.options.parallel, |&p| -> Result<f64> {
        let u = ControlPoint::new(Arc::clone(&plan.family), vec![p])?;
        let (y, _) = wed.wed_minimize(&u)?;
        let (s, _) = solve_gradient_flow(&flow, &u)?;
        Ok((plan.target.eval(&y, &u)? - plan.target.eval(&s, &u)?).abs())
    });
    gaps.into_iter().try_fold(0.0f64, |m, g| Ok(m.max(g?)))
}

/// Short human-readable rendering of assertions.
pub fn render_assertions(a: &[Assertion]) -> String {
    let mut s = String::new();
    for x in a {
        let _ = writeln!(
            s,
            "{} {}: {}",
            if x.pass { "PASS" } else { "FAIL" },
            x.name,
            x.detail
        );
    }
    s
}
