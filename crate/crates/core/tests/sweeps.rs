use wedflow::config::parse_config;
use wedflow::oracle::exact_j;
use wedflow::sweep::{
    cauchy_fit, gamma_liminf_probe, strictly_decreasing, sweep_eps, sweep_joint, sweep_lambda,
    trend_ok, LambdaSchedule, SweepPlan,
};
use wedflow::ControlPoint;

const SEC21: &str = include_str!("../examples/sec21.cfg");

fn plan(n: usize, epsilons: Vec<f64>, lambdas: Vec<f64>) -> SweepPlan {
    let cfg = parse_config(&SEC21.replace("N = 2000", &format!("N = {n}"))).unwrap();
    let mut p = cfg.sweep_plan().unwrap();
    p.epsilons = epsilons;
    p.lambdas = lambdas;
    p
}

#[test]
fn trend_rule() {
    assert!(trend_ok(&[1.0, 0.5, 0.52, 0.3]));
    assert!(!trend_ok(&[1.0, 0.5, 0.6, 0.3]));
    assert!(!trend_ok(&[1.0, 0.9, 1.1]));
    assert!(trend_ok(&[0.2]));
    assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
    assert!(!strictly_decreasing(&[3.0, 3.0]));
}

#[test]
fn cauchy_fit_flags_growth() {
    let eps = [0.4, 0.2, 0.1];
    let good = cauchy_fit(&eps, &[0.6f64.sqrt(), 0.9 * 0.3f64.sqrt()]).unwrap();
    assert!(good.bounded && good.stable);
    let bad = cauchy_fit(&eps, &[0.6f64.sqrt(), 1.5 * 0.3f64.sqrt()]).unwrap();
    assert!(!bad.bounded);
    assert!(cauchy_fit(&eps, &[1.0]).is_none());
}

#[test]
fn single_entry_sweep_makes_no_limit_claim() {
    let p = plan(200, vec![0.2], vec![1e-2]);
    let out = sweep_eps(&p).unwrap();
    assert_eq!(out.table.rows.len(), 1);
    assert_eq!(out.table.ok_rows(), 1);
    let probe = gamma_liminf_probe(&p, &ControlPoint::example(0.5).unwrap()).unwrap();
    assert_eq!(probe.table.column("gap").unwrap().len(), 1);
    assert!(probe.assertions.is_empty());
}

#[test]
fn sweep_eps_u_star_approaches_limit() {
    let p = plan(2000, vec![0.4, 0.2, 0.1, 0.05], vec![1e-2]);
    let out = sweep_eps(&p).unwrap();
    let u = out.table.column("u_star").unwrap();
    let dist: Vec<f64> = u.iter().map(|v| (v - 0.5).abs()).collect();
    assert!(trend_ok(&dist), "{u:?}");
    let d = out.table.column("dist_c0").unwrap();
    assert!(trend_ok(&d), "{d:?}");
}

#[test]
fn gamma_probe_gap_closes() {
    let p = plan(2000, vec![0.4, 0.2, 0.1, 0.05], vec![1e-2]);
    let out = gamma_liminf_probe(&p, &ControlPoint::example(0.5).unwrap()).unwrap();
    let gap = out.table.column("gap").unwrap();
    let limit = out.table.column("p_limit").unwrap()[0];
    // Implicit Euler is first order: h = 5e-4.
    assert!(
        (limit - exact_j(0.5)).abs() < 1e-5,
        "{limit} vs {} gaps {gap:?}",
        exact_j(0.5)
    );
    assert!(trend_ok(&gap), "{gap:?}");
    assert!(*gap.last().unwrap() <= 1e-3, "{gap:?}");
}

#[test]
fn constant_schedule_matches_lambda_sweep() {
    let mut p = plan(400, vec![0.2], vec![1e-2]);
    p.schedule = LambdaSchedule::Constant { value: 1e-2 };
    let joint = sweep_joint(&p).unwrap();
    let lam = sweep_lambda(&p, 0.2).unwrap();
    assert_eq!(joint.table.column("u_star"), lam.table.column("u_star"));
    assert_eq!(joint.table.column("value"), lam.table.column("value"));
}

#[test]
fn underflowing_schedule_rows_are_skipped() {
    let p = plan(200, vec![0.5, 0.02], vec![1e-2]);
    let out = sweep_joint(&p).unwrap();
    assert_eq!(out.table.rows.len(), 2);
    assert_eq!(out.table.ok_rows(), 1);
    assert!(out.table.rows[1].status.starts_with("skipped"));
}

#[test]
fn sweeps_are_reproducible() {
    let p = plan(300, vec![0.4, 0.2], vec![1e-1, 1e-2]);
    let a = sweep_lambda(&p, 0.2).unwrap().table.to_csv_string();
    let mut seq = p.clone();
    seq.options = seq.options.sequential();
    let b = sweep_lambda(&seq, 0.2).unwrap().table.to_csv_string();
    assert_eq!(a, b);
    let c = sweep_eps(&p).unwrap().table.to_csv_string();
    let d = sweep_eps(&p).unwrap().table.to_csv_string();
    assert_eq!(c, d);
}

#[test]
fn invalid_plans_are_rejected() {
    let mut p = plan(200, vec![0.2, 0.4], vec![1e-2]);
    assert!(sweep_eps(&p).is_err());
    p.epsilons = vec![0.2];
    p.sigma = 1.5;
    assert!(sweep_eps(&p).is_err());
}
