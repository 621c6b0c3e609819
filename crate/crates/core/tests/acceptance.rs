//! Acceptance criteria. Runs without the test harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wedflow::config::parse_config;
use wedflow::norms::{norm_c0, norm_h1, norm_hsigma, norm_l2};
use wedflow::optctl::{solve_p, solve_p_eps, TargetFunctional};
use wedflow::oracle::{
    certificate_table, exact_j, exact_j_eps, exact_m_eps, exact_optimum, lemma1_continuum,
    ExactWedMinimizer, ExampleConfig,
};
use wedflow::sweep::{
    cauchy_fit, strictly_decreasing, sweep_fixed_control, sweep_joint, sweep_lambda, trend_ok,
    SweepPlan,
};
use wedflow::{
    ControlFamily, ControlPoint, Energy, SolverOptions, TimeGrid, Trajectory, WedProblem,
};

// Tolerances.
const C1_U_TOL: f64 = 1e-3;
const C1_VALUE_TOL: f64 = 1e-4;
const C1_SECONDS: f64 = 10.0;
const C2_MIN_ORDER: f64 = 1.5;
const C3_CONTINUUM_TOL: f64 = 1e-8;
const C3_MIN_ORDER: f64 = 1.0;
const C4_SLACK: f64 = 1e-10;
const C4_SAMPLES: usize = 100;
const C5_FINAL_C0: f64 = 0.05;
const C7_FINAL_U_TOL: f64 = 2e-2;
const C8_POINTS: usize = 1001;
const C9_SAMPLES: usize = 200;

const SEC21: &str = include_str!("../examples/sec21.cfg");

struct Outcome {
    pass: bool,
    detail: String,
}

fn quadratic() -> Energy {
    Energy::isotropic(1, 1.0).unwrap()
}

fn example_wed(n: usize, eps: f64) -> WedProblem {
    WedProblem::new(quadratic(), vec![1.0], TimeGrid::new(1.0, n).unwrap(), eps).unwrap()
}

fn plan(epsilons: Vec<f64>, lambdas: Vec<f64>) -> SweepPlan {
    let cfg = parse_config(SEC21).unwrap();
    let mut p = cfg.sweep_plan().unwrap();
    p.epsilons = epsilons;
    p.lambdas = lambdas;
    p
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn order(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn c1() -> Outcome {
    let cfg = parse_config(SEC21).unwrap();
    let opts = cfg.solver.clone().sequential();
    let start = Instant::now();
    let pair = solve_p(&cfg.target, &cfg.flow().unwrap(), &cfg.family(), &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let u = pair.u.params()[0];
    let dv = (pair.value - exact_optimum()).abs();
    Outcome {
        pass: (u - 0.5).abs() <= C1_U_TOL && dv <= C1_VALUE_TOL && secs < C1_SECONDS,
        detail: format!("u0* = {u:.7}, |value - optimum| = {dv:.2e}, {secs:.2} s single-threaded"),
    }
}

fn c2() -> Outcome {
    let cfg = ExampleConfig::new(0.7, 0.25).unwrap();
    let exact = ExactWedMinimizer::new(cfg).unwrap();
    let u = ControlPoint::example(0.7).unwrap();
    let errs: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&n| {
            let p = example_wed(n, 0.25);
            let (y, _) = p.wed_minimize(&u).unwrap();
            (0..=n)
                .map(|k| (y.node(k)[0] - exact.value(p.grid().time(k))).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let ord = order(&errs);
    Outcome {
        pass: ord.iter().all(|o| *o >= C2_MIN_ORDER),
        detail: format!("L-inf errors {}, orders {ord:.3?}", sci(&errs)),
    }
}

fn c3() -> Outcome {
    let mut cont: f64 = 0.0;
    for eps in [0.25, 0.1, 0.05] {
        for u0 in [0.0, 0.7, 1.0] {
            let cfg = ExampleConfig::new(u0, eps).unwrap();
            cont = cont.max((lemma1_continuum(&cfg).unwrap() - exact_m_eps(&cfg).unwrap()).abs());
        }
    }
    let u = ControlPoint::example(0.7).unwrap();
    let gaps: Vec<f64> = [200, 400, 800]
        .iter()
        .map(|&n| {
            let p = example_wed(n, 0.25);
            (p.lemma1_value(&u).unwrap() - p.m_eps(&u).unwrap()).abs()
        })
        .collect();
    let ord = order(&gaps);
    Outcome {
        pass: cont <= C3_CONTINUUM_TOL && ord.iter().all(|o| *o >= C3_MIN_ORDER),
        detail: format!(
            "continuum max gap {cont:.2e}; discrete gaps {}, orders {ord:.3?}",
            sci(&gaps)
        ),
    }
}

fn random_bump(rng: &mut ChaCha8Rng, grid: TimeGrid) -> Trajectory {
    let scale = 10f64.powf(rng.random_range(-4.0..0.5));
    let coef: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let kink = rng.random_range(0.05..0.95);
    let kink_amp = rng.random_range(-1.0..1.0);
    Trajectory::from_fn(grid, 1, |t| {
        let smooth: f64 = coef
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k as f64 + 0.5) * std::f64::consts::PI * t).sin())
            .sum();
        vec![scale * (smooth + kink_amp * (t.min(kink) / kink))]
    })
    .unwrap()
}

fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    let mut at_min = Vec::new();
    for eps in [0.3, 0.15] {
        let p = example_wed(400, eps);
        let u = ControlPoint::example(rng.random_range(0.0..1.0)).unwrap();
        let ye = p.minimizer(&u).unwrap().y.clone();
        at_min.push(p.coercivity_gap(&ye, &u).unwrap());
        for _ in 0..C4_SAMPLES {
            let y = ye.add(&random_bump(&mut rng, *p.grid())).unwrap();
            let (lhs, rhs) = p.coercivity_gap(&y, &u).unwrap();
            let margin = lhs - (rhs + C4_SLACK * (1.0 + rhs.abs()));
            worst = worst.max(lhs / rhs);
            if margin > 0.0 || rhs <= 0.0 {
                failures += 1;
            }
        }
    }
    let zero = at_min.iter().all(|(l, r)| *l == 0.0 && *r == 0.0);
    Outcome {
        pass: failures == 0 && zero,
        detail: format!(
            "{failures} violations in {} samples, max lhs/rhs = {worst:.3e}; at minimizer {at_min:?}",
            2 * C4_SAMPLES
        ),
    }
}

fn c5() -> Outcome {
    let p = plan(vec![0.4, 0.2, 0.1, 0.05], vec![1e-1]);
    let out = sweep_fixed_control(&p, &ControlPoint::example(0.5).unwrap()).unwrap();
    let d = out.table.column("dist_c0").unwrap();
    let eps = out.table.column("epsilon").unwrap();
    let cauchy = out.table.column("cauchy_c0").unwrap();
    let fit = cauchy_fit(&eps, &cauchy[1..]).unwrap();
    let last = *d.last().unwrap();
    Outcome {
        pass: out.table.ok_rows() == 4
            && trend_ok(&d)
            && fit.bounded
            && fit.stable
            && last <= C5_FINAL_C0,
        detail: format!(
            "C0 distances {d:.4?}; Cauchy C = {:.4}, ratios {:.4?}",
            fit.c, fit.ratios
        ),
    }
}

fn c6() -> Outcome {
    let p = plan(vec![0.2], vec![1e-1, 1e-2, 1e-3, 1e-4]);
    let out = sweep_lambda(&p, 0.2).unwrap();
    let d = out.table.column("dist_h1").unwrap();
    let pen = out.table.column("penalty_residual").unwrap();
    let bound = out.table.column("lambda_times_value").unwrap();
    let rowwise = pen.iter().zip(&bound).all(|(p, b)| p <= b);
    Outcome {
        pass: out.table.ok_rows() == 4 && strictly_decreasing(&d) && rowwise,
        detail: format!(
            "H1 distances {}; W - M {} vs lambda*value {}",
            sci(&d),
            sci(&pen),
            sci(&bound)
        ),
    }
}

fn c7() -> Outcome {
    let p = plan(vec![0.5, 0.3, 0.2], vec![1e-1]);
    let out = sweep_joint(&p).unwrap();
    let u = out.table.column("u_star").unwrap();
    let dist: Vec<f64> = u.iter().map(|v| (v - 0.5).abs()).collect();
    let d2 = out.table.column("dist_h1_wed_sq").unwrap();
    let bound = out.table.column("coercivity_bound").unwrap();
    let rowwise = d2.iter().zip(&bound).all(|(d, b)| d <= b);
    let last = *dist.last().unwrap();
    Outcome {
        pass: out.table.ok_rows() == 3 && trend_ok(&dist) && last <= C7_FINAL_U_TOL && rowwise,
        detail: format!("u* {u:.5?}, final |u* - 0.5| = {last:.4} (limit {C7_FINAL_U_TOL}); coercivity rows {rowwise}"),
    }
}

fn c8() -> Outcome {
    let gaps: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&eps| {
            (0..C8_POINTS)
                .map(|i| {
                    let u0 = i as f64 / (C8_POINTS - 1) as f64;
                    (exact_j_eps(&ExampleConfig::new(u0, eps).unwrap()).unwrap() - exact_j(u0))
                        .abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Outcome {
        pass: strictly_decreasing(&gaps),
        detail: format!("max lattice gaps {}", sci(&gaps)),
    }
}

fn c9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failed: Vec<&str> = Vec::new();

    // Prox identities.
    let q = Energy::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
    let mut ok = true;
    for _ in 0..C9_SAMPLES {
        let z = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let g = rng.random_range(0.01..2.0);
        let w = q.prox(&z, g).unwrap();
        let gw = q.grad(&w).unwrap();
        ok &= (0..2).all(|i| (w[i] + g * gw[i] - z[i]).abs() <= 1e-10);
        let zd = [rng.random_range(-3.0..3.0)];
        let gd = rng.random_range(0.01..0.9);
        let wd = Energy::DoubleWell.prox(&zd, gd).unwrap();
        ok &= (wd[0] + gd * (wd[0].powi(3) - wd[0]) - zd[0]).abs() <= 1e-10;
    }
    if !ok {
        failed.push("prox identities");
    }

    // κ-convexity sampling.
    let energies = [
        q.clone(),
        Energy::DoubleWell,
        Energy::obstacle(-1.0, 1.0).unwrap(),
    ];
    let mut ok = true;
    for e in &energies {
        let d = e.fixed_dim().unwrap_or(2);
        for _ in 0..C9_SAMPLES {
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: f64 = rng.random_range(0.0..1.0);
            let m: Vec<f64> = w
                .iter()
                .zip(&v)
                .map(|(a, b)| r * a + (1.0 - r) * b)
                .collect();
            let dist2: f64 = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            let lhs = e.value(&m).unwrap();
            let rhs = r * e.value(&w).unwrap() + (1.0 - r) * e.value(&v).unwrap()
                - 0.5 * e.kappa() * r * (1.0 - r) * dist2;
            ok &= lhs <= rhs + 1e-12;
        }
    }
    if !ok {
        failed.push("kappa-convexity");
    }

    // Norm axioms.
    let grid = TimeGrid::new(1.0, 60).unwrap();
    let mut ok = true;
    for _ in 0..20 {
        let a: Vec<f64> = (0..61).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..61).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ya = Trajectory::new(grid, 1, a).unwrap();
        let yb = Trajectory::new(grid, 1, b).unwrap();
        let alpha = rng.random_range(-5.0..5.0);
        let norms: [&dyn Fn(&Trajectory) -> f64; 4] = [
            &|y| norm_l2(y).unwrap(),
            &|y| norm_h1(y).unwrap(),
            &|y| norm_c0(y).unwrap(),
            &|y| norm_hsigma(y, 0.5).unwrap(),
        ];
        for n in norms {
            let (na, nb) = (n(&ya), n(&yb));
            ok &=
                (n(&ya.scaled(alpha)) - alpha.abs() * na).abs() <= 1e-12 * (1.0 + alpha.abs() * na);
            ok &= n(&ya.add(&yb).unwrap()) <= (na + nb) * (1.0 + 1e-12);
        }
    }
    if !ok {
        failed.push("norm axioms");
    }

    // WED midpoint convexity.
    let mut ok = true;
    for (energy, y0) in [(quadratic(), 1.0), (Energy::DoubleWell, 0.5)] {
        let p = WedProblem::new(energy, vec![y0], TimeGrid::new(1.0, 50).unwrap(), 0.2).unwrap();
        let u = ControlPoint::example(rng.random_range(0.0..1.0)).unwrap();
        for _ in 0..50 {
            let mut a: Vec<f64> = (0..51).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut b: Vec<f64> = (0..51).map(|_| rng.random_range(-2.0..2.0)).collect();
            a[0] = y0;
            b[0] = y0;
            let ya = Trajectory::new(*p.grid(), 1, a).unwrap();
            let yb = Trajectory::new(*p.grid(), 1, b).unwrap();
            let mid = ya.add(&yb).unwrap().scaled(0.5);
            let (wa, wb, wm) = (
                p.wed_value(&ya, &u).unwrap(),
                p.wed_value(&yb, &u).unwrap(),
                p.wed_value(&mid, &u).unwrap(),
            );
            ok &= wm <= 0.5 * (wa + wb) + 1e-12 * (1.0 + wa.abs() + wb.abs());
        }
    }
    if !ok {
        failed.push("WED midpoint convexity");
    }

    // Determinism across runs and across the parallel and sequential paths.
    let cfg = parse_config(SEC21).unwrap();
    let fam = Arc::new(ControlFamily::ExampleExp);
    let target = TargetFunctional::example();
    let small = WedProblem::new(
        quadratic(),
        vec![1.0],
        TimeGrid::new(1.0, 400).unwrap(),
        0.2,
    )
    .unwrap();
    let runs: Vec<_> = [
        cfg.solver.clone(),
        cfg.solver.clone(),
        SolverOptions::default().sequential(),
    ]
    .iter()
    .map(|o| solve_p_eps(&target, &small, &fam, o).unwrap())
    .collect();
    let same = runs.windows(2).all(|w| {
        w[0].u.params() == w[1].u.params()
            && w[0].value.to_bits() == w[1].value.to_bits()
            && w[0].y == w[1].y
    });
    if !same {
        failed.push("determinism");
    }

    // Oracle certification.
    if certificate_table().iter().any(|r| r.pass == Some(false)) {
        failed.push("oracle certification");
    }

    Outcome {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            "prox, kappa-convexity, norm axioms, WED convexity, determinism, oracle certificates"
                .into()
        } else {
            format!("failed: {failed:?}")
        },
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("example optimum of P", c1),
        ("WED solver convergence order", c2),
        ("M value identity", c3),
        ("coercivity gap", c4),
        ("fixed-control convergence as eps -> 0", c5),
        ("lambda sweep at eps = 0.2", c6),
        ("joint sweep with lambda = eps^4 e^(-T/eps)", c7),
        ("uniform convergence of j_eps", c8),
        ("property suites", c9),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = std::panic::catch_unwind(f).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            ),
        });
        if !out.pass {
            failed += 1;
        }
        println!(
            "acceptance {} {}: {} [{:.2} s] {}",
            i + 1,
            if out.pass { "PASS" } else { "FAIL" },
            name,
            t.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!(
        "acceptance summary: {} passed, {failed} failed, {:.1} s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
