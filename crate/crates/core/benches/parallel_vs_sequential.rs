use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use wedflow::config::parse_config;
use wedflow::norms::norm_hsigma_with;
use wedflow::optctl::{solve_p_eps, TargetFunctional};
use wedflow::sweep::sweep_fixed_control;
use wedflow::{
    ControlFamily, ControlPoint, Energy, SolverOptions, TimeGrid, Trajectory, WedProblem,
};

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", true), ("sequential", false)]
}

fn lattice_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_p_eps");
    g.sample_size(10);
    let j = TargetFunctional::example();
    let fam = Arc::new(ControlFamily::ExampleExp);
    for (name, parallel) in modes() {
        let opts = SolverOptions {
            parallel,
            lattice: 41,
            ..SolverOptions::default()
        };
        g.bench_with_input(BenchmarkId::new(name, 2000), &opts, |b, opts| {
            b.iter(|| {
                let wed = WedProblem::new(
                    Energy::isotropic(1, 1.0).unwrap(),
                    vec![1.0],
                    TimeGrid::new(1.0, 2000).unwrap(),
                    0.2,
                )
                .unwrap();
                solve_p_eps(&j, &wed, &fam, opts).unwrap()
            })
        });
    }
    g.finish();
}

fn fractional_norm(c: &mut Criterion) {
    let mut g = c.benchmark_group("norm_hsigma");
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let y = Trajectory::from_fn(grid, 2, |t| vec![(7.0 * t).sin(), t.sqrt()]).unwrap();
    for (name, parallel) in modes() {
        g.bench_with_input(BenchmarkId::new(name, 1000), &y, |b, y| {
            b.iter(|| norm_hsigma_with(y, 0.5, parallel).unwrap())
        });
    }
    g.finish();
}

fn sweep_rows(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep_fixed_control");
    g.sample_size(10);
    let cfg = parse_config(include_str!("../examples/sec21.cfg")).unwrap();
    let u = ControlPoint::example(0.5).unwrap();
    for (name, parallel) in modes() {
        let mut plan = cfg.sweep_plan().unwrap();
        plan.options.parallel = parallel;
        g.bench_function(name, |b| b.iter(|| sweep_fixed_control(&plan, &u).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, lattice_solve, fractional_norm, sweep_rows);
criterion_main!(benches);
