//! Deterministic derivative-free minimization over a box: lattice scan,
//! projected Nelder–Mead from the best lattice point, compass polish.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Result, WedError};
use crate::options::SolverOptions;
use crate::par::map_collect;

/// Values within this distance of the lattice minimum count as ties.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct OuterResult {
    pub params: Vec<f64>,
    pub value: f64,
    /// Every lattice point with its value (`+∞` where the inner solve failed).
    pub lattice: Vec<(Vec<f64>, f64)>,
    pub evaluations: usize,
    pub failures: usize,
    /// First inner-solver failure message, if any.
    pub first_failure: Option<String>,
    /// Final compass step; at most `xtol` when the search converged.
    pub final_step: f64,
}

struct Evaluator<'a, F> {
    f: &'a F,
    lower: &'a [f64],
    upper: &'a [f64],
    memo: Mutex<HashMap<Vec<u64>, f64>>,
    failures: Mutex<(usize, Option<String>)>,
}

impl<F> Evaluator<'_, F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(self.lower).zip(self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(v) = self.memo.lock().expect("memo lock").get(&key) {
            return *v;
        }
        let v = match (self.f)(x) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => {
                self.fail("objective returned a non-finite value".into());
                f64::INFINITY
            }
            Err(e) => {
                self.fail(e.to_string());
                f64::INFINITY
            }
        };
        self.memo.lock().expect("memo lock").insert(key, v);
        v
    }

    fn fail(&self, msg: String) {
        let mut g = self.failures.lock().expect("failure lock");
        g.0 += 1;
        if g.1.is_none() {
            g.1 = Some(msg);
        }
    }
}

/// Per-axis lattice size honouring the total-point cap.
pub fn lattice_points_per_axis(free_axes: usize, opts: &SolverOptions) -> usize {
    if free_axes == 0 {
        return 1;
    }
    let cap = (opts.max_lattice_points as f64)
        .powf(1.0 / free_axes as f64)
        .floor() as usize;
    opts.lattice.min(cap).max(2)
}

/// Lattice nodes in lexicographic order.
pub fn lattice(lower: &[f64], upper: &[f64], opts: &SolverOptions) -> Vec<Vec<f64>> {
    let free = lower.iter().zip(upper).filter(|(l, u)| u > l).count();
    let l = lattice_points_per_axis(free, opts);
    let axes: Vec<Vec<f64>> = lower
        .iter()
        .zip(upper)
        .map(|(&lo, &hi)| {
            if hi > lo {
                (0..l)
                    .map(|i| {
                        if i + 1 == l {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / (l - 1) as f64
                        }
                    })
                    .collect()
            } else {
                vec![lo]
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Minimizes `f` over the box `[lower, upper]`.
pub fn minimize_box<F>(
    lower: &[f64],
    upper: &[f64],
    opts: &SolverOptions,
    f: F,
) -> Result<OuterResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(WedError::Constraint(
            "empty or malformed parameter box".into(),
        ));
    }
    let ev = Evaluator {
        f: &f,
        lower,
        upper,
        memo: Mutex::new(HashMap::new()),
        failures: Mutex::new((0, None)),
    };

    let nodes = lattice(lower, upper, opts);
    let values = map_collect(&nodes, opts.parallel, |x| ev.eval(x));
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        let first = ev.failures.lock().expect("failure lock").1.clone();
        return Err(WedError::solver(format!(
            "all {} lattice points failed; first failure: {}",
            nodes.len(),
            first.unwrap_or_default()
        )));
    }
    let start = values
        .iter()
        .position(|v| *v <= best + TIE_TOL)
        .expect("finite minimum exists");
    let mut x = nodes[start].clone();
    let mut fx = values[start];
    let lattice_out: Vec<(Vec<f64>, f64)> = nodes.into_iter().zip(values).collect();

    let free: Vec<usize> = (0..lower.len()).filter(|&i| upper[i] > lower[i]).collect();
    let per_axis = lattice_points_per_axis(free.len(), opts);
    let spacing: Vec<f64> = free
        .iter()
        .map(|&i| (upper[i] - lower[i]) / (per_axis - 1) as f64)
        .collect();

    if !free.is_empty() {
        let (nx, nf) = nelder_mead(&ev, &x, fx, &free, &spacing, opts);
        if nf < fx {
            x = nx;
            fx = nf;
        }
    }
    let mut step = spacing.iter().copied().fold(0.0, f64::max) * 0.01;
    if !free.is_empty() {
        while step > opts.xtol {
            let mut improved = false;
            for &i in &free {
                for sign in [-1.0, 1.0] {
                    let mut trial = x.clone();
                    trial[i] += sign * step;
                    ev.project(&mut trial);
                    let ft = ev.eval(&trial);
                    if ft < fx {
                        x = trial;
                        fx = ft;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    } else {
        step = 0.0;
    }

    let evaluations = ev.memo.lock().expect("memo lock").len();
    let (failures, first_failure) = ev.failures.into_inner().expect("failure lock");
    Ok(OuterResult {
        params: x,
        value: fx,
        lattice: lattice_out,
        evaluations,
        failures,
        first_failure,
        final_step: step,
    })
}

fn nelder_mead<F>(
    ev: &Evaluator<'_, F>,
    x0: &[f64],
    f0: f64,
    free: &[usize],
    spacing: &[f64],
    opts: &SolverOptions,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let m = free.len();
    let embed = |z: &[f64]| {
        let mut x = x0.to_vec();
        for (k, &i) in free.iter().enumerate() {
            x[i] = z[k];
        }
        ev.project(&mut x);
        x
    };
    let restrict = |x: &[f64]| free.iter().map(|&i| x[i]).collect::<Vec<f64>>();

    let z0 = restrict(x0);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(z0.clone(), f0)];
    for k in 0..m {
        let i = free[k];
        let mut z = z0.clone();
        z[k] = if z0[k] + spacing[k] <= ev.upper[i] {
            z0[k] + spacing[k]
        } else {
            z0[k] - spacing[k]
        };
        let x = embed(&z);
        let z = restrict(&x);
        let f = ev.eval(&x);
        simplex.push((z, f));
    }

    let eval_z = |z: &[f64]| {
        let x = embed(z);
        let f = ev.eval(&x);
        (restrict(&x), f)
    };

    for _ in 0..opts.nm_max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| cmp_lex(&a.0, &b.0)));
        let diam = simplex[1..]
            .iter()
            .map(|(z, _)| {
                z.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diam <= opts.xtol {
            break;
        }
        let centroid: Vec<f64> = (0..m)
            .map(|k| simplex[..m].iter().map(|(z, _)| z[k]).sum::<f64>() / m as f64)
            .collect();
        let worst = simplex[m].clone();
        let along = |c: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(ce, w)| ce + c * (ce - w))
                .collect()
        };
        let (zr, fr) = eval_z(&along(1.0));
        if fr < simplex[0].1 {
            let (ze, fe) = eval_z(&along(2.0));
            simplex[m] = if fe < fr { (ze, fe) } else { (zr, fr) };
            continue;
        }
        if fr < simplex[m - 1].1 {
            simplex[m] = (zr, fr);
            continue;
        }
        let (zc, fc) = if fr < worst.1 {
            eval_z(&along(0.5))
        } else {
            eval_z(&along(-0.5))
        };
        if fc < worst.1.min(fr) {
            simplex[m] = (zc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let z: Vec<f64> = best
                .iter()
                .zip(&entry.0)
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            *entry = eval_z(&z);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| cmp_lex(&a.0, &b.0)));
    (embed(&simplex[0].0), simplex[0].1)
}

fn cmp_lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}
