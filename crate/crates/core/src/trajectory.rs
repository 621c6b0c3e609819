use std::io::{Read, Write};

use crate::error::{Result, WedError};
use crate::grid::TimeGrid;

/// Nodal values `y_0, ..., y_N` of a curve in `R^d`, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(WedError::Input("state dimension must be positive".into()));
        }
        if values.len() != grid.nodes() * dim {
            return Err(WedError::Input(format!(
                "expected {} values ({} nodes x dim {}), got {}",
                grid.nodes() * dim,
                grid.nodes(),
                dim,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(WedError::Input(format!(
                "non-finite trajectory entry at node {} component {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; grid.nodes() * dim],
        }
    }

    /// Constant trajectory equal to `state` at every node.
    pub fn constant(grid: TimeGrid, state: &[f64]) -> Self {
        let values = state
            .iter()
            .copied()
            .cycle()
            .take(grid.nodes() * state.len())
            .collect();
        Self {
            grid,
            dim: state.len(),
            values,
        }
    }

    /// Samples `f(t)` (a `d`-vector) at every node.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.nodes() * dim);
        for t in grid.times() {
            let v = f(t);
            if v.len() != dim {
                return Err(WedError::Input(format!(
                    "sampler returned {} components, expected {dim}",
                    v.len()
                )));
            }
            values.extend(v);
        }
        Self::new(grid, dim, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub(crate) fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn initial(&self) -> &[f64] {
        self.node(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.node(self.grid.cells())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(WedError::Input("trajectory has non-finite entries".into()))
        }
    }

    pub(crate) fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        if !self.grid.same_as(&other.grid) || self.dim != other.dim {
            return Err(WedError::Input(format!(
                "trajectory shapes differ: (N={}, T={}, d={}) vs (N={}, T={}, d={})",
                self.grid.cells(),
                self.grid.t_final(),
                self.dim,
                other.grid.cells(),
                other.grid.t_final(),
                other.dim
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> Trajectory {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn add(&self, other: &Trajectory) -> Result<Trajectory> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Trajectory) -> Result<Trajectory> {
        self.axpy(-1.0, other)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a += alpha * b);
        Ok(out)
    }

    /// Largest nodal Euclidean distance.
    pub fn max_distance(&self, other: &Trajectory) -> Result<f64> {
        self.check_compatible(other)?;
        Ok((0..self.grid.nodes())
            .map(|k| dist(self.node(k), other.node(k)))
            .fold(0.0, f64::max))
    }

    /// Writes `t,y_0,...,y_{d-1}` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim).map(|i| format!("y_{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for (k, t) in self.grid.times().enumerate() {
            let mut rec = vec![fmt_f64(t)];
            rec.extend(self.node(k).iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Reads a CSV written by [`Trajectory::write_csv`]; the grid is rebuilt
    /// from the first and last time stamps.
    pub fn read_csv<R: Read>(input: R) -> Result<Trajectory> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("t") || header.len() < 2 {
            return Err(WedError::Input(
                "trajectory csv must start with column `t`".into(),
            ));
        }
        let dim = header.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let mut nums = rec.iter().map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| WedError::Input(format!("bad number `{s}`: {e}")))
            });
            times.push(nums.next().transpose()?.unwrap_or(f64::NAN));
            for v in nums {
                values.push(v?);
            }
        }
        if times.len() < 3 {
            return Err(WedError::Input(
                "trajectory csv needs at least 3 rows".into(),
            ));
        }
        let grid = TimeGrid::new(*times.last().unwrap(), times.len() - 1)?;
        Trajectory::new(grid, dim, values)
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Shortest representation that parses back to the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(e: csv::Error) -> WedError {
    WedError::Input(format!("csv: {e}"))
}
