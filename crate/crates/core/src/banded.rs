//! Symmetric block-tridiagonal systems whose off-diagonal blocks are scalar
//! multiples of the identity, the structure of every trajectory Hessian here.

use nalgebra::{DMatrix, DVector};

pub(crate) struct BlockTridiag {
    pub dim: usize,
    /// Diagonal blocks, one per unknown node.
    pub diag: Vec<DMatrix<f64>>,
    /// `off[j]` multiplies the identity coupling nodes `j` and `j + 1`.
    pub off: Vec<f64>,
}

impl BlockTridiag {
    /// Solves `A x = rhs` by block elimination after symmetric Jacobi
    /// scaling. Returns `None` when a Schur complement is not positive
    /// definite.
    pub fn solve_spd(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.diag.len();
        let d = self.dim;
        debug_assert_eq!(rhs.len(), n * d);
        debug_assert_eq!(self.off.len() + 1, n);
        let scale: Vec<f64> = self
            .diag
            .iter()
            .map(|b| {
                let m = (0..d).map(|i| b[(i, i)]).fold(0.0, f64::max);
                if m > 0.0 && m.is_finite() {
                    1.0 / m.sqrt()
                } else {
                    1.0
                }
            })
            .collect();

        let mut chol = Vec::with_capacity(n);
        let mut fwd: Vec<DVector<f64>> = Vec::with_capacity(n);
        for j in 0..n {
            let mut s = &self.diag[j] * (scale[j] * scale[j]);
            let mut r = DVector::from_column_slice(&rhs[j * d..(j + 1) * d]) * scale[j];
            if j > 0 {
                let c = self.off[j - 1] * scale[j - 1] * scale[j];
                let prev: &nalgebra::Cholesky<f64, nalgebra::Dyn> = &chol[j - 1];
                let inv = prev.inverse();
                s -= &inv * (c * c);
                r -= prev.solve(&fwd[j - 1]) * c;
            }
            let ch = s.cholesky()?;
            chol.push(ch);
            fwd.push(r);
        }
        let mut x: Vec<DVector<f64>> = vec![DVector::zeros(d); n];
        for j in (0..n).rev() {
            let mut r = fwd[j].clone();
            if j + 1 < n {
                let c = self.off[j] * scale[j] * scale[j + 1];
                r -= &x[j + 1] * c;
            }
            x[j] = chol[j].solve(&r);
        }
        let mut out = Vec::with_capacity(n * d);
        for (j, xj) in x.iter().enumerate() {
            out.extend(xj.iter().map(|v| v * scale[j]));
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_solve() {
        let d = 2;
        let n = 7;
        let diag: Vec<DMatrix<f64>> = (0..n)
            .map(|j| {
                let a = 4.0 + j as f64;
                DMatrix::from_row_slice(2, 2, &[a, 0.3, 0.3, a * 1e-3 + 3.5])
            })
            .collect();
        let off: Vec<f64> = (0..n - 1).map(|j| -1.0 - 0.1 * j as f64).collect();
        let sys = BlockTridiag {
            dim: d,
            diag: diag.clone(),
            off: off.clone(),
        };
        let rhs: Vec<f64> = (0..n * d).map(|i| (i as f64).sin()).collect();
        let x = sys.solve_spd(&rhs).unwrap();

        let mut dense = DMatrix::zeros(n * d, n * d);
        for j in 0..n {
            dense.view_mut((j * d, j * d), (d, d)).copy_from(&diag[j]);
            if j + 1 < n {
                for i in 0..d {
                    dense[(j * d + i, (j + 1) * d + i)] = off[j];
                    dense[((j + 1) * d + i, j * d + i)] = off[j];
                }
            }
        }
        let expect = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for (a, b) in x.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_indefinite() {
        let sys = BlockTridiag {
            dim: 1,
            diag: vec![
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 1.0),
            ],
            off: vec![-2.0],
        };
        assert!(sys.solve_spd(&[1.0, 1.0]).is_none());
    }
}
