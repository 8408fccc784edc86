//! Dense LU factorization with partial pivoting.

use ndarray::{Array1, Array2};
use thiserror::Error;

/// Pivots below this magnitude are treated as exact zeros.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is singular (pivot {pivot:e} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("right-hand side has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// `PA = LU` stored compactly: unit-lower `L` below the diagonal, `U` on and
/// above it.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(mut a: Array2<f64>) -> Result<Lu, LinalgError> {
        let (n, m) = a.dim();
        if n != m {
            return Err(LinalgError::NotSquare(n, m));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (p, pivot) =
                (col..n)
                    .map(|r| (r, a[[r, col]]))
                    .fold((col, 0.0_f64), |best, (r, v)| {
                        if v.abs() > best.1.abs() {
                            (r, v)
                        } else {
                            best
                        }
                    });
            if pivot.abs() < PIVOT_TOL {
                return Err(LinalgError::Singular { col, pivot });
            }
            if p != col {
                for c in 0..n {
                    a.swap([p, c], [col, c]);
                }
                perm.swap(p, col);
            }
            for r in col + 1..n {
                let factor = a[[r, col]] / pivot;
                a[[r, col]] = factor;
                if factor != 0.0 {
                    for c in col + 1..n {
                        a[[r, c]] -= factor * a[[col, c]];
                    }
                }
            }
        }
        Ok(Lu { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Array1<f64>, LinalgError> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut x: Array1<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[[r, c]] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.lu[[r, c]] * x[c];
            }
            x[r] = s / self.lu[[r, r]];
        }
        Ok(x)
    }
}

/// Factor and solve in one step.
pub fn solve(a: Array2<f64>, rhs: &[f64]) -> Result<Array1<f64>, LinalgError> {
    Lu::factor(a)?.solve(rhs)
}
