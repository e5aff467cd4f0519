//! Small dense kernels: Frobenius products and a Cholesky factorization for
//! the symmetric positive-definite Gram systems the solvers produce.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Frobenius inner product `<a, b> = tr(a^T b)`.
pub fn inner<T: Scalar>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> T {
    debug_assert_eq!(a.dim(), b.dim());
    Zip::from(a)
        .and(b)
        .fold(T::zero(), |acc, &x, &y| acc + x * y)
}

/// Squared Frobenius norm.
pub fn fro2<T: Scalar>(a: &ArrayView2<T>) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

/// Entrywise l1 norm.
pub fn l1<T: Scalar>(a: &ArrayView2<T>) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x.abs())
}

/// `||b||_1 - ||a||_1`, summed entrywise so the error scales with `b - a`.
pub fn l1_change<T: Scalar>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> T {
    debug_assert_eq!(a.dim(), b.dim());
    Zip::from(a)
        .and(b)
        .fold(T::zero(), |acc, &x, &y| acc + (y.abs() - x.abs()))
}

/// `a + lambda * I` for a square `a`.
pub fn add_diag<T: Scalar>(a: &mut Array2<T>, lambda: T) {
    for i in 0..a.nrows().min(a.ncols()) {
        a[[i, i]] = a[[i, i]] + lambda;
    }
}

/// Lower-triangular Cholesky factor `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Array2<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &ArrayView2<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape {
                what: "cholesky input",
                expected: (n, n),
                got: a.dim(),
            });
        }
        let mut l = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag = diag - l[[j, k]] * l[[j, k]];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite (pivot {j} = {diag})"
                )));
            }
            let ljj = diag.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..n {
                let mut v = a[[i, j]];
                for k in 0..j {
                    v = v - l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = v / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    fn solve_vec(&self, x: &mut [T]) {
        let n = self.dim();
        // forward: L y = b
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v = v - self.l[[i, k]] * x[k];
            }
            x[i] = v / self.l[[i, i]];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v = v - self.l[[k, i]] * x[k];
            }
            x[i] = v / self.l[[i, i]];
        }
    }

    /// Returns `A^{-1} b` for a right-hand side with `dim()` rows.
    pub fn solve_left(&self, b: &ArrayView2<T>) -> Result<Array2<T>> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::Shape {
                what: "cholesky rhs",
                expected: (n, b.ncols()),
                got: b.dim(),
            });
        }
        let mut out = b.to_owned();
        let mut col = vec![T::zero(); n];
        for mut c in out.columns_mut() {
            for (dst, &src) in col.iter_mut().zip(c.iter()) {
                *dst = src;
            }
            self.solve_vec(&mut col);
            for (dst, &src) in c.iter_mut().zip(col.iter()) {
                *dst = src;
            }
        }
        Ok(out)
    }

    /// Returns `b A^{-1}` for a right-hand side with `dim()` columns.
    pub fn solve_right(&self, b: &ArrayView2<T>) -> Result<Array2<T>> {
        let n = self.dim();
        if b.ncols() != n {
            return Err(Error::Shape {
                what: "cholesky rhs",
                expected: (b.nrows(), n),
                got: b.dim(),
            });
        }
        // A is symmetric, so b A^{-1} = (A^{-1} b^T)^T row by row.
        let mut out = b.to_owned();
        let mut row = vec![T::zero(); n];
        for mut r in out.rows_mut() {
            for (dst, &src) in row.iter_mut().zip(r.iter()) {
                *dst = src;
            }
            self.solve_vec(&mut row);
            for (dst, &src) in r.iter_mut().zip(row.iter()) {
                *dst = src;
            }
        }
        Ok(out)
    }

    /// Explicit inverse, for systems applied many times against a fixed factor.
    pub fn inverse(&self) -> Array2<T> {
        let n = self.dim();
        let eye = Array2::<T>::eye(n);
        let mut inv = self
            .solve_left(&eye.view())
            .expect("identity has conforming shape");
        // symmetrize away rounding asymmetry
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (inv[[i, j]] + inv[[j, i]]) * T::lit(0.5);
                inv[[i, j]] = v;
                inv[[j, i]] = v;
            }
        }
        inv
    }
}
