//! Closed-form minimizer of the block-separable approximate problem.
//!
//! ```text
//! bP = (Y - DS) Q^T (Q Q^T + lambda I)^{-1}
//! bQ = (P^T P + lambda I)^{-1} P^T (Y - DS)
//! bS = ddiag^{-1} soft_mu(ddiag * S - D^T (PQ + DS - Y))
//! ```
//!
//! The three blocks only read the current iterate, so they are independent.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{check_shape, Result};
use crate::linalg::{add_diag, Cholesky};
use crate::model::{Anchor, FactorState, ProblemData};
use crate::scalar::Scalar;

/// `sign(x) max(|x| - tau, 0)`, the proximal map of `tau |.|`.
#[inline]
pub fn soft_threshold<T: Scalar>(x: T, tau: T) -> T {
    let zero = T::zero();
    (x - tau).max(zero) - (-x - tau).max(zero)
}

/// Best response `BZ = (bP, bQ, bS)` at some iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse<T> {
    pub bp: Array2<T>,
    pub bq: Array2<T>,
    pub bs: Array2<T>,
}

impl<T: Scalar> BestResponse<T> {
    pub fn check(&self, data: &ProblemData<T>) -> Result<()> {
        check_shape("bP", self.bp.dim(), (data.num_rows(), data.rho()))?;
        check_shape("bQ", self.bq.dim(), (data.rho(), data.num_cols()))?;
        check_shape("bS", self.bs.dim(), (data.num_atoms(), data.num_cols()))?;
        Ok(())
    }

    pub fn into_state(self) -> FactorState<T> {
        FactorState {
            p: self.bp,
            q: self.bq,
            s: self.bs,
        }
    }
}

/// `Q Q^T + lambda I`.
pub(crate) fn gram_rows<T: Scalar>(q: &ArrayView2<T>, lambda: T) -> Array2<T> {
    let mut g = q.dot(&q.t());
    add_diag(&mut g, lambda);
    g
}

/// `P^T P + lambda I`.
pub(crate) fn gram_cols<T: Scalar>(p: &ArrayView2<T>, lambda: T) -> Array2<T> {
    let mut g = p.t().dot(p);
    add_diag(&mut g, lambda);
    g
}

/// `(Y_rows - D_rows S) Q^T (Q Q^T + lambda I)^{-1}` for any row block of the data.
pub(crate) fn bp_rows<T: Scalar>(
    y_minus_ds: &ArrayView2<T>,
    q: &ArrayView2<T>,
    lambda: T,
) -> Result<Array2<T>> {
    let chol = Cholesky::new(&gram_rows(q, lambda).view())?;
    let rhs = y_minus_ds.dot(&q.t());
    chol.solve_right(&rhs.view())
}

/// `bS` from the thresholding argument `ddiag * S - D^T R`.
pub(crate) fn bs_from_argument<T: Scalar>(
    arg: &ArrayView2<T>,
    ddiag: &ArrayView1<T>,
    mu: T,
) -> Array2<T> {
    let mut out = arg.to_owned();
    for (mut row, &dd) in out.rows_mut().into_iter().zip(ddiag.iter()) {
        row.mapv_inplace(|x| soft_threshold(x, mu) / dd);
    }
    out
}

/// `ddiag * S - D^T R`.
pub(crate) fn s_argument<T: Scalar>(
    s: &ArrayView2<T>,
    ddiag: &ArrayView1<T>,
    dtr: &ArrayView2<T>,
) -> Array2<T> {
    let mut arg = s.to_owned();
    for ((mut row, &dd), dtr_row) in arg
        .rows_mut()
        .into_iter()
        .zip(ddiag.iter())
        .zip(dtr.rows())
    {
        Zip::from(&mut row)
            .and(&dtr_row)
            .for_each(|a, &g| *a = dd * *a - g);
    }
    arg
}

pub(crate) fn from_anchor<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    anchor: &Anchor<T>,
) -> Result<BestResponse<T>> {
    let y_minus_ds = &data.y() - &anchor.ds;
    let bp = bp_rows(&y_minus_ds.view(), &z.q.view(), data.lambda())?;

    let chol = Cholesky::new(&gram_cols(&z.p.view(), data.lambda()).view())?;
    let bq = chol.solve_left(&z.p.t().dot(&y_minus_ds).view())?;

    let arg = s_argument(&z.s.view(), &data.ddiag(), &anchor.dtr.view());
    let bs = bs_from_argument(&arg.view(), &data.ddiag(), data.mu());
    Ok(BestResponse { bp, bq, bs })
}

pub fn best_response_p<T: Scalar>(data: &ProblemData<T>, z: &FactorState<T>) -> Result<Array2<T>> {
    z.check(data)?;
    let y_minus_ds = &data.y() - &data.d().dot(&z.s);
    bp_rows(&y_minus_ds.view(), &z.q.view(), data.lambda())
}

pub fn best_response_q<T: Scalar>(data: &ProblemData<T>, z: &FactorState<T>) -> Result<Array2<T>> {
    z.check(data)?;
    let y_minus_ds = &data.y() - &data.d().dot(&z.s);
    let chol = Cholesky::new(&gram_cols(&z.p.view(), data.lambda()).view())?;
    chol.solve_left(&z.p.t().dot(&y_minus_ds).view())
}

pub fn best_response_s<T: Scalar>(data: &ProblemData<T>, z: &FactorState<T>) -> Result<Array2<T>> {
    z.check(data)?;
    let anchor = Anchor::new(data, z);
    let arg = s_argument(&z.s.view(), &data.ddiag(), &anchor.dtr.view());
    Ok(bs_from_argument(&arg.view(), &data.ddiag(), data.mu()))
}

/// All three blocks of the best response at `z`.
pub fn compute_best_response<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
) -> Result<BestResponse<T>> {
    z.check(data)?;
    from_anchor(data, z, &Anchor::new(data, z))
}
