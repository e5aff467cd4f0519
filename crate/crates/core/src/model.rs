//! Problem data, iterate, and the smooth/nonsmooth objective parts.
//!
//! The objective is
//!
//! ```text
//! F(P, Q, S) = f(P, Q, S) + g(S)
//! f(P, Q, S) = 1/2 ||PQ + DS - Y||_F^2 + lambda/2 (||P||_F^2 + ||Q||_F^2)
//! g(S)       = mu ||S||_1
//! ```
//!
//! with `P: N x rho`, `Q: rho x K`, `S: I x K`, `D: N x I`, `Y: N x K`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_shape, Error, Result};
use crate::best_response::BestResponse;
use crate::linalg::{fro2, l1, l1_change};
use crate::scalar::Scalar;

/// Fixed inputs of the factorized problem.
#[derive(Debug, Clone)]
pub struct ProblemData<T> {
    y: Array2<T>,
    d: Array2<T>,
    lambda: T,
    mu: T,
    rho: usize,
    ddiag: Array1<T>,
}

impl<T: Scalar> ProblemData<T> {
    /// Validates and assembles problem data. Requires `lambda > 0` and `mu > 0`.
    pub fn new(y: Array2<T>, d: Array2<T>, lambda: T, mu: T, rho: usize) -> Result<Self> {
        Self::build(y, d, lambda, mu, rho, false)
    }

    /// Like [`ProblemData::new`] but accepts `lambda = 0` or `mu = 0`.
    ///
    /// With `lambda = 0` the Gram systems of the best response may be
    /// singular and solvers can fail with [`Error::Numeric`].
    pub fn new_allow_degenerate(
        y: Array2<T>,
        d: Array2<T>,
        lambda: T,
        mu: T,
        rho: usize,
    ) -> Result<Self> {
        Self::build(y, d, lambda, mu, rho, true)
    }

    fn build(
        y: Array2<T>,
        d: Array2<T>,
        lambda: T,
        mu: T,
        rho: usize,
        allow_degenerate: bool,
    ) -> Result<Self> {
        let (n, k) = y.dim();
        let i = d.ncols();
        if n == 0 || k == 0 || i == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive (N={n}, K={k}, I={i})"
            )));
        }
        check_shape("D", d.dim(), (n, i))?;
        if rho == 0 || rho > n.min(k) {
            return Err(Error::InvalidArgument(format!(
                "rank rho={rho} must lie in [1, min(N, K)={}]",
                n.min(k)
            )));
        }
        if y.iter().chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("Y and D must be finite".into()));
        }
        if !lambda.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidArgument("lambda and mu must be finite".into()));
        }
        let positive = |v: T| if allow_degenerate { v >= T::zero() } else { v > T::zero() };
        if !positive(lambda) {
            return Err(Error::InvalidArgument(format!(
                "lambda={lambda} must be positive"
            )));
        }
        if !positive(mu) {
            return Err(Error::InvalidArgument(format!("mu={mu} must be positive")));
        }
        let ddiag = d.map_axis(Axis(0), |col| col.iter().fold(T::zero(), |a, &x| a + x * x));
        if let Some(col) = ddiag.iter().position(|&v| !(v > T::zero())) {
            return Err(Error::InvalidArgument(format!(
                "column {col} of D is identically zero"
            )));
        }
        Ok(Self {
            y,
            d,
            lambda,
            mu,
            rho,
            ddiag,
        })
    }

    pub fn y(&self) -> ArrayView2<'_, T> {
        self.y.view()
    }

    pub fn d(&self) -> ArrayView2<'_, T> {
        self.d.view()
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    /// Diagonal of `D^T D`.
    pub fn ddiag(&self) -> ArrayView1<'_, T> {
        self.ddiag.view()
    }

    /// N, the number of measurement rows.
    pub fn num_rows(&self) -> usize {
        self.y.nrows()
    }

    /// K, the number of measurement columns.
    pub fn num_cols(&self) -> usize {
        self.y.ncols()
    }

    /// I, the number of dictionary atoms.
    pub fn num_atoms(&self) -> usize {
        self.d.ncols()
    }

    /// Same data with different regularizers or rank.
    pub fn with_params(&self, lambda: T, mu: T, rho: usize) -> Result<Self> {
        Self::new(self.y.clone(), self.d.clone(), lambda, mu, rho)
    }
}

/// The iterate `Z = (P, Q, S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState<T> {
    pub p: Array2<T>,
    pub q: Array2<T>,
    pub s: Array2<T>,
}

impl<T: Scalar> FactorState<T> {
    pub fn zeros(data: &ProblemData<T>) -> Self {
        let (n, k, i, rho) = (
            data.num_rows(),
            data.num_cols(),
            data.num_atoms(),
            data.rho(),
        );
        Self {
            p: Array2::zeros((n, rho)),
            q: Array2::zeros((rho, k)),
            s: Array2::zeros((i, k)),
        }
    }

    /// Seeded start with `P` and `Q` entries drawn from `N(0, std^2)` and `S = 0`.
    pub fn gaussian(data: &ProblemData<T>, std: f64, seed: u64) -> Self {
        let mut z = Self::zeros(data);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("std must be finite and nonnegative");
        z.p.mapv_inplace(|_| T::lit(normal.sample(&mut rng)));
        z.q.mapv_inplace(|_| T::lit(normal.sample(&mut rng)));
        z
    }

    pub fn check(&self, data: &ProblemData<T>) -> Result<()> {
        check_shape("P", self.p.dim(), (data.num_rows(), data.rho()))?;
        check_shape("Q", self.q.dim(), (data.rho(), data.num_cols()))?;
        check_shape("S", self.s.dim(), (data.num_atoms(), data.num_cols()))?;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.p
            .iter()
            .chain(self.q.iter())
            .chain(self.s.iter())
            .all(|v| v.is_finite())
    }

    /// `self + gamma (target - self)`, blockwise.
    pub fn moved_toward(&self, target_p: &Array2<T>, target_q: &Array2<T>, target_s: &Array2<T>, gamma: T) -> Self {
        Self {
            p: lerp(&self.p, target_p, gamma),
            q: lerp(&self.q, target_q, gamma),
            s: lerp(&self.s, target_s, gamma),
        }
    }
}

/// `x + gamma (t - x)`; the endpoints are reproduced exactly.
pub(crate) fn lerp<T: Scalar>(x: &Array2<T>, t: &Array2<T>, gamma: T) -> Array2<T> {
    if gamma == T::one() {
        return t.clone();
    }
    let mut out = x.clone();
    if gamma == T::zero() {
        return out;
    }
    out.zip_mut_with(t, |a, &b| *a = *a + gamma * (b - *a));
    out
}

/// Gradient of the smooth part `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub gp: Array2<T>,
    pub gq: Array2<T>,
    pub gs: Array2<T>,
}

/// Products evaluated once per iterate and shared by the objective, the
/// gradient, the best response, and the line search.
#[derive(Debug, Clone)]
pub(crate) struct Anchor<T> {
    /// `D S`
    pub ds: Array2<T>,
    /// `R = PQ + DS - Y`
    pub r: Array2<T>,
    /// `D^T R`
    pub dtr: Array2<T>,
}

impl<T: Scalar> Anchor<T> {
    pub fn new(data: &ProblemData<T>, z: &FactorState<T>) -> Self {
        let ds = data.d.dot(&z.s);
        let r = residual_from(data, z, &ds);
        let dtr = data.d.t().dot(&r);
        Self { ds, r, dtr }
    }

    pub fn f(&self, data: &ProblemData<T>, z: &FactorState<T>) -> T {
        smooth_value(data, z, &self.r)
    }

    pub fn gradient(&self, data: &ProblemData<T>, z: &FactorState<T>) -> Gradient<T> {
        let lambda = data.lambda;
        let mut gp = self.r.dot(&z.q.t());
        gp.zip_mut_with(&z.p, |g, &p| *g = *g + lambda * p);
        let mut gq = z.p.t().dot(&self.r);
        gq.zip_mut_with(&z.q, |g, &q| *g = *g + lambda * q);
        Gradient {
            gp,
            gq,
            gs: self.dtr.clone(),
        }
    }
}

pub(crate) fn residual_from<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    ds: &Array2<T>,
) -> Array2<T> {
    let mut r = z.p.dot(&z.q);
    ndarray::Zip::from(&mut r)
        .and(ds)
        .and(&data.y)
        .for_each(|r, &ds, &y| *r = *r + ds - y);
    r
}

fn smooth_value<T: Scalar>(data: &ProblemData<T>, z: &FactorState<T>, r: &Array2<T>) -> T {
    let half = T::lit(0.5);
    half * fro2(&r.view()) + half * data.lambda * (fro2(&z.p.view()) + fro2(&z.q.view()))
}

/// Residual `PQ + DS - Y`.
pub fn residual<T: Scalar>(data: &ProblemData<T>, z: &FactorState<T>) -> Result<Array2<T>> {
    z.check(data)?;
    let ds = data.d.dot(&z.s);
    Ok(residual_from(data, z, &ds))
}

/// Smooth part `f(Z)`.
pub fn eval_f<T: Scalar>(data: &ProblemData<T>, z: &FactorState<T>) -> Result<T> {
    let r = residual(data, z)?;
    Ok(smooth_value(data, z, &r))
}

/// Nonsmooth part `g(S) = mu ||S||_1`.
pub fn eval_g<T: Scalar>(data: &ProblemData<T>, s: &ArrayView2<T>) -> Result<T> {
    check_shape("S", s.dim(), (data.num_atoms(), data.num_cols()))?;
    Ok(data.mu * l1(s))
}

/// Full objective `F(Z) = f(Z) + g(S)`.
pub fn eval_objective<T: Scalar>(data: &ProblemData<T>, z: &FactorState<T>) -> Result<T> {
    Ok(eval_f(data, z)? + eval_g(data, &z.s.view())?)
}

/// `grad f(Z)`: `(R Q^T + lambda P, P^T R + lambda Q, D^T R)`.
pub fn grad_f<T: Scalar>(data: &ProblemData<T>, z: &FactorState<T>) -> Result<Gradient<T>> {
    z.check(data)?;
    Ok(Anchor::new(data, z).gradient(data, z))
}

/// Block-separable convex approximation of `f` around `anchor`, evaluated at `z`.
///
/// Sum of three block approximations, each equal to `f(anchor)` at the anchor,
/// minus `2 f(anchor)`; so the value at `z = anchor` is exactly `f(anchor)`.
/// The P and Q blocks are `f` with the other two blocks frozen; the S block
/// is the sum over entries of `f` with only that entry free, which reduces to
/// `f(anchor) + <S - S_t, D^T R_t> + 1/2 sum_ik ddiag_i (S - S_t)_ik^2`.
pub fn eval_approx<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    anchor: &FactorState<T>,
) -> Result<T> {
    z.check(data)?;
    anchor.check(data)?;
    let at = Anchor::new(data, anchor);
    let f_anchor = at.f(data, anchor);

    let only_p = FactorState {
        p: z.p.clone(),
        q: anchor.q.clone(),
        s: anchor.s.clone(),
    };
    let r_p = residual_from(data, &only_p, &at.ds);
    let f_p = smooth_value(data, &only_p, &r_p);

    let only_q = FactorState {
        p: anchor.p.clone(),
        q: z.q.clone(),
        s: anchor.s.clone(),
    };
    let r_q = residual_from(data, &only_q, &at.ds);
    let f_q = smooth_value(data, &only_q, &r_q);

    let half = T::lit(0.5);
    let mut lin = T::zero();
    let mut quad = T::zero();
    for ((i, k), &s) in z.s.indexed_iter() {
        let delta = s - anchor.s[[i, k]];
        lin = lin + delta * at.dtr[[i, k]];
        quad = quad + data.ddiag[i] * delta * delta;
    }
    let f_s = f_anchor + lin + half * quad;

    Ok(f_p + f_q + f_s - (f_anchor + f_anchor))
}

/// `tr((BZ - Z)^T grad f(Z))` for a best response `br = (bP, bQ, bS)` at `z`.
pub(crate) fn directional_derivative<T: Scalar>(
    z: &FactorState<T>,
    grad: &Gradient<T>,
    bp: &Array2<T>,
    bq: &Array2<T>,
    bs: &Array2<T>,
) -> T {
    delta_inner(bp, &z.p, &grad.gp) + delta_inner(bq, &z.q, &grad.gq) + delta_inner(bs, &z.s, &grad.gs)
}

/// `<b - x, g>`.
pub(crate) fn delta_inner<T: Scalar>(b: &Array2<T>, x: &Array2<T>, g: &Array2<T>) -> T {
    ndarray::Zip::from(b)
        .and(x)
        .and(g)
        .fold(T::zero(), |acc, &b, &x, &g| acc + (b - x) * g)
}

/// Stop metric of the solver: `|tr((BZ - Z)^T grad f(Z))|`.
pub fn stationarity_gap<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    br: &BestResponse<T>,
) -> Result<T> {
    br.check(data)?;
    let grad = grad_f(data, z)?;
    Ok(directional_derivative(z, &grad, &br.bp, &br.bq, &br.bs).abs())
}

/// Directional derivative of the full objective model along `BZ - Z`:
/// `tr((BZ - Z)^T grad f(Z)) + g(bS) - g(S)`. Nonpositive for a best response.
pub fn surrogate_gap<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    br: &BestResponse<T>,
) -> Result<T> {
    br.check(data)?;
    let grad = grad_f(data, z)?;
    Ok(directional_derivative(z, &grad, &br.bp, &br.bq, &br.bs)
        + data.mu * l1_change(&z.s.view(), &br.bs.view()))
}
