//! Exact line search over the differentiable upper bound of the objective
//! along the best-response direction.
//!
//! Along `Z + gamma (BZ - Z)` the bound
//! `f(Z + gamma dZ) + g(S) + gamma (g(bS) - g(S)) - F(Z)` is the quartic
//!
//! ```text
//! phi(gamma) = a/4 gamma^4 + b/3 gamma^3 + c/2 gamma^2 + d gamma
//! ```
//!
//! and the step is its minimizer over `[0, 1]`. The authoritative path scans
//! the real roots of `phi'` inside `(0, 1)` together with both endpoints; the
//! textbook Cardano expression is kept alongside as a cross-check.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

use crate::best_response::BestResponse;
use crate::error::{Error, Result};
use crate::linalg::{self, fro2, inner};
use crate::model::{Anchor, FactorState, ProblemData};
use crate::scalar::Scalar;

/// Coefficients of `phi(gamma) = a/4 g^4 + b/3 g^3 + c/2 g^2 + d g`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LineSearchPoly<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Scalar> LineSearchPoly<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { a, b, c, d }
    }

    /// `phi(gamma)`.
    pub fn eval(&self, gamma: T) -> T {
        let quarter = T::lit(0.25);
        let third = T::one() / T::lit(3.0);
        let half = T::lit(0.5);
        gamma * (self.d + gamma * (half * self.c + gamma * (third * self.b + gamma * quarter * self.a)))
    }

    /// `phi'(gamma) = a g^3 + b g^2 + c g + d`.
    pub fn derivative(&self, gamma: T) -> T {
        ((self.a * gamma + self.b) * gamma + self.c) * gamma + self.d
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self::new(self.a * factor, self.b * factor, self.c * factor, self.d * factor)
    }
}

impl<T: Scalar> std::ops::Add for LineSearchPoly<T> {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

/// Outcome of the exact line search.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSize<T> {
    /// Chosen step in `[0, 1]`.
    pub gamma: T,
    /// Points examined: `0`, the stationary points of `phi` in `(0, 1)`, and `1`.
    pub candidates: Vec<T>,
    /// `phi(gamma) - phi(0)`, never positive.
    pub surrogate_drop: T,
    /// Clamped Cardano value, present when `a > 0`.
    pub cardano: Option<T>,
}

/// Real roots of a polynomial of degree at most three.
#[derive(Debug, Clone, PartialEq)]
pub enum CubicRoots<T> {
    /// Sorted ascending, duplicates merged.
    Roots(Vec<T>),
    /// Every coefficient is zero, so every point is a root.
    IdenticallyZero,
}

/// Row-block contribution to the quartic coefficients.
///
/// `shared_weight` multiplies the terms that do not depend on the row block
/// (`lambda ||dQ||^2`, `lambda <Q, dQ>` and `l1_change = mu (||bS||_1 - ||S||_1)`),
/// so that summing the blocks of a row partition with weight `1/L` reproduces
/// the monolithic coefficients. The monolithic computation is the single
/// block with weight one.
#[allow(clippy::too_many_arguments)]
pub(crate) fn block_coefficients<T: Scalar>(
    p: &ArrayView2<T>,
    dp: &ArrayView2<T>,
    q: &ArrayView2<T>,
    dq: &ArrayView2<T>,
    d_rows: &ArrayView2<T>,
    ds: &ArrayView2<T>,
    r: &ArrayView2<T>,
    lambda: T,
    l1_change: T,
    shared_weight: T,
) -> LineSearchPoly<T> {
    // F = dP dQ,  E = P dQ + dP Q + D dS
    let f = dp.dot(dq);
    let mut e = p.dot(dq);
    e += &dp.dot(q);
    e += &d_rows.dot(ds);

    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let a = two * fro2(&f.view());
    let b = three * inner(&f.view(), &e.view());
    let c = two * inner(&f.view(), r)
        + fro2(&e.view())
        + lambda * fro2(dp)
        + shared_weight * lambda * fro2(dq);
    let d = inner(&e.view(), r)
        + lambda * inner(p, dp)
        + shared_weight * (lambda * inner(q, dq) + l1_change);
    LineSearchPoly { a, b, c, d }
}

pub(crate) struct Deltas<T> {
    pub dp: Array2<T>,
    pub dq: Array2<T>,
    pub ds: Array2<T>,
}

impl<T: Scalar> Deltas<T> {
    pub fn new(z: &FactorState<T>, br: &BestResponse<T>) -> Self {
        Self {
            dp: &br.bp - &z.p,
            dq: &br.bq - &z.q,
            ds: &br.bs - &z.s,
        }
    }
}

pub(crate) fn coefficients_from_anchor<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    br: &BestResponse<T>,
    anchor: &Anchor<T>,
) -> LineSearchPoly<T> {
    let deltas = Deltas::new(z, br);
    let l1_change = data.mu() * linalg::l1_change(&z.s.view(), &br.bs.view());
    block_coefficients(
        &z.p.view(),
        &deltas.dp.view(),
        &z.q.view(),
        &deltas.dq.view(),
        &data.d(),
        &deltas.ds.view(),
        &anchor.r.view(),
        data.lambda(),
        l1_change,
        T::one(),
    )
}

/// Quartic coefficients `(a, b, c, d)` of the line-search bound at `z`
/// along `br - z`.
pub fn ls_coefficients<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    br: &BestResponse<T>,
) -> Result<LineSearchPoly<T>> {
    z.check(data)?;
    br.check(data)?;
    Ok(coefficients_from_anchor(data, z, br, &Anchor::new(data, z)))
}

fn quadratic_roots<T: Scalar>(a: T, b: T, c: T) -> Vec<T> {
    let zero = T::zero();
    if a == zero {
        if b == zero {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - T::lit(4.0) * a * c;
    if disc < zero {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let sign = if b < zero { -T::one() } else { T::one() };
    let qq = -T::lit(0.5) * (b + sign * sq);
    if qq == zero {
        // b = 0 and c = 0
        return vec![zero];
    }
    vec![qq / a, c / qq]
}

fn horner<T: Scalar>(coef: [T; 4], x: T) -> T {
    let [a, b, c, d] = coef;
    ((a * x + b) * x + c) * x + d
}

/// Root of a cubic inside a bracket with a sign change, by Newton steps
/// that fall back to bisection whenever they leave the bracket.
fn bracketed_root<T: Scalar>(coef: [T; 4], mut lo: T, mut hi: T) -> T {
    let [a, b, c, _] = coef;
    let mut f_lo = horner(coef, lo);
    if f_lo == T::zero() {
        return lo;
    }
    if horner(coef, hi) == T::zero() {
        return hi;
    }
    let half = T::lit(0.5);
    let mut x = (lo + hi) * half;
    for _ in 0..400 {
        let fx = horner(coef, x);
        if fx == T::zero() {
            return x;
        }
        if (fx < T::zero()) == (f_lo < T::zero()) {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        let dfx = (T::lit(3.0) * a * x + T::lit(2.0) * b) * x + c;
        let newton = x - fx / dfx;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            (lo + hi) * half
        };
        if (next - x).abs() <= T::epsilon() * x.abs().max(T::min_positive_value()) {
            return next;
        }
        if hi - lo <= T::epsilon() * lo.abs().max(hi.abs()) {
            return (lo + hi) * half;
        }
        x = next;
    }
    x
}

/// All real roots of `a3 x^3 + b3 x^2 + c3 x + d3`.
///
/// Degenerate leading coefficients fall through to the quadratic, linear and
/// constant cases. A true cubic is split at the stationary points of the
/// polynomial into monotone pieces, each searched inside the Cauchy bound;
/// stationary points where the polynomial vanishes to rounding accuracy are
/// reported as (multiple) roots. Roots are sorted and merged when closer than
/// `1e-12 max(1, |root|)`.
pub fn cubic_real_roots<T: Scalar>(a3: T, b3: T, c3: T, d3: T) -> CubicRoots<T> {
    let zero = T::zero();
    let mut roots = if a3 == zero {
        if b3 == zero && c3 == zero && d3 == zero {
            return CubicRoots::IdenticallyZero;
        }
        quadratic_roots(b3, c3, d3)
    } else {
        let coef = [a3, b3, c3, d3];
        let bound = T::one() + (b3 / a3).abs().max((c3 / a3).abs()).max((d3 / a3).abs());
        let mut crit = quadratic_roots(T::lit(3.0) * a3, T::lit(2.0) * b3, c3);
        crit.retain(|x| x.is_finite());
        crit.sort_by(|x, y| x.partial_cmp(y).expect("finite"));

        let mut found = Vec::new();
        for &x in &crit {
            let size = ((a3 * x).abs() * x.abs() + b3.abs() * x.abs() + c3.abs()) * x.abs()
                + d3.abs();
            if horner(coef, x).abs() <= T::lit(8.0) * T::epsilon() * size {
                found.push(x);
            }
        }
        let mut breaks = vec![-bound];
        breaks.extend(crit.iter().map(|&x| x.max(-bound).min(bound)));
        breaks.push(bound);
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if !(lo < hi) {
                continue;
            }
            let (f_lo, f_hi) = (horner(coef, lo), horner(coef, hi));
            if (f_lo < zero && f_hi > zero) || (f_lo > zero && f_hi < zero) {
                found.push(bracketed_root(coef, lo, hi));
            }
        }
        found
    };
    roots.retain(|r| r.is_finite());
    roots.sort_by(|x, y| x.partial_cmp(y).expect("finite roots"));
    let tol = T::lit(1e-12);
    let mut merged: Vec<T> = Vec::with_capacity(roots.len());
    for r in roots {
        match merged.last() {
            Some(&last) if (r - last).abs() <= tol * T::one().max(r.abs()) => {}
            _ => merged.push(r),
        }
    }
    CubicRoots::Roots(merged)
}

/// Cardano's closed form written with
/// `s1 = -(b/3a)^3 + bc/6a^2 - d/2a` and `s2 = c/3a - (b/3a)^2`:
/// the smallest nonnegative real value of
/// `cbrt(s1 + sqrt(s1^2 + s2^3)) + cbrt(s1 - sqrt(s1^2 + s2^3)) - b/3a`,
/// projected onto `[0, 1]`. Returns `None` unless `a > 0`.
pub fn cardano_step<T: Scalar>(poly: &LineSearchPoly<T>) -> Option<T> {
    let LineSearchPoly { a, b, c, d } = *poly;
    let zero = T::zero();
    if !(a > zero) {
        return None;
    }
    let three = T::lit(3.0);
    let two = T::lit(2.0);
    let b3a = b / (three * a);
    let s1 = -b3a * b3a * b3a + b * c / (T::lit(6.0) * a * a) - d / (two * a);
    let s2 = c / (three * a) - b3a * b3a;
    let disc = s1 * s1 + s2 * s2 * s2;
    let values: Vec<T> = if disc >= zero {
        let sq = disc.sqrt();
        // the cube roots multiply to -s2; take the larger one directly
        let big = if s1 >= zero { (s1 + sq).cbrt() } else { (s1 - sq).cbrt() };
        let small = if big == zero { zero } else { -s2 / big };
        let mut v = vec![big + small - b3a];
        if disc == zero {
            v.push(-(big + small) * T::lit(0.5) - b3a);
        }
        v
    } else {
        // s2 < 0: three real values, no complex arithmetic needed
        let r = (-s2).sqrt();
        let cos_arg = (s1 / (r * r * r)).max(-T::one()).min(T::one());
        let theta = cos_arg.acos();
        (0..3)
            .map(|k| {
                two * r * ((theta + T::lit(2.0 * PI * k as f64)) / three).cos() - b3a
            })
            .collect()
    };
    let chosen = values
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v >= zero)
        .fold(None, |best: Option<T>, v| Some(best.map_or(v, |b| b.min(v))))
        .unwrap_or(zero);
    Some(chosen.max(zero).min(T::one()))
}

/// Minimizer of `phi` over `[0, 1]`.
///
/// Candidates are both endpoints and the real roots of `phi'` in `(0, 1)`.
/// Among candidates whose value is within `1e-12` (relative to the largest
/// candidate magnitude) of the minimum the smallest step wins. The origin is
/// left out of that tie when `d < 0`, since `phi` decreases there.
pub fn exact_step<T: Scalar>(poly: &LineSearchPoly<T>) -> Result<StepSize<T>> {
    if !poly.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite line-search coefficients {poly:?}"
        )));
    }
    let zero = T::zero();
    let one = T::one();
    let mut candidates = vec![zero];
    if let CubicRoots::Roots(roots) = cubic_real_roots(poly.a, poly.b, poly.c, poly.d) {
        candidates.extend(roots.into_iter().filter(|&r| r > zero && r < one));
    }
    candidates.push(one);

    let values: Vec<T> = candidates.iter().map(|&g| poly.eval(g)).collect();
    let best = values.iter().copied().fold(T::infinity(), T::min);
    let scale = values.iter().fold(zero, |m, v| m.max(v.abs()));
    let tol = T::lit(1e-12) * scale;
    // with d < 0 the origin is strictly worse than some small step
    let skip_origin = poly.d < zero && values.len() > 1;
    let idx = values
        .iter()
        .enumerate()
        .position(|(i, &v)| !(skip_origin && i == 0) && v <= best + tol)
        .expect("at least one candidate");

    let gamma = candidates[idx];
    Ok(StepSize {
        gamma,
        surrogate_drop: values[idx],
        candidates,
        cardano: cardano_step(poly),
    })
}

/// Coefficients followed by the exact step for the direction `br - z`.
pub fn step<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    br: &BestResponse<T>,
) -> Result<StepSize<T>> {
    exact_step(&ls_coefficients(data, z, br)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
        match cubic_real_roots(a, b, c, d) {
            CubicRoots::Roots(r) => r,
            CubicRoots::IdenticallyZero => panic!("unexpected zero polynomial"),
        }
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn cubic_cases() {
        // (x - 0.5)(x^2 + 0.5x + 1.25)
        assert!(close(&roots(1.0, 0.0, 1.0, -0.5 * (0.25 + 1.0)), &[0.5]));
        assert!(close(&roots(1.0, -0.5, 1.0, -0.5), &[0.5]));
        assert!(close(&roots(0.0, 1.0, -3.0, 2.0), &[1.0, 2.0]));
        assert!(close(&roots(1.0, -6.0, 11.0, -6.0), &[1.0, 2.0, 3.0]));
        assert!(close(&roots(0.0, 0.0, 2.0, -1.0), &[0.5]));
        assert!(roots(0.0, 0.0, 0.0, 3.0).is_empty());
        assert!(roots(0.0, 1.0, 0.0, 1.0).is_empty());
        assert!(close(&roots(2.0, -6.0, 6.0, -2.0), &[1.0]));
        assert!(close(&roots(1.0, 0.0, 0.0, 0.0), &[0.0]));
        assert_eq!(
            cubic_real_roots(0.0, 0.0, 0.0, 0.0),
            CubicRoots::<f64>::IdenticallyZero
        );
    }

    #[test]
    fn quadratic_vertex() {
        let s = exact_step(&LineSearchPoly::new(0.0_f64, 0.0, 2.0, -1.0)).unwrap();
        assert!((s.gamma - 0.5).abs() < 1e-15);
        assert!((s.surrogate_drop + 0.25).abs() < 1e-15);
        assert_eq!(s.cardano, None);
    }

    #[test]
    fn quartic_hits_boundary_root() {
        let s = exact_step(&LineSearchPoly::new(4.0_f64, 0.0, 0.0, -4.0)).unwrap();
        assert_eq!(s.gamma, 1.0);
        assert!((s.surrogate_drop + 3.0).abs() < 1e-15);
        assert!((s.cardano.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_poly_takes_no_step() {
        let s = exact_step(&LineSearchPoly::<f64>::default()).unwrap();
        assert_eq!(s.gamma, 0.0);
        assert_eq!(s.surrogate_drop, 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            exact_step(&LineSearchPoly::new(f64::NAN, 0.0, 1.0, -1.0)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn ascending_direction_stays_put() {
        let s = exact_step(&LineSearchPoly::new(1.0, 1.0, 1.0, 0.5)).unwrap();
        assert_eq!(s.gamma, 0.0);
    }
}
