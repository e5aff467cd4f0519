//! Independent reference computations. Everything here is written with plain
//! loops and does not call into the library's numerics.

#![allow(dead_code)]

use lrsd_core::datagen::{generate, GenSpec};
use lrsd_core::{FactorState, ProblemData};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn instance(n: usize, k: usize, i: usize, rho: usize, r: f64, seed: u64) -> ProblemData<f64> {
    generate::<f64>(&GenSpec::small(n, k, i, rho, r, seed)).unwrap().data
}

/// Dense random iterate with a sparse-ish `S`.
pub fn random_state(data: &ProblemData<f64>, scale: f64, seed: u64) -> FactorState<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = |r: usize, c: usize| {
        Array2::from_shape_simple_fn((r, c), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
    };
    let p = g(data.num_rows(), data.rho());
    let q = g(data.rho(), data.num_cols());
    let mut s = g(data.num_atoms(), data.num_cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    s.mapv_inplace(|v| if rng.random::<f64>() < 0.5 { 0.0 } else { v });
    FactorState { p, q, s }
}

pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, m) = a.dim();
    let (m2, k) = b.dim();
    assert_eq!(m, m2);
    let mut out = Array2::zeros((n, k));
    for i in 0..n {
        for j in 0..k {
            let mut acc = 0.0;
            for t in 0..m {
                acc += a[[i, t]] * b[[t, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

pub fn transpose(a: &Array2<f64>) -> Array2<f64> {
    a.t().to_owned()
}

pub fn sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn abs_sum(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `PQ + DS - Y`
pub fn residual(data: &ProblemData<f64>, z: &FactorState<f64>) -> Array2<f64> {
    let d = data.d().to_owned();
    let y = data.y().to_owned();
    &(&matmul(&z.p, &z.q) + &matmul(&d, &z.s)) - &y
}

pub fn smooth(data: &ProblemData<f64>, z: &FactorState<f64>) -> f64 {
    0.5 * sq(&residual(data, z)) + 0.5 * data.lambda() * (sq(&z.p) + sq(&z.q))
}

pub fn objective(data: &ProblemData<f64>, z: &FactorState<f64>) -> f64 {
    smooth(data, z) + data.mu() * abs_sum(&z.s)
}

/// `(R Q^T + lambda P, P^T R + lambda Q, D^T R)` by loops.
pub fn gradient(data: &ProblemData<f64>, z: &FactorState<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let r = residual(data, z);
    let lambda = data.lambda();
    let gp = &matmul(&r, &transpose(&z.q)) + &(&z.p * lambda);
    let gq = &matmul(&transpose(&z.p), &r) + &(&z.q * lambda);
    let gs = matmul(&transpose(&data.d().to_owned()), &r);
    (gp, gq, gs)
}

/// Central finite-difference gradient of `f` over all entries of `z`.
pub fn fd_gradient(
    z: &FactorState<f64>,
    f: impl Fn(&FactorState<f64>) -> f64,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut out = (z.p.clone(), z.q.clone(), z.s.clone());
    let mut probe = z.clone();
    for block in 0..3 {
        let dim = match block {
            0 => z.p.dim(),
            1 => z.q.dim(),
            _ => z.s.dim(),
        };
        for i in 0..dim.0 {
            for j in 0..dim.1 {
                let x = match block {
                    0 => &mut probe.p,
                    1 => &mut probe.q,
                    _ => &mut probe.s,
                };
                let orig = x[[i, j]];
                let h = 1e-5 * orig.abs().max(1.0);
                x[[i, j]] = orig + h;
                let up = f(&probe);
                let x = match block {
                    0 => &mut probe.p,
                    1 => &mut probe.q,
                    _ => &mut probe.s,
                };
                x[[i, j]] = orig - h;
                let down = f(&probe);
                let x = match block {
                    0 => &mut probe.p,
                    1 => &mut probe.q,
                    _ => &mut probe.s,
                };
                x[[i, j]] = orig;
                let g = (up - down) / (2.0 * h);
                match block {
                    0 => out.0[[i, j]] = g,
                    1 => out.1[[i, j]] = g,
                    _ => out.2[[i, j]] = g,
                }
            }
        }
    }
    out
}

/// `||a - b|| / max(||b||, floor)` in Frobenius norm.
pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>, floor: f64) -> f64 {
    sq(&(a - b)).sqrt() / sq(b).sqrt().max(floor)
}

/// Golden-section minimizer of a unimodal `h` on `[lo, hi]`.
pub fn golden_min(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (h(x1), h(x2));
    for _ in 0..300 {
        if hi - lo < 1e-13 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = h(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = h(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer of `1/2 dd s^2 - arg s + mu |s|`: golden section for a
/// bracket, then bisection on the subdifferential, since function values
/// alone only pin the minimizer to about `sqrt(eps)`.
pub fn scalar_prox(dd: f64, arg: f64, mu: f64) -> f64 {
    let h = |s: f64| 0.5 * dd * s * s - arg * s + mu * s.abs();
    let bound = (arg.abs() + mu) / dd + 1.0;
    let coarse = golden_min(h, -bound, bound);
    // 0 lies in the subdifferential at s iff lo(s) <= 0 <= hi(s)
    let lo = |s: f64| dd * s - arg + if s > 0.0 { mu } else { -mu };
    let hi = |s: f64| dd * s - arg + if s < 0.0 { -mu } else { mu };
    if lo(0.0) <= 0.0 && hi(0.0) >= 0.0 {
        return 0.0;
    }
    let width = 1e-4 * coarse.abs().max(1.0);
    let (mut a, mut b) = (coarse - width, coarse + width);
    assert!(hi(a) < 0.0 && lo(b) > 0.0, "golden section missed the minimizer");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if hi(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Singular values by one-sided Jacobi rotations.
pub fn singular_values(m: &Array2<f64>) -> Vec<f64> {
    let mut a = if m.nrows() >= m.ncols() { m.clone() } else { transpose(m) };
    let cols = a.ncols();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..a.nrows() {
                    alpha += a[[i, p]] * a[[i, p]];
                    beta += a[[i, q]] * a[[i, q]];
                    gamma += a[[i, p]] * a[[i, q]];
                }
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..a.nrows() {
                    let (x, y) = (a[[i, p]], a[[i, q]]);
                    a[[i, p]] = c * x - s * y;
                    a[[i, q]] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..cols)
        .map(|j| a.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}
