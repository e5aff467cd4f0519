mod common;

use common::*;
use lrsd_core::line_search::{cardano_step, cubic_real_roots, exact_step, ls_coefficients, CubicRoots};
use lrsd_core::{compute_best_response, FactorState, LineSearchPoly};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Explicit quartic, written out term by term.
fn phi(p: &LineSearchPoly<f64>, g: f64) -> f64 {
    p.a / 4.0 * g.powi(4) + p.b / 3.0 * g.powi(3) + p.c / 2.0 * g * g + p.d * g
}

fn grid_min(p: &LineSearchPoly<f64>, points: usize) -> f64 {
    (0..=points)
        .map(|j| phi(p, j as f64 / points as f64))
        .fold(f64::INFINITY, f64::min)
}

fn scale(p: &LineSearchPoly<f64>) -> f64 {
    [p.a, p.b, p.c, p.d].iter().map(|x| x.abs()).sum::<f64>().max(1.0)
}

fn random_poly(rng: &mut ChaCha8Rng) -> LineSearchPoly<f64> {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    LineSearchPoly::new(u(0.0, 10.0), u(-20.0, 20.0), u(-10.0, 10.0), u(-10.0, 5.0))
}

fn instance_poly(seed: u64) -> (LineSearchPoly<f64>, lrsd_core::ProblemData<f64>, FactorState<f64>) {
    let data = instance(5, 6, 4, 2, 0.5, seed);
    let z = random_state(&data, 0.7, seed + 1000);
    let br = compute_best_response(&data, &z).unwrap();
    (ls_coefficients(&data, &z, &br).unwrap(), data, z)
}

#[test]
fn exact_step_matches_dense_grid_on_random_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for set in 0..100 {
        let p = random_poly(&mut rng);
        let st = exact_step(&p).unwrap();
        let best = phi(&p, st.gamma);
        let grid = grid_min(&p, 1_000_000);
        assert!((best - grid).abs() <= 1e-8, "set {set}: {best} vs grid {grid} for {p:?}");
    }
}

#[test]
fn exact_step_matches_dense_grid_on_instances() {
    for seed in 0..100 {
        let (p, _, _) = instance_poly(seed);
        let st = exact_step(&p).unwrap();
        let best = phi(&p, st.gamma);
        let grid = grid_min(&p, 1_000_000);
        assert!(
            (best - grid).abs() <= 1e-8 * scale(&p),
            "seed {seed}: {best} vs grid {grid} for {p:?}"
        );
    }
}

/// Cardano is compared only where its "smallest nonnegative root" is
/// unambiguously the minimizer: a single root of phi' in (0, 1], and it is
/// where the scan landed.
fn cardano_applies(p: &LineSearchPoly<f64>, gamma: f64) -> bool {
    if !(p.a > 0.0) || !(gamma > 0.0 && gamma < 1.0) {
        return false;
    }
    match cubic_real_roots(p.a, p.b, p.c, p.d) {
        CubicRoots::Roots(r) => r.iter().filter(|&&x| x >= 0.0 && x <= 1.0).count() == 1,
        CubicRoots::IdenticallyZero => false,
    }
}

#[test]
fn cardano_agrees_with_the_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compared = 0;
    let polys: Vec<_> = (0..100)
        .map(|_| random_poly(&mut rng))
        .chain((0..100).map(|s| instance_poly(s).0))
        .collect();
    for p in polys {
        let st = exact_step(&p).unwrap();
        if !cardano_applies(&p, st.gamma) {
            continue;
        }
        let cg = cardano_step(&p).expect("a > 0");
        assert!(
            (phi(&p, cg) - phi(&p, st.gamma)).abs() <= 1e-10 * scale(&p),
            "{p:?}: cardano {cg} vs {}",
            st.gamma
        );
        compared += 1;
    }
    assert!(compared >= 50, "only {compared} eligible cases");
}

#[test]
fn quartic_is_the_line_restriction_of_the_bound() {
    for seed in 0..10 {
        let (p, data, z) = instance_poly(seed);
        let br = compute_best_response(&data, &z).unwrap();
        let f0 = smooth(&data, &z);
        let dg = data.mu() * (abs_sum(&br.bs) - abs_sum(&z.s));
        for j in 0..=50 {
            let g = j as f64 / 50.0;
            let w = FactorState {
                p: &z.p + &((&br.bp - &z.p) * g),
                q: &z.q + &((&br.bq - &z.q) * g),
                s: &z.s + &((&br.bs - &z.s) * g),
            };
            let want = smooth(&data, &w) - f0 + g * dg;
            assert!(
                (phi(&p, g) - want).abs() <= 1e-9 * f0.max(1.0),
                "seed {seed}, gamma {g}: {} vs {want}",
                phi(&p, g)
            );
            // convexity of the l1 term puts the true objective below the bound
            let actual = objective(&data, &w) - objective(&data, &z);
            assert!(actual <= phi(&p, g) + 1e-9 * f0.max(1.0));
        }
    }
}

fn poly_strategy() -> impl Strategy<Value = LineSearchPoly<f64>> {
    (0.0..50.0f64, -100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64)
        .prop_map(|(a, b, c, d)| LineSearchPoly::new(a, b, c, d))
}

proptest! {
    #[test]
    fn step_is_a_descending_point_of_the_unit_interval(p in poly_strategy()) {
        let st = exact_step(&p).unwrap();
        prop_assert!((0.0..=1.0).contains(&st.gamma));
        let v = p.eval(st.gamma);
        let tol = 1e-12 * scale(&p);
        prop_assert!(v <= tol);
        prop_assert!(v <= p.eval(1.0) + tol);
        for &c in &st.candidates {
            prop_assert!(v <= p.eval(c) + tol);
        }
    }

    #[test]
    fn step_is_invariant_to_positive_scaling(p in poly_strategy(), e in -20i32..20) {
        let k = 2f64.powi(e);
        prop_assert_eq!(exact_step(&p).unwrap().gamma, exact_step(&p.scaled(k)).unwrap().gamma);
    }

    #[test]
    fn reported_roots_are_roots(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64, d in -10.0..10.0f64) {
        if let CubicRoots::Roots(r) = cubic_real_roots(a, b, c, d) {
            for x in r {
                let v = ((a * x + b) * x + c) * x + d;
                let size = ((a * x).abs() * x.abs() + b.abs() * x.abs() + c.abs()) * x.abs() + d.abs();
                prop_assert!(v.abs() <= 1e-9 * size.max(1.0), "x={} v={}", x, v);
            }
        }
    }
}
