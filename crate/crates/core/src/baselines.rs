//! Comparison algorithms: cyclic block coordinate descent with a sequential
//! element-wise sweep over `S`, and ADMM on the split `A = B` of the sparse
//! variable.

use std::time::{Duration, Instant};

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::best_response::{bp_rows, gram_cols, soft_threshold};
use crate::error::{Error, Result};
use crate::linalg::{add_diag, fro2, Cholesky};
use crate::model::{residual, residual_from, Anchor, FactorState, ProblemData};
use crate::pbr::{evaluate, objective_at, IterationTrace};
use crate::scalar::Scalar;

/// BCD iterate with the residual `R = PQ + DS - Y` kept alongside.
#[derive(Debug, Clone)]
pub struct BcdState<T> {
    pub state: FactorState<T>,
    pub residual: Array2<T>,
}

impl<T: Scalar> BcdState<T> {
    pub fn new(data: &ProblemData<T>, state: FactorState<T>) -> Result<Self> {
        let residual = residual(data, &state)?;
        Ok(Self { state, residual })
    }

    /// Recompute the cached residual from scratch.
    pub fn refresh(&mut self, data: &ProblemData<T>) {
        let ds = data.d().dot(&self.state.s);
        self.residual = residual_from(data, &self.state, &ds);
    }
}

fn q_update<T: Scalar>(
    data: &ProblemData<T>,
    p: &Array2<T>,
    y_minus_da: &Array2<T>,
) -> Result<Array2<T>> {
    let chol = Cholesky::new(&gram_cols(&p.view(), data.lambda()).view())?;
    chol.solve_left(&p.t().dot(y_minus_da).view())
}

/// Exact minimization over `P` with `(Q, S)` fixed.
pub fn bcd_update_p<T: Scalar>(data: &ProblemData<T>, st: &mut BcdState<T>) -> Result<()> {
    let y_minus_ds = &data.y() - &data.d().dot(&st.state.s);
    st.state.p = bp_rows(&y_minus_ds.view(), &st.state.q.view(), data.lambda())?;
    st.refresh(data);
    Ok(())
}

/// Exact minimization over `Q` with `(P, S)` fixed.
pub fn bcd_update_q<T: Scalar>(data: &ProblemData<T>, st: &mut BcdState<T>) -> Result<()> {
    let y_minus_ds = &data.y() - &data.d().dot(&st.state.s);
    st.state.q = q_update(data, &st.state.p, &y_minus_ds)?;
    st.refresh(data);
    Ok(())
}

/// Exact minimization over the single entry `s_ik`, everything else fixed.
/// Keeps the residual current with a rank-one column update.
pub fn bcd_update_s_entry<T: Scalar>(
    data: &ProblemData<T>,
    st: &mut BcdState<T>,
    i: usize,
    k: usize,
) {
    let d = data.d();
    let col = d.column(i);
    let corr = col
        .iter()
        .zip(st.residual.column(k).iter())
        .fold(T::zero(), |acc, (&dn, &rn)| acc + dn * rn);
    let dd = data.ddiag()[i];
    let old = st.state.s[[i, k]];
    let new = soft_threshold(dd * old - corr, data.mu()) / dd;
    if new != old {
        let delta = new - old;
        Zip::from(st.residual.column_mut(k))
            .and(&col)
            .for_each(|r, &dn| *r = *r + dn * delta);
        st.state.s[[i, k]] = new;
    }
}

/// Sequential sweep over every entry of `S` in row-major order.
pub fn bcd_update_s<T: Scalar>(data: &ProblemData<T>, st: &mut BcdState<T>) {
    let (n, k_cols) = st.residual.dim();
    let atoms = data.num_atoms();
    // Contiguous copies of the columns of D and R; same arithmetic as
    // bcd_update_s_entry, only the memory layout differs.
    let dt = data.d().t().as_standard_layout().into_owned();
    let mut rt = st.residual.t().as_standard_layout().into_owned();
    let mu = data.mu();
    let ddiag = data.ddiag();
    for i in 0..atoms {
        let d_i = dt.row(i);
        let d_i = d_i.as_slice().expect("standard layout");
        let dd = ddiag[i];
        for k in 0..k_cols {
            let mut r_k = rt.row_mut(k);
            let r_k = r_k.as_slice_mut().expect("standard layout");
            let corr = d_i
                .iter()
                .zip(r_k.iter())
                .fold(T::zero(), |acc, (&dn, &rn)| acc + dn * rn);
            let old = st.state.s[[i, k]];
            let new = soft_threshold(dd * old - corr, mu) / dd;
            if new != old {
                let delta = new - old;
                for (r, &dn) in r_k.iter_mut().zip(d_i.iter()) {
                    *r = *r + dn * delta;
                }
                st.state.s[[i, k]] = new;
            }
        }
    }
    debug_assert_eq!(rt.dim(), (k_cols, n));
    st.residual = rt.t().as_standard_layout().into_owned();
}

/// One full BCD cycle: `P`, then `Q`, then every entry of `S` in turn.
pub fn bcd_sweep<T: Scalar>(data: &ProblemData<T>, st: &mut BcdState<T>) -> Result<()> {
    bcd_update_p(data, st)?;
    bcd_update_q(data, st)?;
    bcd_update_s(data, st);
    Ok(())
}

/// ADMM iterate for the split problem with `A = B`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T> {
    pub p: Array2<T>,
    pub q: Array2<T>,
    /// Copy of `S` in the data-fit term.
    pub a: Array2<T>,
    /// Copy of `S` in the l1 term.
    pub b: Array2<T>,
    /// Dual variable.
    pub pi: Array2<T>,
    /// Penalty parameter.
    pub c: T,
}

impl<T: Scalar> AdmmState<T> {
    /// `P`, `Q` from `z`; `A = B = S`; zero dual.
    pub fn from_factors(z: &FactorState<T>, c: T) -> Self {
        Self {
            p: z.p.clone(),
            q: z.q.clone(),
            a: z.s.clone(),
            b: z.s.clone(),
            pi: Array2::zeros(z.s.dim()),
            c,
        }
    }

    /// The factor state reported for the objective, with `S = B`.
    pub fn factors(&self) -> FactorState<T> {
        FactorState {
            p: self.p.clone(),
            q: self.q.clone(),
            s: self.b.clone(),
        }
    }

    pub fn primal_residual(&self) -> T {
        let diff = &self.a - &self.b;
        fro2(&diff.view()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        [&self.p, &self.q, &self.a, &self.b, &self.pi]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// ADMM with the `I x I` system `D^T D + c I` factored once.
#[derive(Debug, Clone)]
pub struct Admm<T> {
    c: T,
    /// `(D^T D + c I)^{-1}`
    a_system_inv: Array2<T>,
}

impl<T: Scalar> Admm<T> {
    pub fn new(data: &ProblemData<T>, c: T) -> Result<Self> {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("ADMM penalty c={c} must be positive")));
        }
        let mut sys = data.d().t().dot(&data.d());
        add_diag(&mut sys, c);
        let a_system_inv = Cholesky::new(&sys.view())?.inverse();
        Ok(Self { c, a_system_inv })
    }

    pub fn penalty(&self) -> T {
        self.c
    }

    /// One ADMM round: `(Q, B)`, then `P`, then `A`, then the dual.
    pub fn step(&self, data: &ProblemData<T>, st: &AdmmState<T>) -> Result<AdmmState<T>> {
        if st.c != self.c {
            return Err(Error::InvalidArgument(format!(
                "state penalty {} differs from solver penalty {}",
                st.c, self.c
            )));
        }
        let c = self.c;
        let inv_c = T::one() / c;
        let y_minus_da = &data.y() - &data.d().dot(&st.a);

        let q = q_update(data, &st.p, &y_minus_da)?;
        let mut b = st.a.clone();
        let tau = data.mu() * inv_c;
        Zip::from(&mut b)
            .and(&st.pi)
            .for_each(|b, &pi| *b = soft_threshold(*b + pi * inv_c, tau));

        let p = bp_rows(&y_minus_da.view(), &q.view(), data.lambda())?;

        // (D^T D + c I) A = D^T (Y - PQ) - Pi + c B
        let y_minus_pq = &data.y() - &p.dot(&q);
        let mut rhs = data.d().t().dot(&y_minus_pq);
        Zip::from(&mut rhs)
            .and(&st.pi)
            .and(&b)
            .for_each(|r, &pi, &b| *r = *r - pi + c * b);
        let a = self.a_system_inv.dot(&rhs);

        let mut pi = st.pi.clone();
        Zip::from(&mut pi)
            .and(&a)
            .and(&b)
            .for_each(|pi, &a, &b| *pi = *pi + c * (a - b));

        Ok(AdmmState { p, q, a, b, pi, c })
    }
}

/// One ADMM round, factoring the `A` system on the fly.
pub fn admm_step<T: Scalar>(data: &ProblemData<T>, st: &AdmmState<T>) -> Result<AdmmState<T>> {
    Admm::new(data, st.c)?.step(data, st)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline<T> {
    Bcd,
    Admm { c: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Iterations(usize),
    Seconds(f64),
}

/// Per-iteration ADMM quantities beyond the shared trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmDiagnostics<T> {
    pub iter: usize,
    /// `||A - B||_F`
    pub primal_residual: T,
    /// Objective evaluated with `S = A` instead of `S = B`.
    pub objective_with_a: T,
}

#[derive(Debug, Clone)]
pub struct BaselineRun<T> {
    pub state: FactorState<T>,
    pub trace: Vec<IterationTrace<T>>,
    pub initial_objective: T,
    pub admm: Vec<AdmmDiagnostics<T>>,
}

/// Runs BCD or ADMM from `z0` under `budget`.
///
/// Trace rows follow the PBR convention: `objective` after the iteration,
/// `stationarity` and `surrogate_gap` measured at the iterate the iteration
/// started from (for ADMM with `S = B`), `gamma = 1`. The time spent on
/// those diagnostics is excluded from `elapsed_seconds`.
pub fn run_baseline<T: Scalar>(
    data: &ProblemData<T>,
    algo: Baseline<T>,
    budget: Budget,
    z0: &FactorState<T>,
    trace_timing: bool,
) -> Result<BaselineRun<T>> {
    z0.check(data)?;
    let initial_objective = objective_at(data, z0, &Anchor::new(data, z0))?;
    let mut trace = Vec::new();
    let mut admm_diag = Vec::new();
    let mut work = Duration::ZERO;

    let keep_going = |iter: usize, work: Duration| match budget {
        Budget::Iterations(n) => iter <= n,
        Budget::Seconds(s) => work.as_secs_f64() < s,
    };
    let elapsed = |work: Duration| if trace_timing { work.as_secs_f64() } else { 0.0 };

    let state = match algo {
        Baseline::Bcd => {
            let mut st = BcdState::new(data, z0.clone())?;
            let mut iter = 1;
            while keep_going(iter, work) {
                let anchor = Anchor::new(data, &st.state);
                let ev = evaluate(data, &st.state, &anchor)?;
                let start = Instant::now();
                bcd_sweep(data, &mut st)?;
                work += start.elapsed();
                let objective = objective_at(data, &st.state, &Anchor::new(data, &st.state))?;
                trace.push(IterationTrace {
                    iter,
                    objective,
                    stationarity: ev.stationarity,
                    gamma: T::one(),
                    elapsed_seconds: elapsed(work),
                    surrogate_gap: ev.surrogate_gap,
                });
                iter += 1;
            }
            st.state
        }
        Baseline::Admm { c } => {
            let start = Instant::now();
            let solver = Admm::new(data, c)?;
            work += start.elapsed();
            let mut st = AdmmState::from_factors(z0, c);
            let mut iter = 1;
            while keep_going(iter, work) {
                let before = st.factors();
                let ev = evaluate(data, &before, &Anchor::new(data, &before))?;
                let start = Instant::now();
                st = solver.step(data, &st)?;
                work += start.elapsed();
                if !st.is_finite() {
                    return Err(Error::Numeric(format!(
                        "ADMM iterate became non-finite at iteration {iter}"
                    )));
                }
                let reported = st.factors();
                let objective = objective_at(data, &reported, &Anchor::new(data, &reported))?;
                let with_a = FactorState {
                    p: st.p.clone(),
                    q: st.q.clone(),
                    s: st.a.clone(),
                };
                let objective_with_a = objective_at(data, &with_a, &Anchor::new(data, &with_a))?;
                trace.push(IterationTrace {
                    iter,
                    objective,
                    stationarity: ev.stationarity,
                    gamma: T::one(),
                    elapsed_seconds: elapsed(work),
                    surrogate_gap: ev.surrogate_gap,
                });
                admm_diag.push(AdmmDiagnostics {
                    iter,
                    primal_residual: st.primal_residual(),
                    objective_with_a,
                });
                iter += 1;
            }
            st.factors()
        }
    };

    Ok(BaselineRun {
        state,
        trace,
        initial_objective,
        admm: admm_diag,
    })
}
