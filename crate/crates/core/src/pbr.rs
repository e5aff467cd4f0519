//! Parallel best-response iteration with exact line search.
//!
//! Each iteration computes the best response `BZ` at the current iterate,
//! picks a step `gamma` in `[0, 1]` and moves every block at once:
//! `Z <- Z + gamma (BZ - Z)`. The run stops as soon as
//! `|tr((BZ - Z)^T grad f(Z))| <= delta`, returning the iterate at which the
//! test passed.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::best_response::{self, BestResponse};
use crate::error::{Error, Result};
use crate::line_search::{coefficients_from_anchor, exact_step};
use crate::linalg::{l1, l1_change};
use crate::model::{directional_derivative, Anchor, FactorState, ProblemData};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule<T> {
    ExactLineSearch,
    /// Fixed step in `(0, 1]`.
    Constant(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Stop tolerance on the stationarity gap.
    pub delta: T,
    pub max_iters: usize,
    pub stepsize: StepRule<T>,
    /// Record wall time per iteration; when off the elapsed column is zero.
    pub trace_timing: bool,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(delta: T, max_iters: usize) -> Self {
        Self {
            delta,
            max_iters,
            stepsize: StepRule::ExactLineSearch,
            trace_timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "delta={} must be positive",
                self.delta
            )));
        }
        if let StepRule::Constant(g) = self.stepsize {
            if !(g > T::zero() && g <= T::one()) {
                return Err(Error::InvalidArgument(format!(
                    "constant step {g} must lie in (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// One row of a convergence trace.
///
/// `objective` is the objective after the iteration; `stationarity` is the
/// stop metric at the iterate the iteration started from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace<T> {
    pub iter: usize,
    pub objective: T,
    pub stationarity: T,
    pub gamma: T,
    pub elapsed_seconds: f64,
    /// `tr((BZ - Z)^T grad f) + g(bS) - g(S)`; logged, never used to stop.
    pub surrogate_gap: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Budget,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome<T> {
    pub state: FactorState<T>,
    pub trace: Vec<IterationTrace<T>>,
    pub stop: StopReason,
    pub initial_objective: T,
}

impl<T: Scalar> SolveOutcome<T> {
    pub fn final_objective(&self) -> T {
        self.trace
            .last()
            .map_or(self.initial_objective, |t| t.objective)
    }
}

/// Per-iterate quantities shared by the monolithic and the distributed loop.
pub(crate) struct Evaluated<T> {
    pub br: BestResponse<T>,
    pub stationarity: T,
    pub surrogate_gap: T,
}

pub(crate) fn evaluate<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    anchor: &Anchor<T>,
) -> Result<Evaluated<T>> {
    let grad = anchor.gradient(data, z);
    let br = best_response::from_anchor(data, z, anchor)?;
    let dd = directional_derivative(z, &grad, &br.bp, &br.bq, &br.bs);
    let surrogate_gap = dd + data.mu() * l1_change(&z.s.view(), &br.bs.view());
    Ok(Evaluated {
        br,
        stationarity: dd.abs(),
        surrogate_gap,
    })
}

pub(crate) fn objective_at<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    anchor: &Anchor<T>,
) -> Result<T> {
    let obj = anchor.f(data, z) + data.mu() * l1(&z.s.view());
    if obj.is_finite() {
        Ok(obj)
    } else {
        Err(Error::Numeric(format!("objective became {obj}")))
    }
}

fn choose_gamma<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    br: &BestResponse<T>,
    anchor: &Anchor<T>,
    rule: StepRule<T>,
) -> Result<T> {
    match rule {
        StepRule::ExactLineSearch => {
            let poly = coefficients_from_anchor(data, z, br, anchor);
            Ok(exact_step(&poly)?.gamma)
        }
        StepRule::Constant(g) => Ok(g),
    }
}

/// A single unconditional iteration from `z`.
pub fn pbr_step<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    rule: StepRule<T>,
) -> Result<(FactorState<T>, IterationTrace<T>)> {
    z.check(data)?;
    let start = Instant::now();
    let anchor = Anchor::new(data, z);
    let ev = evaluate(data, z, &anchor)?;
    let gamma = choose_gamma(data, z, &ev.br, &anchor, rule)?;
    let next = z.moved_toward(&ev.br.bp, &ev.br.bq, &ev.br.bs, gamma);
    let objective = objective_at(data, &next, &Anchor::new(data, &next))?;
    let trace = IterationTrace {
        iter: 1,
        objective,
        stationarity: ev.stationarity,
        gamma,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        surrogate_gap: ev.surrogate_gap,
    };
    Ok((next, trace))
}

/// Runs the iteration from `z0` until the stationarity gap drops to
/// `cfg.delta` or `cfg.max_iters` iterations have been spent.
pub fn solve<T: Scalar>(
    data: &ProblemData<T>,
    z0: &FactorState<T>,
    cfg: &SolverConfig<T>,
) -> Result<SolveOutcome<T>> {
    cfg.validate()?;
    z0.check(data)?;
    let clock = Instant::now();
    let elapsed = || {
        if cfg.trace_timing {
            clock.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };

    let mut z = z0.clone();
    let mut anchor = Anchor::new(data, &z);
    let mut objective = objective_at(data, &z, &anchor)?;
    let initial_objective = objective;
    let mut trace = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut stop = StopReason::Budget;

    for iter in 1..=cfg.max_iters {
        let ev = evaluate(data, &z, &anchor)?;
        if ev.stationarity <= cfg.delta {
            trace.push(IterationTrace {
                iter,
                objective,
                stationarity: ev.stationarity,
                gamma: T::zero(),
                elapsed_seconds: elapsed(),
                surrogate_gap: ev.surrogate_gap,
            });
            stop = StopReason::Converged;
            break;
        }
        let gamma = choose_gamma(data, &z, &ev.br, &anchor, cfg.stepsize)?;
        z = z.moved_toward(&ev.br.bp, &ev.br.bq, &ev.br.bs, gamma);
        anchor = Anchor::new(data, &z);
        objective = objective_at(data, &z, &anchor)?;
        trace.push(IterationTrace {
            iter,
            objective,
            stationarity: ev.stationarity,
            gamma,
            elapsed_seconds: elapsed(),
            surrogate_gap: ev.surrogate_gap,
        });
    }

    Ok(SolveOutcome {
        state: z,
        trace,
        stop,
        initial_objective,
    })
}
