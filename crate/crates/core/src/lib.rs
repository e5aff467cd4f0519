//! Solvers for the factorized sparsity-regularized rank minimization problem
//!
//! ```text
//! minimize  1/2 ||PQ + DS - Y||_F^2 + lambda/2 (||P||_F^2 + ||Q||_F^2) + mu ||S||_1
//! ```
//!
//! which recovers a low-rank matrix `X = PQ` and a sparse matrix `S` from
//! measurements `Y = X + DS + V`.
//!
//! The main solver ([`pbr`]) updates all three blocks in parallel from their
//! closed-form best responses ([`best_response`]) and picks the step by an
//! exact line search whose stepsize is the minimizer of a quartic
//! ([`line_search`]). Cyclic block coordinate descent and ADMM live in
//! [`baselines`]; [`distributed`] runs the same iteration across row blocks
//! of the data; [`datagen`] builds synthetic instances.
//!
//! Everything is generic over the [`Scalar`] type; the aliases below fix it
//! to `f64` (or `f32`).

pub mod baselines;
pub mod best_response;
pub mod datagen;
pub mod distributed;
pub mod error;
pub mod line_search;
pub mod linalg;
pub mod model;
pub mod pbr;
pub mod scalar;

pub use best_response::{compute_best_response, soft_threshold, BestResponse};
pub use error::{Error, Result};
pub use line_search::{exact_step, ls_coefficients, LineSearchPoly, StepSize};
pub use model::{
    eval_approx, eval_f, eval_g, eval_objective, grad_f, stationarity_gap, FactorState,
    Gradient, ProblemData,
};
pub use pbr::{solve, IterationTrace, SolveOutcome, SolverConfig, StepRule, StopReason};
pub use scalar::Scalar;

pub type Problem = ProblemData<f64>;
pub type Problem32 = ProblemData<f32>;
pub type State = FactorState<f64>;
pub type State32 = FactorState<f32>;
pub type Response = BestResponse<f64>;
pub type Poly = LineSearchPoly<f64>;
pub type Config = SolverConfig<f64>;
pub type Trace = IterationTrace<f64>;
