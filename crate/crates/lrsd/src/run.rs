//! Running the configured algorithms and the extended reference run.

use lrsd_core::baselines::{run_baseline, Baseline, Budget};
use lrsd_core::distributed::{distributed_solve, DistributedConfig};
use lrsd_core::pbr::pbr_step;
use lrsd_core::{solve, FactorState, IterationTrace, ProblemData, SolverConfig, StepRule, StopReason};

use crate::bundle::{self, Bundle, ReferenceValue};
use crate::config::{AlgorithmConfig, ExperimentConfig, InitConfig, InitKind, ReferenceConfig};
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub algorithm: &'static str,
    pub trace: Vec<IterationTrace<f64>>,
    pub initial_objective: f64,
    pub state: FactorState<f64>,
    pub stop: &'static str,
    /// Encoded messages of a distributed run, when requested.
    pub messages: Option<Vec<Vec<u8>>>,
}

impl RunResult {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(self.initial_objective, |t| t.objective)
    }

    pub fn min_objective(&self) -> Option<f64> {
        self.trace.iter().map(|t| t.objective).reduce(f64::min)
    }
}

pub fn initial_state(data: &ProblemData<f64>, init: &InitConfig) -> FactorState<f64> {
    match init.kind {
        InitKind::Gaussian => FactorState::gaussian(data, init.std, init.seed),
        InitKind::Zeros => FactorState::zeros(data),
    }
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::Converged => "converged",
        StopReason::Budget => "budget",
    }
}

pub fn run_algorithm(
    name: &str,
    data: &ProblemData<f64>,
    z0: &FactorState<f64>,
    algo: &AlgorithmConfig,
    timing: bool,
) -> Result<RunResult, CliError> {
    let solver_cfg = |delta: f64, max_iters: usize, stepsize: StepRule<f64>| SolverConfig {
        delta,
        max_iters,
        stepsize,
        trace_timing: timing,
    };
    let baseline = |b: Baseline<f64>, max_iters: usize, max_seconds: Option<f64>| {
        let budget = max_seconds.map_or(Budget::Iterations(max_iters), Budget::Seconds);
        run_baseline(data, b, budget, z0, timing)
    };
    let mut messages = None;
    let (trace, initial_objective, state, stop) = match *algo {
        AlgorithmConfig::Pbr {
            delta,
            max_iters,
            stepsize,
            ..
        } => {
            let out = solve(data, z0, &solver_cfg(delta, max_iters, stepsize))?;
            (out.trace, out.initial_objective, out.state, stop_name(out.stop))
        }
        AlgorithmConfig::PbrDistributed {
            nodes,
            delta,
            max_iters,
            stepsize,
            replay_log,
            ..
        } => {
            let dcfg = DistributedConfig {
                record_messages: replay_log,
                ..DistributedConfig::new(nodes)
            };
            let out = distributed_solve(data, z0, &solver_cfg(delta, max_iters, stepsize), &dcfg)?;
            if replay_log {
                messages = Some(out.log);
            }
            let o = out.outcome;
            (o.trace, o.initial_objective, o.state, stop_name(o.stop))
        }
        AlgorithmConfig::Bcd {
            max_iters, max_seconds, ..
        } => {
            let out = baseline(Baseline::Bcd, max_iters, max_seconds)?;
            (out.trace, out.initial_objective, out.state, "budget")
        }
        AlgorithmConfig::Admm {
            c,
            max_iters,
            max_seconds,
            ..
        } => {
            let out = baseline(Baseline::Admm { c }, max_iters, max_seconds)?;
            (out.trace, out.initial_objective, out.state, "budget")
        }
    };
    Ok(RunResult {
        name: name.to_owned(),
        algorithm: algo.kind(),
        trace,
        initial_objective,
        state,
        stop,
        messages,
    })
}

/// Iteration budget of the reference run: `multiplier` times the largest
/// configured budget.
pub fn reference_budget(cfg: &ExperimentConfig) -> usize {
    let most = cfg.algorithms.iter().map(AlgorithmConfig::max_iters).max().unwrap_or(0);
    most.saturating_mul(cfg.reference.multiplier)
}

pub fn reference_key(init: &InitConfig, budget: usize, rc: &ReferenceConfig) -> String {
    let init = match init.kind {
        InitKind::Gaussian => format!("gaussian(std={:?},seed={})", init.std, init.seed),
        InitKind::Zeros => "zeros".to_owned(),
    };
    format!(
        "pbr-exact init={init} budget={budget} delta={:?} patience={}",
        rc.delta, rc.patience
    )
}

/// Exact-line-search PBR from `z0` for up to `budget` iterations. Stops
/// early when the stationarity gap reaches `rc.delta` or when `rc.patience`
/// consecutive iterations bring no strict decrease. Returns the smallest
/// objective seen.
pub fn reference_run(
    data: &ProblemData<f64>,
    z0: &FactorState<f64>,
    budget: usize,
    rc: &ReferenceConfig,
) -> Result<ReferenceValue, CliError> {
    let mut z = z0.clone();
    let mut best = lrsd_core::eval_objective(data, &z)?;
    let mut stall = 0;
    let mut stop = "budget";
    let mut iterations = 0;
    while iterations < budget {
        let (next, t) = pbr_step(data, &z, StepRule::ExactLineSearch)?;
        if t.stationarity <= rc.delta {
            stop = "converged";
            break;
        }
        iterations += 1;
        z = next;
        if t.objective < best {
            best = t.objective;
            stall = 0;
        } else {
            stall += 1;
            if stall >= rc.patience {
                stop = "stagnated";
                break;
            }
        }
    }
    Ok(ReferenceValue {
        objective: best,
        iterations,
        stop: stop.to_owned(),
    })
}

/// Reference value for the bundle, from the cache in `meta.json` or from a
/// fresh run that is then cached.
pub fn reference_for(
    bundle: &mut Bundle,
    cfg: &ExperimentConfig,
    z0: &FactorState<f64>,
) -> Result<(String, ReferenceValue), CliError> {
    let budget = reference_budget(cfg);
    let key = reference_key(&cfg.init, budget, &cfg.reference);
    if let Some(v) = bundle.meta.references.get(&key) {
        log::info!("reference value {:e} from cache", v.objective);
        return Ok((key, v.clone()));
    }
    log::info!("reference run: up to {budget} iterations");
    let v = reference_run(&bundle.data, z0, budget, &cfg.reference)?;
    log::info!("reference value {:e} after {} iterations ({})", v.objective, v.iterations, v.stop);
    bundle.meta.references.insert(key.clone(), v.clone());
    bundle::write_meta(&bundle.dir, &bundle.meta)?;
    Ok((key, v))
}
