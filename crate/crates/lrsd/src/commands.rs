//! The `generate`, `solve` and `compare` commands.
//!
//! `solve` and `compare` write into `output_dir`:
//!
//! | file                          | content                                     |
//! |-------------------------------|---------------------------------------------|
//! | `<run>.csv`                   | trace of one algorithm (see [`crate::report`]) |
//! | `<run>_P.mat`, `_Q.mat`, `_S.mat` | final state                             |
//! | `<run>.msglog`                | distributed runs with `replay_log`          |
//! | `summary.json`                | stop reasons, final values, `F*`            |
//! | `compare.csv`                 | `compare` only: all traces in one file      |
//! | `rel_error_vs_iteration.svg`, `rel_error_vs_time.svg` | when `svg` is in `emit` |
//!
//! Each `.msglog` entry is a u64 LE byte length followed by one encoded
//! message of [`lrsd_core::distributed::Message`].
//!
//! With an inline `generate` instance the bundle goes to
//! `<output_dir>/instance` and is reused while its spec is unchanged.

use std::fs;
use std::path::{Path, PathBuf};

use lrsd_core::datagen::{generate, GenSpec};
use serde::Serialize;

use crate::bundle::{self, Bundle, ReferenceValue};
use crate::config::{Emit, ExperimentConfig, InstanceSource};
use crate::error::CliError;
use crate::matfile;
use crate::report;
use crate::run::{self, RunResult};
use crate::svg::{Chart, Series};

pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPARE_CSV: &str = "compare.csv";
pub const ITER_SVG: &str = "rel_error_vs_iteration.svg";
pub const TIME_SVG: &str = "rel_error_vs_time.svg";

pub fn parse_spec(text: &str) -> Result<GenSpec, CliError> {
    let spec: GenSpec =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid spec: {e}")))?;
    spec.validate().map_err(|e| CliError::Usage(format!("invalid spec: {e}")))?;
    Ok(spec)
}

pub fn generate_into(spec: &GenSpec, out: &Path) -> Result<bundle::Meta, CliError> {
    let inst = generate::<f64>(spec)?;
    bundle::write_bundle(out, spec, &inst)
}

pub fn cmd_generate(spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::io(spec_path, e))?;
    let spec = parse_spec(&text)?;
    let meta = generate_into(&spec, out)?;
    log::info!(
        "wrote {}: N={} K={} I={} lambda={:e} mu={:e}",
        out.display(),
        meta.dims.n,
        meta.dims.k,
        meta.dims.i,
        meta.lambda,
        meta.mu
    );
    Ok(())
}

fn load_instance(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    match &cfg.instance {
        InstanceSource::Path(dir) => bundle::read_bundle(dir),
        InstanceSource::Generate(spec) => {
            let dir = cfg.output_dir.join("instance");
            let fresh = match bundle::read_meta(&dir) {
                Ok(meta) => meta.spec != *spec,
                Err(_) => true,
            };
            if fresh {
                generate_into(spec, &dir)?;
            }
            bundle::read_bundle(&dir)
        }
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    name: &'a str,
    algorithm: &'a str,
    stop: &'a str,
    iterations: usize,
    initial_objective: f64,
    final_objective: f64,
    final_rel_error: f64,
    csv: Option<String>,
}

#[derive(Serialize)]
struct Summary<'a> {
    instance: String,
    f_star: f64,
    reference_key: &'a str,
    reference: &'a ReferenceValue,
    runs: Vec<RunSummary<'a>>,
}

/// Everything produced by one `solve` or `compare` invocation.
pub struct Experiment {
    pub runs: Vec<RunResult>,
    pub reference: ReferenceValue,
    pub f_star: f64,
    pub written: Vec<PathBuf>,
}

fn write_file(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn write_runs(cfg: &ExperimentConfig, runs: &[RunResult], f_star: f64, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    for r in runs {
        if cfg.emit.contains(&Emit::Csv) {
            write_file(dir.join(format!("{}.csv", r.name)), &report::trace_csv(&r.trace, f_star), written)?;
        }
        for (block, m) in [("P", &r.state.p), ("Q", &r.state.q), ("S", &r.state.s)] {
            let path = dir.join(format!("{}_{block}.mat", r.name));
            matfile::write(&path, m)?;
            written.push(path);
        }
        if let Some(log) = &r.messages {
            let mut bytes = Vec::with_capacity(log.iter().map(|m| m.len() + 8).sum());
            for m in log {
                bytes.extend_from_slice(&(m.len() as u64).to_le_bytes());
                bytes.extend_from_slice(m);
            }
            let path = dir.join(format!("{}.msglog", r.name));
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(())
}

fn footer(f_star: f64) -> String {
    format!("rel_error = (F - F*) / |F*|, F* = {f_star:.10e}: minimum objective over all runs and the extended reference run")
}

fn write_charts(cfg: &ExperimentConfig, runs: &[RunResult], f_star: f64, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let note = footer(f_star);
    let series = |x: fn(&lrsd_core::IterationTrace<f64>) -> f64| -> Vec<Series<'_>> {
        runs.iter()
            .map(|r| Series {
                name: &r.name,
                points: r.trace.iter().map(|t| (x(t), report::rel_error(t.objective, f_star))).collect(),
            })
            .collect()
    };
    let by_iter = Chart {
        title: "Relative error in objective value versus iterations",
        x_label: "iteration",
        y_label: "relative error",
        footer: &note,
        series: series(|t| t.iter as f64),
    };
    let time_label = if cfg.timing {
        "solver time (s)"
    } else {
        "solver time (s), timing disabled"
    };
    let by_time = Chart {
        title: "Relative error in objective value versus CPU time",
        x_label: time_label,
        y_label: "relative error",
        footer: &note,
        series: series(|t| t.elapsed_seconds),
    };
    write_file(cfg.output_dir.join(ITER_SVG), &by_iter.render(), written)?;
    write_file(cfg.output_dir.join(TIME_SVG), &by_time.render(), written)
}

/// Runs every configured algorithm, in order, from the same starting point.
pub fn run_experiment(cfg: &ExperimentConfig, compare: bool) -> Result<Experiment, CliError> {
    if compare && cfg.algorithms.len() < 2 {
        return Err(CliError::Usage(format!(
            "field `algorithms`: compare needs at least 2 algorithms, got {}",
            cfg.algorithms.len()
        )));
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    let mut bundle = load_instance(cfg)?;
    let z0 = run::initial_state(&bundle.data, &cfg.init);

    let mut runs = Vec::with_capacity(cfg.algorithms.len());
    for (name, algo) in cfg.run_names().into_iter().zip(&cfg.algorithms) {
        log::info!("running {name}");
        let r = run::run_algorithm(&name, &bundle.data, &z0, algo, cfg.timing)?;
        log::info!("{name}: {} iterations, {}, objective {:e}", r.trace.len(), r.stop, r.final_objective());
        runs.push(r);
    }
    let (key, reference) = run::reference_for(&mut bundle, cfg, &z0)?;
    let f_star = report::f_star(&runs, reference.objective);

    let mut written = Vec::new();
    write_runs(cfg, &runs, f_star, &mut written)?;
    if compare && cfg.emit.contains(&Emit::Csv) {
        write_file(cfg.output_dir.join(COMPARE_CSV), &report::combined_csv(&runs, f_star), &mut written)?;
    }
    if cfg.emit.contains(&Emit::Svg) {
        write_charts(cfg, &runs, f_star, &mut written)?;
    }

    let summary = Summary {
        instance: bundle.dir.display().to_string(),
        f_star,
        reference_key: &key,
        reference: &reference,
        runs: runs
            .iter()
            .map(|r| RunSummary {
                name: &r.name,
                algorithm: r.algorithm,
                stop: r.stop,
                iterations: r.trace.len(),
                initial_objective: r.initial_objective,
                final_objective: r.final_objective(),
                final_rel_error: report::rel_error(r.final_objective(), f_star),
                csv: cfg.emit.contains(&Emit::Csv).then(|| format!("{}.csv", r.name)),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_file(cfg.output_dir.join(SUMMARY_FILE), &text, &mut written)?;

    Ok(Experiment {
        runs,
        reference,
        f_star,
        written,
    })
}

pub fn cmd_solve(config: &Path) -> Result<Experiment, CliError> {
    run_experiment(&ExperimentConfig::load(config)?, false)
}

pub fn cmd_compare(config: &Path) -> Result<Experiment, CliError> {
    run_experiment(&ExperimentConfig::load(config)?, true)
}
