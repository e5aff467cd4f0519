//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "instance": { "path": "bundle" },
//!   "algorithms": [
//!     { "algorithm": "pbr", "delta": 1e-8, "max_iters": 2000 },
//!     { "algorithm": "bcd", "max_iters": 200 },
//!     { "algorithm": "admm", "c": 100.0, "max_iters": 1000 },
//!     { "algorithm": "pbr-distributed", "nodes": 4, "delta": 1e-8, "max_iters": 2000 }
//!   ],
//!   "output_dir": "out",
//!   "emit": ["csv", "svg"],
//!   "init": { "kind": "gaussian", "std": 0.1, "seed": 1 },
//!   "timing": true
//! }
//! ```
//!
//! `instance` is either `{ "path": DIR }` (a bundle written by `generate`) or
//! `{ "generate": SPEC }` with the same fields as a spec file. Relative paths
//! are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use lrsd_core::datagen::GenSpec;
use lrsd_core::StepRule;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub instance: InstanceSource,
    pub algorithms: Vec<AlgorithmConfig>,
    pub output_dir: PathBuf,
    #[serde(default = "default_emit")]
    pub emit: Vec<Emit>,
    #[serde(default)]
    pub init: InitConfig,
    /// Record wall time; when false the `elapsed_seconds` column is zero and
    /// all outputs are reproducible byte for byte.
    #[serde(default = "yes")]
    pub timing: bool,
    #[serde(default)]
    pub reference: ReferenceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Path(PathBuf),
    Generate(GenSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Pbr {
        #[serde(default)]
        label: Option<String>,
        delta: f64,
        max_iters: usize,
        #[serde(default = "exact")]
        stepsize: StepRule<f64>,
    },
    Bcd {
        #[serde(default)]
        label: Option<String>,
        max_iters: usize,
        #[serde(default)]
        max_seconds: Option<f64>,
    },
    Admm {
        #[serde(default)]
        label: Option<String>,
        c: f64,
        max_iters: usize,
        #[serde(default)]
        max_seconds: Option<f64>,
    },
    PbrDistributed {
        #[serde(default)]
        label: Option<String>,
        nodes: usize,
        delta: f64,
        max_iters: usize,
        #[serde(default = "exact")]
        stepsize: StepRule<f64>,
        /// Write every exchanged message to `<name>.msglog`.
        #[serde(default)]
        replay_log: bool,
    },
}

impl AlgorithmConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            AlgorithmConfig::Pbr { .. } => "pbr",
            AlgorithmConfig::Bcd { .. } => "bcd",
            AlgorithmConfig::Admm { .. } => "admm",
            AlgorithmConfig::PbrDistributed { .. } => "pbr-distributed",
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            AlgorithmConfig::Pbr { label, .. }
            | AlgorithmConfig::Bcd { label, .. }
            | AlgorithmConfig::Admm { label, .. }
            | AlgorithmConfig::PbrDistributed { label, .. } => label.as_deref(),
        }
    }

    pub fn max_iters(&self) -> usize {
        match *self {
            AlgorithmConfig::Pbr { max_iters, .. }
            | AlgorithmConfig::Bcd { max_iters, .. }
            | AlgorithmConfig::Admm { max_iters, .. }
            | AlgorithmConfig::PbrDistributed { max_iters, .. } => max_iters,
        }
    }

    fn validate(&self, idx: usize) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(format!("algorithms[{idx}]: {msg}")));
        match *self {
            AlgorithmConfig::Pbr { delta, stepsize, .. }
            | AlgorithmConfig::PbrDistributed { delta, stepsize, .. } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    return bad(format!("field `delta` must be positive, got {delta}"));
                }
                if let StepRule::Constant(g) = stepsize {
                    if !(g > 0.0 && g <= 1.0) {
                        return bad(format!("field `stepsize` constant must lie in (0, 1], got {g}"));
                    }
                }
            }
            AlgorithmConfig::Admm { c, .. } => {
                if !(c > 0.0 && c.is_finite()) {
                    return bad(format!("field `c` must be positive, got {c}"));
                }
            }
            AlgorithmConfig::Bcd { .. } => {}
        }
        if let Some(label) = self.label() {
            let ok = !label.is_empty()
                && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
                && !label.starts_with('.');
            if !ok {
                return bad(format!("field `label` must be a nonempty name of [A-Za-z0-9._-], got {label:?}"));
            }
        }
        if let AlgorithmConfig::PbrDistributed { nodes, .. } = *self {
            if nodes == 0 {
                return bad("field `nodes` must be at least 1".into());
            }
        }
        if let AlgorithmConfig::Bcd { max_seconds: Some(s), .. } | AlgorithmConfig::Admm { max_seconds: Some(s), .. } = *self {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("field `max_seconds` must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Csv,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Gaussian,
    Zeros,
}

/// Starting point shared by every algorithm of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub kind: InitKind,
    #[serde(default = "default_std")]
    pub std: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            kind: InitKind::Gaussian,
            std: default_std(),
            seed: 0,
        }
    }
}

/// Extended PBR run that supplies the reference objective `F*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Budget as a multiple of the largest configured `max_iters`.
    #[serde(default = "default_multiplier")]
    pub multiplier: usize,
    #[serde(default = "default_ref_delta")]
    pub delta: f64,
    /// Stop after this many consecutive iterations without a strict decrease.
    #[serde(default = "default_patience")]
    pub patience: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            multiplier: default_multiplier(),
            delta: default_ref_delta(),
            patience: default_patience(),
        }
    }
}

fn default_emit() -> Vec<Emit> {
    vec![Emit::Csv, Emit::Svg]
}

fn yes() -> bool {
    true
}

fn exact() -> StepRule<f64> {
    StepRule::ExactLineSearch
}

fn default_std() -> f64 {
    0.1
}

fn default_multiplier() -> usize {
    10
}

fn default_ref_delta() -> f64 {
    1e-13
}

fn default_patience() -> usize {
    20
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        if let InstanceSource::Path(p) = &mut self.instance {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "field `schema_version`: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.algorithms.is_empty() {
            return Err(CliError::Usage("field `algorithms`: at least one algorithm is required".into()));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            a.validate(i)?;
        }
        if let InstanceSource::Generate(spec) = &self.instance {
            spec.validate().map_err(|e| CliError::Usage(format!("instance.generate: {e}")))?;
        }
        if !(self.init.std > 0.0 && self.init.std.is_finite()) && self.init.kind == InitKind::Gaussian {
            return Err(CliError::Usage(format!("field `init.std` must be positive, got {}", self.init.std)));
        }
        if self.reference.multiplier == 0 || !(self.reference.delta > 0.0) {
            return Err(CliError::Usage("field `reference`: multiplier and delta must be positive".into()));
        }
        Ok(())
    }

    /// Output names: the label, or the algorithm kind with a numeric suffix
    /// when the kind repeats.
    pub fn run_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::with_capacity(self.algorithms.len());
        for (i, a) in self.algorithms.iter().enumerate() {
            let base = a.label().map(str::to_owned).unwrap_or_else(|| {
                let repeats = self.algorithms.iter().filter(|b| b.kind() == a.kind()).count() > 1;
                if repeats {
                    format!("{}-{}", a.kind(), i + 1)
                } else {
                    a.kind().to_owned()
                }
            });
            let mut name = base.clone();
            let mut n = 2;
            while names.contains(&name) {
                name = format!("{base}-{n}");
                n += 1;
            }
            names.push(name);
        }
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "schema_version": 1,
        "instance": { "generate": { "n": 10, "k": 12, "i": 8, "seed": 3 } },
        "algorithms": [
            { "algorithm": "pbr", "delta": 1e-8, "max_iters": 50 },
            { "algorithm": "admm", "c": 100.0, "max_iters": 20 },
            { "algorithm": "pbr-distributed", "nodes": 2, "delta": 1e-8, "max_iters": 50,
              "stepsize": { "constant": 0.5 } },
            { "algorithm": "admm", "c": 10.0, "max_iters": 20, "label": "admm-small-c" }
        ],
        "output_dir": "out",
        "emit": ["csv"],
        "timing": false
    }"#;

    #[test]
    fn parses_example() {
        let cfg = ExperimentConfig::from_json(EXAMPLE).unwrap();
        assert_eq!(cfg.algorithms.len(), 4);
        assert_eq!(cfg.emit, vec![Emit::Csv]);
        assert_eq!(cfg.init, InitConfig::default());
        assert_eq!(cfg.run_names(), vec!["pbr", "admm-2", "pbr-distributed", "admm-small-c"]);
        match &cfg.instance {
            InstanceSource::Generate(spec) => assert_eq!((spec.n, spec.k, spec.rho_true), (10, 12, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_fields() {
        let bad_version = EXAMPLE.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(ExperimentConfig::from_json(&bad_version), Err(CliError::Usage(m)) if m.contains("schema_version")));
        let bad_k = EXAMPLE.replace("\"k\": 12", "\"k\": 0");
        assert!(matches!(ExperimentConfig::from_json(&bad_k), Err(CliError::Usage(m)) if m.contains("`k`")));
        let unknown = EXAMPLE.replace("\"timing\": false", "\"timing\": false, \"colour\": 1");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
        let bad_c = EXAMPLE.replace("\"c\": 100.0", "\"c\": -1.0");
        assert!(matches!(ExperimentConfig::from_json(&bad_c), Err(CliError::Usage(m)) if m.contains("`c`")));
    }
}
