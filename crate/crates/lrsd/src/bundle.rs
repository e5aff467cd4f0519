//! Instance bundles: a directory holding `Y.mat`, `D.mat`,
//! `truth_P.mat`, `truth_Q.mat`, `truth_S.mat` and `meta.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lrsd_core::datagen::{GenSpec, GeneratedInstance, GENERATOR_ID};
use lrsd_core::ProblemData;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::matfile;

pub const META_FILE: &str = "meta.json";
pub const META_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub k: usize,
    pub i: usize,
    /// Rank used by the solvers.
    pub rho: usize,
}

/// Cached objective of an extended reference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub objective: f64,
    pub iterations: usize,
    pub stop: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub format: u32,
    pub generator: String,
    pub seed: u64,
    pub dims: Dims,
    pub lambda: f64,
    pub mu: f64,
    pub spectral_norm: f64,
    pub spectral_iterations: usize,
    pub spectral_converged: bool,
    pub spec: GenSpec,
    #[serde(default)]
    pub references: BTreeMap<String, ReferenceValue>,
}

pub struct Bundle {
    pub dir: PathBuf,
    pub data: ProblemData<f64>,
    pub meta: Meta,
}

fn mat_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.mat"))
}

fn write_mat(dir: &Path, name: &str, m: &ndarray::Array2<f64>) -> Result<(), CliError> {
    matfile::write(&mat_path(dir, name), m).map_err(CliError::from)
}

fn read_mat(dir: &Path, name: &str) -> Result<ndarray::Array2<f64>, CliError> {
    let path = mat_path(dir, name);
    matfile::read(&path).map_err(|e| match e {
        matfile::MatError::Io { path, source } => CliError::Io { path, source },
        e => CliError::Format(format!("{}: {e}", path.display())),
    })
}

pub fn write_meta(dir: &Path, meta: &Meta) -> Result<(), CliError> {
    let path = dir.join(META_FILE);
    let mut text = serde_json::to_string_pretty(meta).expect("meta serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub fn read_meta(dir: &Path) -> Result<Meta, CliError> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

/// Writes a generated instance to `dir`, creating it if needed.
pub fn write_bundle(dir: &Path, spec: &GenSpec, inst: &GeneratedInstance<f64>) -> Result<Meta, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_mat(dir, "Y", &inst.data.y().to_owned())?;
    write_mat(dir, "D", &inst.data.d().to_owned())?;
    write_mat(dir, "truth_P", &inst.truth.p)?;
    write_mat(dir, "truth_Q", &inst.truth.q)?;
    write_mat(dir, "truth_S", &inst.truth.s)?;
    let meta = Meta {
        format: META_FORMAT,
        generator: GENERATOR_ID.to_owned(),
        seed: spec.seed,
        dims: Dims {
            n: inst.data.num_rows(),
            k: inst.data.num_cols(),
            i: inst.data.num_atoms(),
            rho: inst.data.rho(),
        },
        lambda: inst.data.lambda(),
        mu: inst.data.mu(),
        spectral_norm: inst.spectral.value,
        spectral_iterations: inst.spectral.iterations,
        spectral_converged: inst.spectral.converged,
        spec: spec.clone(),
        references: BTreeMap::new(),
    };
    write_meta(dir, &meta)?;
    Ok(meta)
}

pub fn read_bundle(dir: &Path) -> Result<Bundle, CliError> {
    let meta = read_meta(dir)?;
    if meta.format != META_FORMAT {
        return Err(CliError::Format(format!(
            "{}: unsupported bundle format {}",
            dir.join(META_FILE).display(),
            meta.format
        )));
    }
    let y = read_mat(dir, "Y")?;
    let d = read_mat(dir, "D")?;
    let Dims { n, k, i, rho } = meta.dims;
    if y.dim() != (n, k) || d.dim() != (n, i) {
        return Err(CliError::Format(format!(
            "{}: Y is {:?} and D is {:?}, meta.json says N={n}, K={k}, I={i}",
            dir.display(),
            y.dim(),
            d.dim()
        )));
    }
    let data = ProblemData::new(y, d, meta.lambda, meta.mu, rho)
        .map_err(|e| CliError::Format(format!("{}: {e}", dir.display())))?;
    Ok(Bundle {
        dir: dir.to_owned(),
        data,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lrsd_core::datagen::generate;

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GenSpec::small(6, 7, 5, 2, 0.5, 11);
        let inst = generate::<f64>(&spec).unwrap();
        let meta = write_bundle(dir.path(), &spec, &inst).unwrap();
        let b = read_bundle(dir.path()).unwrap();
        assert_eq!(b.meta, meta);
        assert_eq!(b.data.y(), inst.data.y());
        assert_eq!(b.data.d(), inst.data.d());
        assert_eq!(b.data.lambda(), inst.data.lambda());
        assert_eq!(b.data.mu(), inst.data.mu());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GenSpec::small(6, 7, 5, 2, 0.5, 11);
        let inst = generate::<f64>(&spec).unwrap();
        write_bundle(dir.path(), &spec, &inst).unwrap();
        write_mat(dir.path(), "D", &ndarray::Array2::ones((6, 4))).unwrap();
        assert!(matches!(read_bundle(dir.path()), Err(CliError::Format(_))));
    }
}
