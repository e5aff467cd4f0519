//! Synthetic instances `Y = PQ + DS + V` with data-driven regularizers
//! `lambda = r ||Y||_2` and `mu = r max_ij |(D^T Y)_ij|`.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorState, ProblemData};
use crate::scalar::Scalar;

/// Identifies the sampling scheme; recorded with every generated instance.
pub const GENERATOR_ID: &str =
    "chacha8-seed_from_u64/rand_distr-0.5-normal/bernoulli-f64-threshold/v1";

const MAX_COLUMN_REDRAWS: usize = 1000;

/// Parameters of a synthetic instance. Missing fields take the values of
/// the reference setup (`N = 106`, `K = I = 380`, rank 3, noise variance
/// `0.01`, anomaly probability `0.05` per sign, factor variances `100/I`
/// and `100/K`, `r = 0.5`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub n: usize,
    pub k: usize,
    pub i: usize,
    pub rho_true: usize,
    /// Rank used by the solvers; defaults to `rho_true`.
    pub rho: Option<usize>,
    pub noise_var: f64,
    /// Probability of each of `S_ik = -1` and `S_ik = +1`.
    pub p_anomaly: f64,
    /// Variance of the entries of `P`; defaults to `100 / I`.
    pub factor_var_p: Option<f64>,
    /// Variance of the entries of `Q`; defaults to `100 / K`.
    pub factor_var_q: Option<f64>,
    /// Probability that an entry of `D` is one.
    pub d_density: f64,
    /// Regularization scaling factor.
    pub r: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            n: 106,
            k: 380,
            i: 380,
            rho_true: 3,
            rho: None,
            noise_var: 0.01,
            p_anomaly: 0.05,
            factor_var_p: None,
            factor_var_q: None,
            d_density: 0.5,
            r: 0.5,
            seed: 0,
        }
    }
}

impl GenSpec {
    /// Reference setup with scaling factor `r`.
    pub fn reference(r: f64, seed: u64) -> Self {
        Self {
            r,
            seed,
            ..Self::default()
        }
    }

    /// Small instance of the same family, for tests and examples.
    pub fn small(n: usize, k: usize, i: usize, rho: usize, r: f64, seed: u64) -> Self {
        Self {
            n,
            k,
            i,
            rho_true: rho,
            r,
            seed,
            ..Self::default()
        }
    }

    pub fn var_p(&self) -> f64 {
        self.factor_var_p.unwrap_or(100.0 / self.i as f64)
    }

    pub fn var_q(&self) -> f64 {
        self.factor_var_q.unwrap_or(100.0 / self.k as f64)
    }

    pub fn solver_rho(&self) -> usize {
        self.rho.unwrap_or(self.rho_true)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::InvalidArgument(format!("field `{field}`: {why}")));
        for (name, v) in [("n", self.n), ("k", self.k), ("i", self.i), ("rho_true", self.rho_true)] {
            if v == 0 {
                return bad(name, "must be at least 1");
            }
        }
        let rho = self.solver_rho();
        if rho == 0 || rho > self.n.min(self.k) {
            return bad("rho", "solver rank must lie in [1, min(n, k)]");
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return bad("noise_var", "must be finite and nonnegative");
        }
        if !(self.p_anomaly >= 0.0 && self.p_anomaly < 0.5) {
            return bad("p_anomaly", "must lie in [0, 0.5)");
        }
        if !(self.var_p() > 0.0 && self.var_p().is_finite()) {
            return bad("factor_var_p", "must be positive");
        }
        if !(self.var_q() > 0.0 && self.var_q().is_finite()) {
            return bad("factor_var_q", "must be positive");
        }
        if !(self.d_density > 0.0 && self.d_density <= 1.0) {
            return bad("d_density", "must lie in (0, 1]");
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad("r", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance<T> {
    pub data: ProblemData<T>,
    /// Planted `P` (`N x rho_true`), `Q`, and `S`.
    pub truth: FactorState<T>,
    pub noise: Array2<T>,
    pub spectral: SpectralNorm<T>,
}

fn sample_column<R: Rng>(rng: &mut R, n: usize, density: f64) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random::<f64>() < density { 1.0 } else { 0.0 })
        .collect()
}

/// Draws an instance; the same spec always yields the same instance.
pub fn generate<T: Scalar>(spec: &GenSpec) -> Result<GeneratedInstance<T>> {
    spec.validate()?;
    let (n, k, i, rt) = (spec.n, spec.k, spec.i, spec.rho_true);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut d = Array2::<T>::zeros((n, i));
    for col in 0..i {
        let mut attempt = 0;
        let values = loop {
            let v = sample_column(&mut rng, n, spec.d_density);
            if v.iter().any(|&x| x != 0.0) {
                break v;
            }
            attempt += 1;
            if attempt >= MAX_COLUMN_REDRAWS {
                return Err(Error::Numeric(format!(
                    "column {col} of D stayed zero after {MAX_COLUMN_REDRAWS} draws"
                )));
            }
        };
        for (row, v) in values.into_iter().enumerate() {
            d[[row, col]] = T::lit(v);
        }
    }

    let mut gaussian = |rows: usize, cols: usize, var: f64| {
        let normal = Normal::new(0.0, var.sqrt()).expect("validated variance");
        Array2::from_shape_simple_fn((rows, cols), || T::lit(normal.sample(&mut rng)))
    };
    let p = gaussian(n, rt, spec.var_p());
    let q = gaussian(rt, k, spec.var_q());

    let s = Array2::from_shape_simple_fn((i, k), || {
        let u: f64 = rng.random();
        if u < spec.p_anomaly {
            -T::one()
        } else if u < 2.0 * spec.p_anomaly {
            T::one()
        } else {
            T::zero()
        }
    });
    let noise_std = spec.noise_var.sqrt();
    let noise = Array2::from_shape_simple_fn((n, k), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(noise_std * z)
    });

    let y = &(&p.dot(&q) + &d.dot(&s)) + &noise;

    let spectral = spectral_norm(&y.view())?;
    let lambda = T::lit(spec.r) * spectral.value;
    let dty = d.t().dot(&y);
    let mu = T::lit(spec.r) * dty.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let data = ProblemData::new(y, d, lambda, mu, spec.solver_rho())?;

    Ok(GeneratedInstance {
        data,
        truth: FactorState { p, q, s },
        noise,
        spectral,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm<T> {
    pub value: T,
    pub iterations: usize,
    /// False when the iteration cap was hit; `value` is then the best estimate.
    pub converged: bool,
}

/// Largest singular value by power iteration on `M^T M`, stopping when the
/// estimate changes by at most `1e-10` relative, capped at 10000 iterations.
pub fn spectral_norm<T: Scalar>(m: &ArrayView2<T>) -> Result<SpectralNorm<T>> {
    spectral_norm_with(m, T::lit(1e-10), 10_000)
}

pub fn spectral_norm_with<T: Scalar>(
    m: &ArrayView2<T>,
    tol: T,
    max_iters: usize,
) -> Result<SpectralNorm<T>> {
    if m.is_empty() {
        return Err(Error::InvalidArgument("spectral norm of an empty matrix".into()));
    }
    let norm = |v: &Array1<T>| v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
    // fixed pseudo-random start, away from any structured subspace
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_5bec);
    let mut v = Array1::from_shape_simple_fn(m.ncols(), || T::lit(rng.random::<f64>() + 0.5));
    let nv = norm(&v);
    v.mapv_inplace(|x| x / nv);

    let mut sigma = T::zero();
    for iter in 1..=max_iters {
        let mv = m.dot(&v);
        let next_sigma = norm(&mv);
        if next_sigma == T::zero() {
            return Ok(SpectralNorm {
                value: T::zero(),
                iterations: iter,
                converged: true,
            });
        }
        let mut w = m.t().dot(&mv);
        let nw = norm(&w);
        w.mapv_inplace(|x| x / nw);
        v = w;
        if (next_sigma - sigma).abs() <= tol * next_sigma {
            return Ok(SpectralNorm {
                value: next_sigma,
                iterations: iter,
                converged: true,
            });
        }
        sigma = next_sigma;
    }
    log::warn!("spectral norm did not converge in {max_iters} iterations; estimate {sigma}");
    Ok(SpectralNorm {
        value: sigma,
        iterations: max_iters,
        converged: false,
    })
}
