use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Gaussian,
    Bernoulli,
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Bernoulli => "bernoulli",
        })
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Ensemble::Gaussian),
            "bernoulli" => Ok(Ensemble::Bernoulli),
            other => Err(Error::InvalidInput(format!(
                "unknown ensemble '{other}', expected gaussian or bernoulli"
            ))),
        }
    }
}

/// How the configured noise level is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScale {
    /// The level is the noise variance (std = sqrt(level)).
    Variance,
    /// The level is the noise standard deviation.
    StdDev,
}

/// Parameters of a synthetic compressive-sensing instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsInstanceSpec {
    pub n: usize,
    pub m: usize,
    pub sparsity: usize,
    pub ensemble: Ensemble,
    pub noise_level: f64,
    pub noise_scale: NoiseScale,
    pub seed: u64,
}

impl CsInstanceSpec {
    /// Defaults: `m = n / 4`, `s = m / 32`, Gaussian ensemble, noise variance 0.02.
    pub fn new(n: usize) -> Self {
        let m = n / 4;
        Self {
            n,
            m,
            sparsity: m / 32,
            ensemble: Ensemble::Gaussian,
            noise_level: 0.02,
            noise_scale: NoiseScale::Variance,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn noise_std(&self) -> f64 {
        match self.noise_scale {
            NoiseScale::Variance => self.noise_level.sqrt(),
            NoiseScale::StdDev => self.noise_level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidInput(format!(
                "instance needs m, n >= 1 (got m = {}, n = {})",
                self.m, self.n
            )));
        }
        if !(self.sparsity <= self.m && self.m <= self.n) {
            return Err(Error::InvalidInput(format!(
                "instance needs s <= m <= n (got s = {}, m = {}, n = {})",
                self.sparsity, self.m, self.n
            )));
        }
        if !(self.noise_level.is_finite() && self.noise_level >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise level must be nonnegative, got {}",
                self.noise_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CsInstance {
    pub spec: CsInstanceSpec,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub x_true: DVector<f64>,
}

/// Draws `A` (unit-norm columns), an `s`-sparse `x_true` and
/// `b = A x_true + noise`, all from the spec's seed.
pub fn generate_instance(spec: &CsInstanceSpec) -> Result<CsInstance> {
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut a = match spec.ensemble {
        Ensemble::Gaussian => DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng)),
        Ensemble::Bernoulli => DMatrix::from_fn(m, n, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 }),
    };
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }

    let mut x_true = DVector::zeros(n);
    let mut positions = sample(&mut rng, n, spec.sparsity).into_vec();
    positions.sort_unstable();
    for i in positions {
        x_true[i] = StandardNormal.sample(&mut rng);
    }

    let mut b = &a * &x_true;
    let std = spec.noise_std();
    if std > 0.0 {
        for v in b.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += std * z;
        }
    }
    Ok(CsInstance {
        spec: *spec,
        a,
        b,
        x_true,
    })
}
