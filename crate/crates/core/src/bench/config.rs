use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::instance::{CsInstanceSpec, Ensemble, NoiseScale};
use super::path::DEFAULT_PATH_LEN;
use crate::error::{Error, Result};
use crate::solvers::{FreezeSchedule, Method, SolveOptions, StepRule};

/// Which point of the sweep supplies the reported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalRun {
    /// Re-solve at the selected lambda from the common starting point `A^T b`.
    Cold,
    /// Report the warm-started path run at the selected lambda.
    Warm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Smallest relative error against the planted signal.
    Oracle,
    /// Ground-truth free: smallest residual among points with at most `s` nonzeros.
    Sparsity,
}

/// Past the error minimum the path only adds nonzeros, and those solves
/// dominate the cost of a full sweep.
pub const DEFAULT_PATIENCE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub ensembles: Vec<Ensemble>,
    /// Number of repetitions; repetition `i` uses seed `base_seed + i`.
    pub seeds: usize,
    pub base_seed: u64,
    pub noise_level: f64,
    pub noise_scale: NoiseScale,
    pub methods: Vec<Method>,
    pub mu: f64,
    pub path_len: usize,
    /// Stop a sweep after this many points whose relative error is clearly
    /// worse than the best so far, with no improvement in between. Zero
    /// sweeps the whole path.
    pub patience: usize,
    pub final_run: FinalRun,
    pub selection: SelectionMode,
    pub solve: SolveOptions,
    /// Worker threads; `None` lets the pool decide.
    pub threads: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl BenchConfig {
    /// n = 2000, m = 500, s = 15, 20 seeds.
    pub fn desk() -> Self {
        Self {
            sizes: vec![2000],
            ensembles: vec![Ensemble::Gaussian],
            seeds: 20,
            base_seed: 0,
            noise_level: 0.02,
            noise_scale: NoiseScale::Variance,
            methods: Method::ALL.to_vec(),
            mu: 1e-6,
            path_len: DEFAULT_PATH_LEN,
            patience: DEFAULT_PATIENCE,
            final_run: FinalRun::Warm,
            selection: SelectionMode::Oracle,
            solve: SolveOptions::default(),
            threads: None,
        }
    }

    /// n in {10000, 18000}, both ensembles, 50 seeds. Hours of CPU time.
    pub fn full() -> Self {
        Self {
            sizes: vec![10000, 18000],
            ensembles: vec![Ensemble::Gaussian, Ensemble::Bernoulli],
            seeds: 50,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.trim() {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(Error::InvalidInput(format!(
                "unknown preset '{other}', expected desk or full"
            ))),
        }
    }

    /// Instance specs in report order: ensemble-major, then size.
    pub fn instance_specs(&self) -> Vec<CsInstanceSpec> {
        let mut specs = Vec::new();
        for &ensemble in &self.ensembles {
            for &n in &self.sizes {
                specs.push(CsInstanceSpec {
                    ensemble,
                    noise_level: self.noise_level,
                    noise_scale: self.noise_scale,
                    ..CsInstanceSpec::new(n)
                });
            }
        }
        specs
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("method list is empty".into()));
        }
        if self.sizes.is_empty() || self.ensembles.is_empty() {
            return Err(Error::InvalidInput("need at least one size and one ensemble".into()));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::InvalidInput(format!("mu must be nonnegative, got {}", self.mu)));
        }
        if self.path_len < 2 {
            return Err(Error::InvalidInput("path_len must be at least 2".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("threads must be positive".into()));
        }
        for spec in self.instance_specs() {
            spec.validate()?;
        }
        self.solve.validate()
    }

    /// Sets one `key = value` entry. `preset` resets every other key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::InvalidInput(format!("invalid value '{value}' for {what}"));
        match key.trim() {
            "preset" => *self = Self::preset(value)?,
            "sizes" | "n" => self.sizes = parse_list(value).map_err(|_| bad(key))?,
            "ensembles" | "ensemble" => self.ensembles = parse_list(value)?,
            "seeds" => self.seeds = value.parse().map_err(|_| bad(key))?,
            "base_seed" | "seed" => self.base_seed = value.parse().map_err(|_| bad(key))?,
            "noise_level" | "noise" => self.noise_level = value.parse().map_err(|_| bad(key))?,
            "noise_scale" => {
                self.noise_scale = match value {
                    "variance" => NoiseScale::Variance,
                    "std" | "stddev" => NoiseScale::StdDev,
                    _ => return Err(bad(key)),
                }
            }
            "methods" => self.methods = parse_list(value)?,
            "mu" => self.mu = value.parse().map_err(|_| bad(key))?,
            "path_len" => self.path_len = value.parse().map_err(|_| bad(key))?,
            "patience" => self.patience = value.parse().map_err(|_| bad(key))?,
            "final_run" => {
                self.final_run = match value {
                    "cold" => FinalRun::Cold,
                    "warm" => FinalRun::Warm,
                    _ => return Err(bad(key)),
                }
            }
            "selection" => {
                self.selection = match value {
                    "oracle" => SelectionMode::Oracle,
                    "sparsity" => SelectionMode::Sparsity,
                    _ => return Err(bad(key)),
                }
            }
            "threads" => {
                self.threads = match value {
                    "" | "auto" => None,
                    v => Some(v.parse().map_err(|_| bad(key))?),
                }
            }
            "tol" => self.solve.tol = value.parse().map_err(|_| bad(key))?,
            "max_iters" => self.solve.max_iters = value.parse().map_err(|_| bad(key))?,
            "omega" => self.solve.omega = value.parse().map_err(|_| bad(key))?,
            "eta" => self.solve.eta = value.parse().map_err(|_| bad(key))?,
            "delta_nm" => self.solve.delta_nm = value.parse().map_err(|_| bad(key))?,
            "window" | "q" => self.solve.window = value.parse().map_err(|_| bad(key))?,
            "memory" => self.solve.vmepiht.memory = value.parse().map_err(|_| bad(key))?,
            "damping" => self.solve.vmepiht.damping = value.parse().map_err(|_| bad(key))?,
            "freeze" => self.solve.vmepiht.freeze = parse_freeze(value).ok_or_else(|| bad(key))?,
            "step_rule" => {
                self.solve.vmepiht.step_rule = match value {
                    "auto" => StepRule::Auto,
                    "exact" => StepRule::Exact,
                    "dong" => StepRule::Dong,
                    _ => return Err(bad(key)),
                }
            }
            "certificate_stop" => {
                self.solve.vmepiht.certificate_stop = value.parse().map_err(|_| bad(key))?
            }
            "confirm_stop" => self.solve.vmepiht.confirm_stop = value.parse().map_err(|_| bad(key))?,
            other => return Err(Error::InvalidInput(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("line {}: expected key = value, got '{line}'", lineno + 1))
            })?;
            self.set(key, value)
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::desk();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::InvalidInput(e.to_string())))
        .collect()
}

fn parse_freeze(value: &str) -> Option<FreezeSchedule> {
    match value {
        "auto" => Some(FreezeSchedule::Auto),
        "never" => Some(FreezeSchedule::Never),
        v => v.parse().ok().map(FreezeSchedule::After),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset_matches_protocol() {
        let cfg = BenchConfig::desk();
        let specs = cfg.instance_specs();
        assert_eq!(specs.len(), 1);
        assert_eq!((specs[0].n, specs[0].m, specs[0].sparsity), (2000, 500, 15));
        assert_eq!(cfg.seeds, 20);
        assert_eq!(cfg.methods.len(), 5);
        assert_eq!(cfg.mu, 1e-6);
        assert_eq!(cfg.solve.tol, 1e-5);
        cfg.validate().unwrap();
    }

    #[test]
    fn parse_flat_text() {
        let cfg = BenchConfig::from_text(
            "# tiny run\nsizes = 128, 256\nseeds=3\nmethods = piht,vmepiht # two\nnoise_scale = std\nfreeze = 40\nthreads = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.sizes, vec![128, 256]);
        assert_eq!(cfg.seeds, 3);
        assert_eq!(cfg.methods, vec![Method::Piht, Method::Vmepiht]);
        assert_eq!(cfg.noise_scale, NoiseScale::StdDev);
        assert_eq!(cfg.solve.vmepiht.freeze, FreezeSchedule::After(40));
        assert_eq!(cfg.threads, Some(2));
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(BenchConfig::from_text("bogus = 1").is_err());
        assert!(BenchConfig::from_text("seeds").is_err());
        assert!(BenchConfig::from_text("methods = lasso").is_err());
        let cfg = BenchConfig::from_text("methods = ").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn preset_line_resets() {
        let cfg = BenchConfig::from_text("seeds = 2\npreset = full").unwrap();
        assert_eq!(cfg.seeds, 50);
        assert_eq!(cfg.sizes, vec![10000, 18000]);
    }
}
