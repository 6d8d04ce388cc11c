//! Run configuration shared by the CLI subcommands.
//!
//! Values resolve as command-line flag, then config file, then default.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lsh::{DEFAULT_BITS, DEFAULT_TABLES};
use crate::metrics::{DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B};

/// Optional settings as read from a TOML config file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub r: Option<usize>,
    pub k: Option<usize>,
    pub ensemble_size: Option<usize>,
    pub seed: Option<u64>,
    pub propensity_a: Option<f64>,
    pub propensity_b: Option<f64>,
    pub top: Option<usize>,
    pub workers: Option<usize>,
    pub lsh_tables: Option<usize>,
    pub lsh_bits: Option<usize>,
}

impl PartialConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::param(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `self` win over `fallback`.
    pub fn or(self, fallback: PartialConfig) -> PartialConfig {
        PartialConfig {
            r: self.r.or(fallback.r),
            k: self.k.or(fallback.k),
            ensemble_size: self.ensemble_size.or(fallback.ensemble_size),
            seed: self.seed.or(fallback.seed),
            propensity_a: self.propensity_a.or(fallback.propensity_a),
            propensity_b: self.propensity_b.or(fallback.propensity_b),
            top: self.top.or(fallback.top),
            workers: self.workers.or(fallback.workers),
            lsh_tables: self.lsh_tables.or(fallback.lsh_tables),
            lsh_bits: self.lsh_bits.or(fallback.lsh_bits),
        }
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let c = RunConfig {
            r: self.r.unwrap_or(crate::DEFAULT_R),
            k: self.k.unwrap_or(crate::DEFAULT_K),
            ensemble_size: self.ensemble_size.unwrap_or(crate::DEFAULT_ENSEMBLE_SIZE),
            base_seed: self.seed.unwrap_or(0),
            propensity_a: self.propensity_a.unwrap_or(DEFAULT_PROPENSITY_A),
            propensity_b: self.propensity_b.unwrap_or(DEFAULT_PROPENSITY_B),
            top: self.top.unwrap_or(5),
            workers: self.workers,
            lsh_tables: self.lsh_tables.unwrap_or(DEFAULT_TABLES),
            lsh_bits: self.lsh_bits.unwrap_or(DEFAULT_BITS),
        };
        if c.r == 0 || c.k == 0 || c.ensemble_size == 0 || c.top == 0 {
            return Err(Error::param("r, k, ensemble size and top must be >= 1"));
        }
        if c.workers == Some(0) {
            return Err(Error::param("workers must be >= 1"));
        }
        Ok(c)
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub r: usize,
    pub k: usize,
    pub ensemble_size: usize,
    pub base_seed: u64,
    pub propensity_a: f64,
    pub propensity_b: f64,
    /// Labels written per prediction row.
    pub top: usize,
    /// `None` = all cores.
    pub workers: Option<usize>,
    pub lsh_tables: usize,
    pub lsh_bits: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        PartialConfig::default().resolve().expect("defaults are valid")
    }
}
