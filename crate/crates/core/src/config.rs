//! Experiment configuration schema.
//!
//! A single JSON document drives every pipeline: the problem definition, the
//! solver grid, the Monte Carlo budget, the fluctuation-theory budget, the
//! list of walk sizes, and where artifacts go. The master seed is mandatory —
//! nothing here ever falls back to wall-clock seeding — so a configuration
//! plus the code version fully determines every emitted byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuation::DEFAULT_LADDER_CAP;
use crate::model::{Boundary, IncrementDistribution, Payoff};
use crate::pde::GridConfig;
use crate::stats::BATCH_SIZE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub boundary: Boundary,
    pub payoff: Payoff,
    pub distribution: IncrementDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: u64,
    /// Root of the per-path counter-based substreams. Mandatory.
    pub master_seed: u64,
    /// Batch size of the deterministic parallel reduction; part of the
    /// artifact identity.
    #[serde(default = "default_batch")]
    pub batch: u64,
}

fn default_batch() -> u64 {
    BATCH_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuationConfig {
    pub epochs: u64,
    /// Per-epoch step cap for ladder simulation.
    #[serde(default = "default_cap")]
    pub cap: u64,
}

fn default_cap() -> u64 {
    DEFAULT_LADDER_CAP
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub fluctuation: FluctuationConfig,
    /// Walk sizes for rate studies, strictly increasing.
    pub n_list: Vec<u64>,
    pub outputs: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::schema("config", format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem
            .boundary
            .validate()
            .map_err(|e| at("problem.boundary", e))?;
        self.problem
            .distribution
            .validate()
            .map_err(|e| at("problem.distribution", e))?;
        self.grid.validate().map_err(|e| at("grid", e))?;
        if self.mc.paths == 0 {
            return Err(Error::schema("mc.paths", "must be positive"));
        }
        if self.mc.batch == 0 {
            return Err(Error::schema("mc.batch", "must be positive"));
        }
        if self.fluctuation.epochs == 0 {
            return Err(Error::schema("fluctuation.epochs", "must be positive"));
        }
        if self.fluctuation.cap == 0 {
            return Err(Error::schema("fluctuation.cap", "must be positive"));
        }
        if self.n_list.is_empty() {
            return Err(Error::schema("n_list", "must be non-empty"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::schema("n_list", "must be strictly increasing"));
        }
        if self.n_list[0] == 0 {
            return Err(Error::schema("n_list", "entries must be positive"));
        }
        if self.outputs.directory.is_empty() {
            return Err(Error::schema("outputs.directory", "must be non-empty"));
        }
        if self.outputs.formats.is_empty() {
            return Err(Error::schema("outputs.formats", "must be non-empty"));
        }
        Ok(())
    }

    /// Content hash of the canonical JSON encoding; the provenance root.
    pub fn hash(&self) -> Result<String> {
        crate::report::value_hash(self)
    }

    /// The standard worked example: affine boundary `1 - t/2`, payoff
    /// `exp(-t/2)`, chosen increments, and budgets small enough for smoke use.
    pub fn standard(distribution: IncrementDistribution) -> Self {
        ExperimentConfig {
            problem: ProblemConfig {
                boundary: Boundary::standard(),
                payoff: Payoff::standard(),
                distribution,
            },
            grid: GridConfig::new(8.0, 12.0, 513, 1025),
            mc: McConfig {
                paths: 100_000,
                master_seed: 20_260_826,
                batch: BATCH_SIZE,
            },
            fluctuation: FluctuationConfig {
                epochs: 100_000,
                cap: DEFAULT_LADDER_CAP,
            },
            n_list: vec![100, 400, 1600],
            outputs: OutputConfig {
                directory: "out".to_string(),
                formats: default_formats(),
            },
        }
    }
}

fn at(prefix: &str, e: Error) -> Error {
    match e {
        Error::Schema { path, message } => Error::Schema {
            path: format!("{prefix}.{path}"),
            message,
        },
        Error::Assumption { assumption, message } => {
            Error::schema(prefix, format!("{assumption}: {message}"))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_config_round_trips_and_hashes_stably() {
        let cfg = ExperimentConfig::standard(IncrementDistribution::CenteredExponential);
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.hash().unwrap(), back.hash().unwrap());
        let other = ExperimentConfig {
            mc: McConfig {
                paths: cfg.mc.paths + 1,
                ..cfg.mc
            },
            ..cfg.clone()
        };
        assert_ne!(cfg.hash().unwrap(), other.hash().unwrap());
    }

    #[test]
    fn validation_errors_cite_key_paths() {
        let mut cfg = ExperimentConfig::standard(IncrementDistribution::StandardNormal);
        cfg.problem.boundary = Boundary::Affine {
            intercept: -1.0,
            slope: -0.5,
        };
        match cfg.validate() {
            Err(Error::Schema { path, .. }) => assert!(path.starts_with("problem.boundary")),
            other => panic!("expected schema error, got {other:?}"),
        }

        let mut cfg = ExperimentConfig::standard(IncrementDistribution::StandardNormal);
        cfg.n_list = vec![100, 100];
        match cfg.validate() {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "n_list"),
            other => panic!("expected schema error, got {other:?}"),
        }

        let mut cfg = ExperimentConfig::standard(IncrementDistribution::StandardNormal);
        cfg.mc.paths = 0;
        match cfg.validate() {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "mc.paths"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_master_seed_is_a_schema_error() {
        let text = r#"{
            "problem": {
                "boundary": {"kind": "affine", "intercept": 1.0, "slope": -0.5},
                "payoff": {"kind": "time-exponential", "scale": 1.0, "rate": 0.5},
                "distribution": {"kind": "standard-normal"}
            },
            "grid": {"y_max": 8.0, "t_max": 12.0, "ny": 512, "nt": 1024},
            "mc": {"paths": 1000},
            "fluctuation": {"epochs": 1000},
            "n_list": [100],
            "outputs": {"directory": "out"}
        }"#;
        let parsed: std::result::Result<ExperimentConfig, _> = serde_json::from_str(text);
        assert!(parsed.is_err(), "master_seed must be mandatory");
    }
}
