use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::control::ControlConfig;
use crate::cmaes::CmaesConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::qd::QdConfig;
use crate::sim::{Arena, SimulationConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Published setup: 27000-step trials, 60000 evaluations per optimiser.
    #[default]
    Full,
    /// Shrunk runs for a workstation: 1800-step trials, 1000 evaluations.
    Desk,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Meters,
    Pixels,
}

/// Meters per pixel for the 500 px recordings of the 1 m arena.
pub const METERS_PER_PIXEL: f64 = 0.002;

impl Unit {
    pub fn scale(self) -> f64 {
        match self {
            Unit::Meters => 1.0,
            Unit::Pixels => METERS_PER_PIXEL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub master_seed: u64,
    pub trials: usize,
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Directory of control trajectory CSVs; generated in memory when unset.
    pub control_dir: Option<PathBuf>,
    pub control_unit: Unit,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            master_seed: 1,
            trials: 10,
            workers: 0,
            output_dir: PathBuf::from("runs"),
            control_dir: None,
            control_unit: Unit::Meters,
        }
    }
}

/// Every knob of an experiment. One experiment is one file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: RunSection,
    pub arena: Arena,
    pub simulation: SimulationConfig,
    pub metrics: MetricsConfig,
    pub qd: QdConfig,
    pub cmaes: CmaesConfig,
    pub control: ControlConfig,
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        let mut c = ExperimentConfig::default();
        c.apply_scale(Scale::Desk);
        c
    }

    /// Desk scale shrinks trial length, budgets and trial count while
    /// keeping the QD and CMA-ES budgets equal.
    pub fn apply_scale(&mut self, scale: Scale) {
        if scale == Scale::Desk {
            self.simulation.n_steps = 1800;
            self.qd.init_evals = 200;
            self.qd.batches = 40;
            self.qd.batch_size = 20;
            self.cmaes.generations = 50;
            self.cmaes.lambda = 20;
            self.experiment.trials = 5;
            self.control.n_trials = 5;
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical serialisation, leaving out the output
    /// location and worker count, which cannot change results.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.experiment.output_dir = RunSection::default().output_dir;
        canonical.experiment.workers = 0;
        let text = canonical.to_toml().unwrap_or_default();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.arena.validate()?;
        self.simulation.validate()?;
        self.metrics.validate()?;
        self.qd.validate()?;
        self.cmaes.validate()?;
        self.control.validate()?;
        if self.metrics.side != self.arena.side {
            return Err(Error::Config(format!(
                "metrics.side ({}) must equal arena.side ({})",
                self.metrics.side, self.arena.side
            )));
        }
        if self.metrics.v_max != self.simulation.v_max {
            return Err(Error::Config(format!(
                "metrics.v_max ({}) must equal simulation.v_max ({})",
                self.metrics.v_max, self.simulation.v_max
            )));
        }
        if self.experiment.trials == 0 {
            return Err(Error::Config("experiment.trials must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::desk();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.digest().len(), 64);
    }

    #[test]
    fn digest_ignores_output_and_workers() {
        let base = ExperimentConfig::desk();
        let mut moved = base.clone();
        moved.experiment.output_dir = PathBuf::from("elsewhere");
        moved.experiment.workers = 3;
        assert_eq!(base.digest(), moved.digest());
        let mut reseeded = base.clone();
        reseeded.experiment.master_seed += 1;
        assert_ne!(base.digest(), reseeded.digest());
    }

    #[test]
    fn unknown_keys_fail() {
        let err = ExperimentConfig::from_toml("[qd]\nniche = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 2);
        assert!(ExperimentConfig::from_toml("[bogus]\n").is_err());
    }

    #[test]
    fn partial_files_use_defaults() {
        let cfg = ExperimentConfig::from_toml("[qd]\nniches = 16\n").unwrap();
        assert_eq!(cfg.qd.niches, 16);
        assert_eq!(cfg.qd.batch_size, 120);
        cfg.validate().unwrap();
    }

    #[test]
    fn scales_keep_budgets_equal() {
        let full = ExperimentConfig::default();
        assert_eq!(full.qd.budget(), full.cmaes.budget());
        let desk = ExperimentConfig::desk();
        assert_eq!(desk.qd.budget(), 1000);
        assert_eq!(desk.qd.budget(), desk.cmaes.budget());
        assert_eq!(desk.simulation.n_steps, 1800);
    }

    #[test]
    fn inconsistent_metrics_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.metrics.v_max = 1.0;
        assert!(cfg.validate().is_err());
    }
}
