//! Experiment configuration: a flat TOML key/value file. Every key is
//! optional; defaults reproduce the figure-caption settings on the default
//! synthetic scenario.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Algorithm;
use crate::neural::{TrainConfig, DEFAULT_NEGATIVE_SLOPE};
use crate::signal_model::{colocated_groups, Point3, ScenarioConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Measurement file; when absent a synthetic corpus is generated.
    pub data: Option<PathBuf>,

    // Synthetic scenario.
    pub num_locations: usize,
    pub region_min: Point3,
    pub region_max: Point3,
    pub receiver_groups: Vec<Point3>,
    pub antennas_per_group: usize,
    pub antenna_half_spacing: f64,
    pub path_loss_exponent: f64,
    pub reference_loss_db: f64,
    pub shadowing_std_db: f64,
    pub noise_power_dbm: f64,
    pub tx_power_dbm: f64,
    pub sampling_interval_s: f64,
    pub tone_frequency_hz: f64,
    pub num_samples: usize,
    pub num_estimates: usize,

    // Pairs and splits.
    pub k_train: usize,
    pub k_val: usize,
    pub k_test: usize,
    pub train_fraction: f64,
    pub kappa: usize,

    // Sweeps.
    pub algorithms: Vec<Algorithm>,
    pub location_grid: Vec<usize>,
    pub feature_subsets: Vec<Vec<usize>>,
    pub feature_sweep_locations: usize,
    pub iterations: usize,

    // Network training.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub l1_penalty: f64,
    pub negative_slope: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let scenario = ScenarioConfig::default();
        let train = TrainConfig::default();
        ExperimentConfig {
            data: None,
            num_locations: scenario.num_locations,
            region_min: scenario.region_min,
            region_max: scenario.region_max,
            receiver_groups: vec![[1.0, 1.0, 1.5], [19.0, 1.0, 1.5], [19.0, 14.0, 1.5], [1.0, 14.0, 1.5]],
            antennas_per_group: 4,
            antenna_half_spacing: 0.03,
            path_loss_exponent: scenario.path_loss_exponent,
            reference_loss_db: scenario.reference_loss_db,
            shadowing_std_db: scenario.shadowing_std_db,
            noise_power_dbm: scenario.noise_power_dbm,
            tx_power_dbm: scenario.tx_power_dbm,
            sampling_interval_s: scenario.sampling_interval_s,
            tone_frequency_hz: scenario.tone_frequency_hz,
            num_samples: 16,
            // 4888 recorded samples per location split into windows of 16.
            num_estimates: 305,
            k_train: 1250,
            k_val: 150,
            k_test: 1000,
            train_fraction: 0.8,
            kappa: 15,
            algorithms: Algorithm::ALL.to_vec(),
            location_grid: vec![10, 20, 30, 40, 45, 50],
            feature_subsets: vec![
                vec![0],
                vec![0, 1],
                vec![0, 4],
                vec![0, 1, 2, 3],
                (0..8).collect(),
                (0..16).collect(),
            ],
            feature_sweep_locations: 40,
            iterations: 20,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
            l1_penalty: train.l1_penalty,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    /// Reads `path` (if given) and applies `key=value` overrides on top.
    /// Override values are parsed as TOML values, falling back to strings.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse()
                    .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.clone()));
            table.insert(key.clone(), value);
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            num_locations: self.num_locations,
            region_min: self.region_min,
            region_max: self.region_max,
            receivers: colocated_groups(
                &self.receiver_groups,
                self.antennas_per_group,
                self.antenna_half_spacing,
            ),
            path_loss_exponent: self.path_loss_exponent,
            reference_loss_db: self.reference_loss_db,
            shadowing_std_db: self.shadowing_std_db,
            noise_power_dbm: self.noise_power_dbm,
            tx_power_dbm: self.tx_power_dbm,
            sampling_interval_s: self.sampling_interval_s,
            tone_frequency_hz: self.tone_frequency_hz,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            l1_penalty: self.l1_penalty,
            negative_slope: self.negative_slope,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_none() {
            self.scenario().validate()?;
            if self.num_samples == 0 {
                return Err(Error::config("num_samples", "must be at least 1"));
            }
            if self.num_estimates < 2 {
                return Err(Error::config("num_estimates", "must be at least 2"));
            }
        }
        self.train_config().validate()?;
        for (field, v) in [
            ("k_train", self.k_train),
            ("k_val", self.k_val),
            ("k_test", self.k_test),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
        }
        if self.kappa == 0 {
            return Err(Error::config("kappa", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "must name at least one algorithm"));
        }
        if self.location_grid.is_empty() {
            return Err(Error::config("location_grid", "must not be empty"));
        }
        // Fewer than 10 locations leaves the network with 1-2 validation
        // locations and a meaningless early-stopping signal.
        if self.algorithms.contains(&Algorithm::Dnnc) && self.location_grid.iter().any(|&l| l < 10) {
            return Err(Error::config(
                "location_grid",
                "values must be >= 10 when dnnc is evaluated",
            ));
        }
        if self.feature_subsets.is_empty() || self.feature_subsets.iter().any(Vec::is_empty) {
            return Err(Error::config("feature_subsets", "subsets must be non-empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_figure_caption_values() {
        let c = ExperimentConfig::default();
        assert_eq!((c.num_samples, c.k_train, c.k_val, c.kappa), (16, 1250, 150, 15));
        assert_eq!(c.train_fraction, 0.8);
        assert_eq!(c.scenario().receivers.len(), 16);
        assert_eq!(c.location_grid[0], 10);
        assert_eq!(c.feature_sweep_locations, 40);
        assert_eq!(c.scenario(), ScenarioConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        fs::write(&path, "iterations = 3\nalgorithms = [\"dbc2\"]\n").unwrap();
        let c = ExperimentConfig::load(
            Some(&path),
            &[("k_test".into(), "50".into()), ("data".into(), "corpus.csv".into())],
        )
        .unwrap();
        assert_eq!(c.iterations, 3);
        assert_eq!(c.algorithms, vec![Algorithm::Dbc2]);
        assert_eq!(c.k_test, 50);
        assert_eq!(c.data, Some(PathBuf::from("corpus.csv")));
    }

    #[test]
    fn bad_values_name_the_field() {
        let err = ExperimentConfig::load(None, &[("iterations".into(), "0".into())]).unwrap_err();
        assert!(matches!(
            err,
            Error::Config {
                field: "iterations",
                ..
            }
        ));
        let err = ExperimentConfig::load(None, &[("location_grid".into(), "[5, 20]".into())]).unwrap_err();
        assert!(matches!(
            err,
            Error::Config {
                field: "location_grid",
                ..
            }
        ));
        assert!(ExperimentConfig::load(None, &[("no_such_key".into(), "1".into())]).is_err());
    }
}
