//! Run configuration: a TOML file with every pipeline knob, all optional,
//! falling back to the benchmark defaults. Command-line flags override file
//! values.

use crate::dataset::{SplitRatios, DEFAULT_WINDOW_LEN};
use crate::error::{Error, Result};
use crate::experiments::SpecId;
use crate::ingest::PriceColumn;
use crate::tensor::Padding;
use crate::train::TrainConfig;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable that reroots all command outputs.
pub const OUTPUT_ROOT_ENV: &str = "CONVCAST_OUT_ROOT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// OHLCV CSV input.
    pub data_path: PathBuf,
    /// Inclusive date filter applied after parsing.
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub price_column: PriceColumn,
    pub window_len: usize,
    pub split_ratios: SplitRatios,
    /// Where run artifacts land; see [`OUTPUT_ROOT_ENV`].
    pub output_dir: PathBuf,
    pub models: Vec<SpecId>,
    pub seeds: Vec<u64>,
    /// Worker threads for the benchmark suite.
    pub jobs: usize,
    pub fc_width: usize,
    pub conv_padding: Padding,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_path: PathBuf::from("crates/convcast/data/sp500.csv"),
            start_date: NaiveDate::from_ymd_opt(1990, 7, 15),
            end_date: NaiveDate::from_ymd_opt(2020, 7, 15),
            price_column: PriceColumn::Close,
            window_len: DEFAULT_WINDOW_LEN,
            split_ratios: SplitRatios::default(),
            output_dir: PathBuf::from("runs"),
            models: SpecId::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            jobs: 1,
            fc_width: 14,
            conv_padding: Padding::Valid,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.data_path.exists() {
            return Err(Error::InvalidConfig(format!(
                "data file not found: {}",
                self.data_path.display()
            )));
        }
        if self.window_len < 1 {
            return Err(Error::InvalidConfig("window_len must be >= 1".into()));
        }
        self.split_ratios.validate()?;
        self.train.validate()?;
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("model list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list is empty".into()));
        }
        if let (Some(start), Some(end)) = (self.start_date, self.end_date) {
            if start > end {
                return Err(Error::InvalidConfig(format!("start_date {start} is after end_date {end}")));
            }
        }
        Ok(())
    }

    /// Output directory, rerooted under [`OUTPUT_ROOT_ENV`] when that is set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_with_partial_file() {
        let text = r#"
            window_len = 14
            seeds = [7]
            models = ["conv1fc", "fc1"]

            [train]
            max_epochs = 50
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.models, vec![SpecId::Conv1fc, SpecId::Fc1]);
        assert_eq!(cfg.train.max_epochs, 50);
        // untouched fields keep their defaults
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.split_ratios, SplitRatios::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<RunConfig>("windw_len = 14").unwrap_err();
        assert!(err.to_string().contains("windw_len"));
    }

    #[test]
    fn full_default_serializes_and_reloads() {
        let cfg = RunConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(toml::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn validation_catches_bad_dates_and_missing_data() {
        let mut cfg = RunConfig::default();
        cfg.data_path = PathBuf::from("/definitely/not/here.csv");
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn output_root_env_reroots() {
        // set/unset carefully: tests in this binary run in parallel threads
        let cfg = RunConfig {
            output_dir: PathBuf::from("runs"),
            ..RunConfig::default()
        };
        let plain = cfg.resolved_output_dir();
        assert_eq!(plain, PathBuf::from("runs"));
    }
}
