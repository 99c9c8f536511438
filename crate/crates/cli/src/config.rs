//! JSON run configuration with command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use treesegnet::geometry::{default_margin, DEFAULT_SIGMA};
use treesegnet::network::{NetworkSpec, ResNextSpec, DEFAULT_INPUT_SCALE};
use treesegnet::nn::DEFAULT_MOMENTUM;
use treesegnet::trainer::{TrainConfig, BASE_LR};

use crate::error::CliError;

/// Every setting a run can take from a file. Absent keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub tile_size: usize,
    /// Defaults to an eighth of the tile side.
    pub margin: Option<usize>,
    pub sigma: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub depth: usize,
    /// Defaults to 16, 32, 64, ... for the configured depth.
    pub base_channels: Option<Vec<usize>>,
    pub resnext: ResNextSpec,
    pub num_classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub passes: usize,
    pub momentum: f64,
    pub base_lr: f64,
    /// Defaults to the available parallelism.
    pub workers: Option<usize>,
    pub synthetic: SyntheticData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticData {
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub scene_side: usize,
}

impl Default for SyntheticData {
    fn default() -> Self {
        Self {
            train_scenes: 50,
            val_scenes: 6,
            scene_side: 128,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let net = NetworkSpec::default();
        let train = TrainConfig::default();
        Self {
            seed: 0,
            tile_size: train.tile,
            margin: None,
            sigma: DEFAULT_SIGMA,
            k: net.first_conv_channels,
            depth: net.depth,
            base_channels: None,
            resnext: net.resnext,
            num_classes: net.num_classes,
            epochs: train.epochs,
            batch_size: train.batch_size,
            passes: train.max_passes,
            momentum: DEFAULT_MOMENTUM,
            base_lr: BASE_LR,
            workers: None,
            synthetic: SyntheticData::default(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tile_size: Option<usize>,
    pub margin: Option<usize>,
    pub sigma: Option<f64>,
    pub k: Option<usize>,
    pub depth: Option<usize>,
    pub epochs: Option<usize>,
    pub passes: Option<usize>,
    pub workers: Option<usize>,
}

pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, CliError> {
    if text.trim().is_empty() {
        return Ok(RunConfig::default());
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        origin: origin.to_string(),
        key: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| treesegnet::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config(&text, &path.display().to_string())
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        take!(seed, tile_size, sigma, k, depth, epochs, passes);
        if o.margin.is_some() {
            self.margin = o.margin;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
    }

    pub fn margin(&self) -> usize {
        self.margin.unwrap_or_else(|| default_margin(self.tile_size))
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            depth: self.depth,
            first_conv_channels: self.k,
            base_channels: self
                .base_channels
                .clone()
                .unwrap_or_else(|| (0..self.depth).map(|i| 16 << i).collect()),
            resnext: self.resnext,
            num_classes: self.num_classes,
            class_tree: None,
            input_scale: DEFAULT_INPUT_SCALE.to_vec(),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            network: self.network_spec(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            tile: self.tile_size,
            margin: self.margin(),
            sigma: self.sigma,
            base_lr: self.base_lr,
            momentum: self.momentum,
            seed: self.seed,
            max_passes: self.passes,
            workers: self.workers(),
        };
        cfg.validate()?;
        cfg.network.validate_strict()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        for text in ["", "{}", "  \n"] {
            let c = parse_config(text, "test").unwrap();
            assert_eq!(c, RunConfig::default());
            assert_eq!(c.k, 64);
            assert_eq!(c.sigma, 0.5);
            assert_eq!(c.momentum, 0.9);
            assert_eq!(c.margin(), 8);
        }
    }

    #[test]
    fn flags_override_file() {
        let mut c = parse_config(r#"{"K": 64, "sigma": 0.3, "tile_size": 128}"#, "test").unwrap();
        c.apply(&Overrides {
            k: Some(32),
            ..Overrides::default()
        });
        assert_eq!(c.k, 32);
        assert_eq!(c.sigma, 0.3);
        assert_eq!(c.margin(), 16);
        assert_eq!(c.train_config().unwrap().network.first_conv_channels, 32);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(r#"{"sgima": 0.5}"#, "run.json").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("sgima"), "{text}");
        assert!(matches!(err, CliError::Config { .. }));
        let err = parse_config(r#"{"resnext": {"cardinality": "x"}}"#, "run.json").unwrap_err();
        assert!(err.to_string().contains("resnext.cardinality"), "{err}");
    }

    #[test]
    fn depth_sets_default_widths() {
        let mut c = RunConfig::default();
        c.depth = 4;
        c.tile_size = 64;
        assert_eq!(c.network_spec().base_channels, vec![16, 32, 64, 128]);
        assert!(c.train_config().is_ok());
        c.k = 24;
        assert!(c.train_config().is_err());
    }
}
