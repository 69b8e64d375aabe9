use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::MeaConfig;
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::eval::SamplerId;
use crate::surrogate::{AlConfig, Family, TrainConfig};

/// Smallest accepted dataset size.
pub const MIN_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub samplers: Vec<SamplerId>,
    /// States per generative design and transitions per agent dataset.
    pub samples: usize,
    pub families: Vec<Family>,
    pub split_fraction: f64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Dataset cache; `SURROFORGE_CACHE` takes precedence, and the default
    /// is `<out_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Exploration rates of the partially expert policies mixed into `pa`.
    pub partial_epsilons: Vec<f64>,
    pub train: TrainConfig,
    pub mea: MeaConfig,
    pub al: AlConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvKind::MountainCar,
            samplers: vec![
                SamplerId::Al,
                SamplerId::Lhs,
                SamplerId::Sobol,
                SamplerId::Random,
                SamplerId::Ea,
                SamplerId::Ra,
                SamplerId::Mea,
                SamplerId::Ma,
                SamplerId::Mpa,
            ],
            samples: 100_000,
            families: vec![Family::Gbt],
            split_fraction: 0.8,
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("results"),
            cache_dir: None,
            jobs: None,
            partial_epsilons: vec![0.25, 0.5, 0.75],
            train: TrainConfig::default(),
            mea: MeaConfig::default(),
            al: AlConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.samplers.is_empty() {
            return bad("the sampler roster is empty".into());
        }
        if self.samplers.iter().collect::<BTreeSet<_>>().len() != self.samplers.len() {
            return bad("the sampler roster lists a sampler twice".into());
        }
        if self.families.is_empty() {
            return bad("no model family selected".into());
        }
        if self.samples < MIN_SAMPLES {
            return bad(format!("samples = {} is below the minimum of {MIN_SAMPLES}", self.samples));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction = {} must lie in (0, 1)", self.split_fraction));
        }
        if self.seeds.is_empty() || self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be a non-empty list of distinct integers".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive".into());
        }
        if self.samplers.contains(&SamplerId::Pa)
            && (self.partial_epsilons.is_empty() || self.partial_epsilons.iter().any(|e| !(0.0..=1.0).contains(e)))
        {
            return bad("partial_epsilons must be a non-empty list of values in [0, 1]".into());
        }
        let wrap = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        wrap(self.train.validate())?;
        wrap(self.mea.validate())?;
        wrap(self.al.validate())
    }

    pub fn cache_dir(&self) -> PathBuf {
        std::env::var_os("SURROFORGE_CACHE")
            .map(PathBuf::from)
            .or_else(|| self.cache_dir.clone())
            .unwrap_or_else(|| self.out_dir.join("cache"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn shipped_defaults_file_matches_code() {
        let text = include_str!("../../../../config/defaults.toml");
        assert_eq!(ExperimentConfig::from_toml(text).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("env = \"cartpole\"\nsamples = 500\n[mea]\niterations = 3\n").unwrap();
        assert_eq!(cfg.env, EnvKind::CartPole);
        assert_eq!(cfg.samples, 500);
        assert_eq!(cfg.mea.iterations, 3);
        assert_eq!(cfg.mea.population, 64);
        assert_eq!(cfg.train.gbt.trees, 100);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "samplers = [\"lhs\", \"bogus\"]",
            "samplers = []",
            "samplers = [\"lhs\", \"lhs\"]",
            "samples = 10",
            "split_fraction = 1.0",
            "seeds = []",
            "families = [\"xgb\"]",
            "unknown_key = 1",
            "[mlp]\nepochs = 0",
            "[train.mlp]\nepochs = 0",
            "env = \"acrobot\"",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert!(err.is_validation(), "{text}: {err}");
        }
    }
}
