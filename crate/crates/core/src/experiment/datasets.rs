//! Dataset construction for every sampler id, with an on-disk cache keyed
//! by a hash of everything that determines the dataset's content.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::agents::{collect, mix_datasets, train_max_entropy_policy, MeaConfig, Policy};
use crate::dataset::{Dataset, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::eval::SamplerId;
use crate::rng::{derive_seed, tag};
use crate::sampling::{build_generative_dataset, env_plan, SpaceMethod};
use crate::surrogate::kriging_active_learning;

/// Per-seed, per-sampler datasets; build failures are kept as messages.
pub type DatasetTable = BTreeMap<u64, BTreeMap<SamplerId, std::result::Result<Dataset, String>>>;

fn stream(seed: u64, path: &[&str]) -> u64 {
    derive_seed(seed, &path.iter().map(|p| tag(p)).collect::<Vec<_>>())
}

/// MEA training settings for one experiment seed.
pub fn mea_config(cfg: &ExperimentConfig, seed: u64) -> MeaConfig {
    MeaConfig { seed: derive_seed(seed, &[tag("mea/policy"), cfg.mea.seed]), ..cfg.mea.clone() }
}

fn needs_mea(sampler: SamplerId) -> bool {
    matches!(sampler, SamplerId::Mea | SamplerId::Ma)
}

/// Builds one dataset from scratch. `mea` must be given for `mea` and `ma`.
pub fn build_dataset(cfg: &ExperimentConfig, sampler: SamplerId, seed: u64, mea: Option<&Policy>) -> Result<Dataset> {
    let env = cfg.env;
    let k = cfg.samples;
    let id = sampler.id();
    let mea = || mea.ok_or_else(|| Error::InvalidArgument(format!("sampler {id} needs a trained max-entropy policy")));
    let agent = |policy: &Policy, name: &str| collect(policy, k, stream(seed, &[id, name]), name);
    let mixed = |parts: Vec<Dataset>| {
        let share = 1.0 / parts.len() as f64;
        let weighted: Vec<(&Dataset, f64)> = parts.iter().map(|d| (d, share)).collect();
        let mut out = mix_datasets(&weighted, k, stream(seed, &[id, "mix"]), id)?;
        out.meta.seed = seed;
        Ok::<_, Error>(out)
    };
    let mut data = match sampler {
        SamplerId::Lhs | SamplerId::Sobol | SamplerId::Random => {
            let method: SpaceMethod = id.parse()?;
            build_generative_dataset(env, &env_plan(env, method, k, stream(seed, &[id])))?
        }
        SamplerId::Al => kriging_active_learning(env, &cfg.al, &cfg.train.gp, stream(seed, &[id]))?.dataset,
        SamplerId::Ra => collect(&Policy::random(env), k, stream(seed, &[id]), id)?,
        SamplerId::Ea => collect(&Policy::expert(env), k, stream(seed, &[id]), id)?,
        SamplerId::Mea => collect(mea()?, k, stream(seed, &[id]), id)?,
        // Constituents are fresh collections so a mix never shares rows with
        // the standalone agent datasets it is evaluated against.
        SamplerId::Ma => {
            mixed(vec![agent(&Policy::expert(env), "ea")?, agent(&Policy::random(env), "ra")?, agent(mea()?, "mea")?])?
        }
        SamplerId::Mpa => mixed(vec![agent(&Policy::expert(env), "ea")?, agent(&Policy::random(env), "ra")?])?,
        SamplerId::Pa => mixed(
            cfg.partial_epsilons
                .iter()
                .enumerate()
                .map(|(i, &eps)| {
                    collect(&Policy::partial(env, eps)?, k, stream(seed, &[id, "partial", &i.to_string()]), "pa")
                })
                .collect::<Result<_>>()?,
        )?,
    };
    data.meta.sampler = id.to_string();
    data.meta.seed = seed;
    Ok(data)
}

#[derive(Serialize)]
struct CacheKey<'a> {
    format_version: u32,
    env: &'a str,
    sampler: &'a str,
    samples: usize,
    seed: u64,
    settings: serde_json::Value,
}

fn sampler_settings(cfg: &ExperimentConfig, sampler: SamplerId, seed: u64) -> serde_json::Value {
    match sampler {
        SamplerId::Al => serde_json::json!({ "al": cfg.al, "gp": cfg.train.gp }),
        SamplerId::Mea | SamplerId::Ma => serde_json::json!({ "mea": mea_config(cfg, seed) }),
        SamplerId::Pa => serde_json::json!({ "partial_epsilons": cfg.partial_epsilons }),
        _ => serde_json::Value::Null,
    }
}

fn digest(value: &impl Serialize) -> String {
    let text = serde_json::to_string(value).expect("cache key serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Cache file of one dataset.
pub fn dataset_cache_path(cfg: &ExperimentConfig, sampler: SamplerId, seed: u64) -> PathBuf {
    let key = CacheKey {
        format_version: FORMAT_VERSION,
        env: cfg.env.name(),
        sampler: sampler.id(),
        samples: cfg.samples,
        seed,
        settings: sampler_settings(cfg, sampler, seed),
    };
    cfg.cache_dir().join(format!("{}_{}_seed{seed}_{}.csv", cfg.env.name(), sampler.id(), &digest(&key)[..16]))
}

fn policy_cache_path(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    let key = serde_json::json!({ "env": cfg.env.name(), "mea": mea_config(cfg, seed) });
    cfg.cache_dir().join(format!("{}_mea-policy_seed{seed}_{}.json", cfg.env.name(), &digest(&key)[..16]))
}

fn ensure_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        None => Ok(()),
    }
}

/// Loads or trains the max-entropy policy of every seed that needs one.
fn mea_policies(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<BTreeMap<u64, Policy>> {
    let mut out = BTreeMap::new();
    let mut todo = Vec::new();
    for &seed in seeds {
        let path = policy_cache_path(cfg, seed);
        if path.exists() {
            log::info!("cache hit: {}", path.display());
            out.insert(seed, Policy::load(&path)?);
        } else {
            todo.push(seed);
        }
    }
    let trained: Vec<(u64, Result<Policy>)> = todo
        .par_iter()
        .map(|&seed| {
            let r = train_max_entropy_policy(cfg.env, &mea_config(cfg, seed)).map(|o| {
                log::info!("seed {seed}: max-entropy policy reached {:.4} nats", o.best_score);
                o.policy
            });
            (seed, r)
        })
        .collect();
    for (seed, policy) in trained {
        let policy = policy?;
        let path = policy_cache_path(cfg, seed);
        ensure_dir(&path)?;
        policy.save(&path)?;
        out.insert(seed, policy);
    }
    Ok(out)
}

/// Every `(seed, sampler)` dataset of the experiment, read from the cache
/// when present. New datasets are built in parallel and then written to the
/// cache one at a time.
pub fn prepare_datasets(cfg: &ExperimentConfig) -> Result<DatasetTable> {
    let mut table: DatasetTable = cfg.seeds.iter().map(|&s| (s, BTreeMap::new())).collect();
    let mut todo = Vec::new();
    for &seed in &cfg.seeds {
        for &sampler in &cfg.samplers {
            let path = dataset_cache_path(cfg, sampler, seed);
            if path.exists() {
                log::info!("cache hit: {}", path.display());
                let loaded = Dataset::load(&path).map_err(|e| e.to_string());
                table.get_mut(&seed).expect("seed row").insert(sampler, loaded);
            } else {
                todo.push((seed, sampler));
            }
        }
    }
    let mea_seeds: Vec<u64> =
        cfg.seeds.iter().copied().filter(|s| todo.iter().any(|&(t, x)| t == *s && needs_mea(x))).collect();
    let policies = mea_policies(cfg, &mea_seeds)?;

    let built: Vec<((u64, SamplerId), Result<Dataset>)> = todo
        .par_iter()
        .map(|&(seed, sampler)| {
            log::info!("building {sampler} dataset for seed {seed}");
            ((seed, sampler), build_dataset(cfg, sampler, seed, policies.get(&seed)))
        })
        .collect();
    for ((seed, sampler), data) in built {
        let entry = match data {
            Ok(d) => {
                let path = dataset_cache_path(cfg, sampler, seed);
                ensure_dir(&path)?;
                d.save(&path)?;
                log::info!("wrote {} ({} transitions)", path.display(), d.len());
                Ok(d)
            }
            Err(e) => {
                log::error!("seed {seed}: could not build {sampler} dataset: {e}");
                Err(e.to_string())
            }
        };
        table.get_mut(&seed).expect("seed row").insert(sampler, entry);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvKind;

    fn small(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            env: EnvKind::MountainCar,
            samples: 300,
            seeds: vec![0],
            cache_dir: Some(dir.to_path_buf()),
            ..Default::default()
        };
        cfg.mea.iterations = 1;
        cfg.mea.population = 4;
        cfg.mea.episodes_per_eval = 1;
        cfg.al.pool_size = 64;
        cfg.al.max_points_per_epoch = 5;
        cfg.partial_epsilons = vec![0.2, 0.8];
        cfg
    }

    #[test]
    fn every_sampler_builds_with_expected_size() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let mea = train_max_entropy_policy(cfg.env, &mea_config(&cfg, 0)).unwrap().policy;
        for sampler in SamplerId::ALL {
            let d = build_dataset(&cfg, sampler, 0, Some(&mea)).unwrap();
            match sampler.group() {
                crate::eval::SamplerGroup::Generative => assert_eq!(d.len(), 900, "{sampler}"),
                crate::eval::SamplerGroup::Kriging => assert!((64..=64 + 15).contains(&d.len())),
                crate::eval::SamplerGroup::AgentBased => assert_eq!(d.len(), 300, "{sampler}"),
            }
            assert_eq!(d.meta.sampler, sampler.id());
        }
        assert!(build_dataset(&cfg, SamplerId::Ma, 0, None).is_err());
    }

    #[test]
    fn mixes_do_not_reuse_standalone_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let ea = build_dataset(&cfg, SamplerId::Ea, 0, None).unwrap();
        let mpa = build_dataset(&cfg, SamplerId::Mpa, 0, None).unwrap();
        assert!(mpa.transitions.iter().all(|t| !ea.transitions.contains(t)));
    }

    #[test]
    fn cache_key_tracks_relevant_settings() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let mut other = cfg.clone();
        other.mea.iterations = 2;
        assert_eq!(dataset_cache_path(&cfg, SamplerId::Lhs, 0), dataset_cache_path(&other, SamplerId::Lhs, 0));
        assert_ne!(dataset_cache_path(&cfg, SamplerId::Mea, 0), dataset_cache_path(&other, SamplerId::Mea, 0));
        assert_ne!(dataset_cache_path(&cfg, SamplerId::Lhs, 0), dataset_cache_path(&cfg, SamplerId::Lhs, 1));
        other.samples = 301;
        assert_ne!(dataset_cache_path(&cfg, SamplerId::Lhs, 0), dataset_cache_path(&other, SamplerId::Lhs, 0));
    }

    #[test]
    fn cached_file_equals_regeneration() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.samplers = vec![SamplerId::Lhs, SamplerId::Ra];
        prepare_datasets(&cfg).unwrap();
        let path = dataset_cache_path(&cfg, SamplerId::Ra, 0);
        let cached = fs::read(&path).unwrap();
        let mut fresh = Vec::new();
        build_dataset(&cfg, SamplerId::Ra, 0, None).unwrap().write_csv(&mut fresh).unwrap();
        assert_eq!(cached, fresh);
        let again = prepare_datasets(&cfg).unwrap();
        assert_eq!(again[&0][&SamplerId::Ra].as_ref().unwrap().len(), 300);
    }
}
