//! Maximum-entropy exploration policy trained with the cross-entropy method.
//!
//! Each candidate parameter vector is rolled out for a few episodes and
//! scored by the k-NN entropy of the states it visits (z-scored against the
//! sampling bounds). The search distribution is a diagonal Gaussian refit to
//! the elite candidates every iteration.

use std::collections::HashSet;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{PolicyNet, StateScaler};
use super::policy::Policy;
use crate::entropy::{knn_entropy, DEFAULT_K};
use crate::env::{ActionSpace, EnvKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, tag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeaConfig {
    /// Steps per evaluation episode; `None` uses the environment's cap.
    pub horizon: Option<usize>,
    pub episodes_per_eval: usize,
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub k_neighbors: usize,
    pub hidden: usize,
    pub init_std: f64,
    pub min_std: f64,
    pub seed: u64,
}

impl Default for MeaConfig {
    fn default() -> Self {
        MeaConfig {
            horizon: None,
            episodes_per_eval: 8,
            population: 64,
            elite_fraction: 0.125,
            iterations: 50,
            k_neighbors: DEFAULT_K,
            hidden: PolicyNet::DEFAULT_HIDDEN,
            init_std: 1.0,
            min_std: 0.05,
            seed: 0,
        }
    }
}

impl MeaConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes_per_eval", self.episodes_per_eval),
            ("population", self.population),
            ("k_neighbors", self.k_neighbors),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("mea.{name} must be positive")));
        }
        if self.horizon == Some(0) {
            return Err(Error::InvalidArgument("mea.horizon must be positive".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(Error::InvalidArgument("mea.elite_fraction must lie in (0, 1)".into()));
        }
        if !(self.init_std > 0.0 && self.min_std >= 0.0) {
            return Err(Error::InvalidArgument("mea.init_std must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MeaOutcome {
    pub policy: Policy,
    /// Entropy (nats) of the best candidate ever evaluated.
    pub best_score: f64,
    /// Best score within each population, initial population first.
    pub history: Vec<f64>,
}

/// Visited states of `policy` over `episodes` rollouts of at most `horizon`
/// steps each, including every episode's initial state.
pub fn visited_states(policy: &Policy, episodes: usize, horizon: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut env = policy.env.make();
    let mut rng = rng_from(seed, &[tag("mea/actions")]);
    let mut states = Vec::with_capacity(episodes * (horizon + 1));
    for e in 0..episodes {
        let mut s = env.reset(derive_seed(seed, &[tag("mea/episode"), e as u64]));
        states.push(s.clone());
        for _ in 0..horizon {
            let r = env.step(&policy.act(&s, &mut rng))?;
            s = r.next_state;
            states.push(s.clone());
            if r.done {
                break;
            }
        }
    }
    Ok(states)
}

/// Entropy of a state sample in the environment's normalized coordinates.
/// Exact repeats (e.g. MountainCar's wall reset to `(-1.2, 0)`) are dropped
/// first; samples still degenerate after that score negative infinity.
pub fn state_entropy(env: EnvKind, states: &[Vec<f64>], k: usize) -> f64 {
    let scaler = StateScaler::from_bounds(&env.spec().sampling_bounds);
    let mut seen = HashSet::with_capacity(states.len());
    let z: Vec<Vec<f64>> = states
        .iter()
        .filter(|s| seen.insert(s.iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .map(|s| scaler.apply(s))
        .collect();
    knn_entropy(&z, k).map(|h| h.value).unwrap_or(f64::NEG_INFINITY)
}

fn output_dim(env: EnvKind) -> usize {
    match env.spec().action_space {
        ActionSpace::Discrete(m) => m,
        ActionSpace::Continuous(b) => b.len(),
    }
}

pub fn train_max_entropy_policy(env: EnvKind, cfg: &MeaConfig) -> Result<MeaOutcome> {
    cfg.validate()?;
    let spec = env.spec();
    let (input, hidden, output) = (spec.state_dim, cfg.hidden, output_dim(env));
    let dim = PolicyNet::param_count(input, hidden, output);
    let horizon = cfg.horizon.unwrap_or(spec.max_episode_steps);
    let n_elite = ((cfg.elite_fraction * cfg.population as f64).round() as usize).clamp(1, cfg.population);

    let mut mean = vec![0.0; dim];
    let mut std = vec![cfg.init_std; dim];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut history = Vec::with_capacity(cfg.iterations + 1);

    for iter in 0..=cfg.iterations {
        let scored: Vec<(f64, Vec<f64>)> = (0..cfg.population)
            .into_par_iter()
            .map(|c| -> Result<(f64, Vec<f64>)> {
                let path = [tag("mea/candidate"), iter as u64, c as u64];
                let mut rng = rng_from(cfg.seed, &path);
                let params: Vec<f64> =
                    mean.iter().zip(&std).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect();
                let policy = Policy::max_entropy(env, PolicyNet::new(input, hidden, output, params.clone()))?;
                let states = visited_states(&policy, cfg.episodes_per_eval, horizon, derive_seed(cfg.seed, &path))?;
                Ok((state_entropy(env, &states, cfg.k_neighbors), params))
            })
            .collect::<Result<_>>()?;

        // Stable ranking: score descending, candidate index ascending.
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0).then(a.cmp(&b)));
        let top = &scored[order[0]];
        history.push(top.0);
        if best.as_ref().is_none_or(|(s, _)| top.0 > *s) {
            best = Some(top.clone());
        }
        if iter == cfg.iterations {
            break;
        }
        let elites: Vec<&Vec<f64>> = order[..n_elite].iter().map(|&i| &scored[i].1).collect();
        for j in 0..dim {
            let m = elites.iter().map(|p| p[j]).sum::<f64>() / n_elite as f64;
            let v = elites.iter().map(|p| (p[j] - m) * (p[j] - m)).sum::<f64>() / n_elite as f64;
            mean[j] = m;
            std[j] = v.sqrt().max(cfg.min_std);
        }
        log::debug!("mea {env} iter {iter}: best {:.4} nats", top.0);
    }

    let (best_score, params) = best.expect("at least one population is evaluated");
    if !best_score.is_finite() {
        return Err(Error::Diverged("every candidate produced a degenerate state sample".into()));
    }
    Ok(MeaOutcome {
        policy: Policy::max_entropy(env, PolicyNet::new(input, hidden, output, params))?,
        best_score,
        history,
    })
}
