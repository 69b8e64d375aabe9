//! Kriging with active learning: grow a transition dataset by repeatedly
//! simulating the candidate whose GP predictive standard deviation is
//! largest.
//!
//! Each epoch freezes the input and target normalization at its start,
//! draws a fresh LHS candidate pool and keeps, per candidate,
//! `v = L^-1 k(X, x)` so that adding a point is a rank-one update of every
//! candidate's posterior variance rather than a refit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gp::{Cholesky, GpConfig, GpModel};
use super::{encode_input, fit_gp, Normalizer, SurrogateModel};
use crate::dataset::{Dataset, DatasetMeta, Transition};
use crate::env::{Action, ActionSpace, EnvKind, Interval};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};
use crate::sampling::{lhs_sample, simulate, SamplePlan, SpaceMethod};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlConfig {
    /// LHS candidate states drawn per epoch (crossed with every action in
    /// discrete-action environments). Memory grows as
    /// `pool_size * actions * dataset size`.
    pub pool_size: usize,
    pub max_points_per_epoch: usize,
    /// Stop an epoch once every candidate's latent std, in normalized
    /// target units, is below this.
    pub std_threshold: f64,
    pub epochs: usize,
    pub initial_points: usize,
}

impl Default for AlConfig {
    fn default() -> Self {
        AlConfig { pool_size: 4_096, max_points_per_epoch: 300, std_threshold: 0.01, epochs: 3, initial_points: 64 }
    }
}

impl AlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0
            || self.max_points_per_epoch == 0
            || !(self.std_threshold > 0.0)
            || self.epochs == 0
            || self.initial_points < 2
        {
            return Err(Error::InvalidArgument("active-learning settings must be positive".into()));
        }
        Ok(())
    }

    pub fn max_dataset_size(&self) -> usize {
        self.initial_points + self.epochs * self.max_points_per_epoch
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    Cap,
    PoolExhausted,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Threshold => "threshold",
            StopReason::Cap => "cap",
            StopReason::PoolExhausted => "pool exhausted",
        })
    }
}

/// Epoch stopping rule, checked before every acquisition: the cap first,
/// then the threshold on the largest remaining std.
pub fn stop_reason(added: usize, max_std: Option<f64>, cfg: &AlConfig) -> Option<StopReason> {
    if added >= cfg.max_points_per_epoch {
        return Some(StopReason::Cap);
    }
    match max_std {
        None => Some(StopReason::PoolExhausted),
        Some(s) if s < cfg.std_threshold => Some(StopReason::Threshold),
        Some(_) => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlEpoch {
    pub epoch: usize,
    pub added: usize,
    pub stop: StopReason,
    /// Largest candidate std when the epoch stopped.
    pub final_max_std: f64,
}

#[derive(Clone, Debug)]
pub struct AlOutcome {
    pub model: SurrogateModel,
    pub dataset: Dataset,
    pub epochs: Vec<AlEpoch>,
}

/// Candidate states plus, for discrete envs, one extra coordinate in
/// `[0, m)` floored to an action index.
fn initial_design(env: EnvKind, count: usize, seed: u64) -> Result<Vec<(Vec<f64>, Action)>> {
    let spec = env.spec();
    let n = spec.state_dim;
    let mut bounds = spec.generative_bounds();
    if let ActionSpace::Discrete(m) = spec.action_space {
        bounds.push(Interval::new(0.0, m as f64));
    }
    let points = lhs_sample(&SamplePlan::new(SpaceMethod::Lhs, count, bounds, seed))?;
    Ok(points
        .into_iter()
        .map(|p| {
            let action = match spec.action_space {
                ActionSpace::Discrete(m) => Action::Discrete((p[n].floor() as usize).min(m - 1)),
                ActionSpace::Continuous(_) => Action::Continuous(p[n..].to_vec()),
            };
            (p[..n].to_vec(), action)
        })
        .collect())
}

fn candidate_pool(env: EnvKind, count: usize, seed: u64) -> Result<Vec<(Vec<f64>, Action)>> {
    let spec = env.spec();
    let n = spec.state_dim;
    let points = lhs_sample(&SamplePlan::new(SpaceMethod::Lhs, count, spec.generative_bounds(), seed))?;
    Ok(match spec.action_space {
        ActionSpace::Discrete(m) => {
            points.into_iter().flat_map(|p| (0..m).map(move |a| (p.clone(), Action::Discrete(a)))).collect()
        }
        ActionSpace::Continuous(_) => {
            points.into_iter().map(|p| (p[..n].to_vec(), Action::Continuous(p[n..].to_vec()))).collect()
        }
    })
}

struct Candidate {
    x: Vec<f64>,
    v: Vec<f64>,
    var: f64,
    taken: bool,
}

fn max_std(cands: &[Candidate]) -> Option<(usize, f64)> {
    cands
        .par_iter()
        .enumerate()
        .filter(|(_, c)| !c.taken)
        .map(|(i, c)| (i, c.var.max(0.0).sqrt()))
        // Lowest index wins ties so the reduction is order independent.
        .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
}

/// Runs the acquisition loop and returns the final GP, fit on the initial
/// design plus every acquired transition, together with that dataset.
pub fn kriging_active_learning(env: EnvKind, al: &AlConfig, gp: &GpConfig, seed: u64) -> Result<AlOutcome> {
    al.validate()?;
    gp.validate()?;
    let mut sim = env.make();
    let mut transitions: Vec<Transition> =
        initial_design(env, al.initial_points, derive_seed(seed, &[tag("al/init")]))?
            .iter()
            .map(|(s, a)| simulate(sim.as_mut(), s, a))
            .collect::<Result<_>>()?;
    let mut epochs = Vec::with_capacity(al.epochs);

    for epoch in 0..al.epochs {
        let current = Dataset::new(DatasetMeta::new(env, "al", seed), transitions.clone());
        let inputs =
            current.transitions.iter().map(|t| encode_input(env, &t.state, &t.action)).collect::<Result<Vec<_>>>()?;
        let norm = Normalizer::fit(&inputs)?;
        let z: Vec<Vec<f64>> = inputs.iter().map(|x| norm.apply(x)).collect();
        // Targets do not affect the posterior variance; zeros keep the
        // factorization identical to a full fit.
        let zeros = vec![vec![0.0]; z.len()];
        let base = GpModel::fit(&z, &zeros, &GpConfig { max_points: usize::MAX, ..gp.clone() })?;
        let kernel = base.kernel.clone();
        let noise = base.noise_variance;
        let mut chol: Cholesky = base.chol;
        let mut train_x = z;

        let pool = candidate_pool(env, al.pool_size, derive_seed(seed, &[tag("al/pool"), epoch as u64]))?;
        let mut cands: Vec<Candidate> = pool
            .par_iter()
            .map(|(s, a)| {
                let x = norm.apply(&encode_input(env, s, a).expect("pool matches env"));
                let k: Vec<f64> = train_x.iter().map(|t| kernel.eval(t, &x)).collect();
                let v = chol.forward(&k);
                let var = kernel.eval(&x, &x) - v.iter().map(|e| e * e).sum::<f64>();
                Candidate { x, v, var, taken: false }
            })
            .collect();

        let mut added = 0;
        let (stop, final_max_std) = loop {
            let best = max_std(&cands);
            if let Some(reason) = stop_reason(added, best.map(|b| b.1), al) {
                break (reason, best.map_or(0.0, |b| b.1));
            }
            let (i, _) = best.expect("checked by stop_reason");
            let (state, action) = &pool[i];
            transitions.push(simulate(sim.as_mut(), state, action)?);
            added += 1;

            let x_new = cands[i].x.clone();
            let v_new = cands[i].v.clone();
            let d = chol.push(v_new.clone(), kernel.eval(&x_new, &x_new) + noise)?;
            train_x.push(x_new.clone());
            cands[i].taken = true;
            cands.par_iter_mut().filter(|c| !c.taken).for_each(|c| {
                let dot: f64 = c.v.iter().zip(&v_new).map(|(a, b)| a * b).sum();
                let e = (kernel.eval(&c.x, &x_new) - dot) / d;
                c.v.push(e);
                c.var -= e * e;
            });
        };
        log::info!(
            "active learning epoch {}: added {added} points, stopped on {stop} (max std {final_max_std:.4})",
            epoch + 1
        );
        epochs.push(AlEpoch { epoch: epoch + 1, added, stop, final_max_std });
    }

    let meta = DatasetMeta::new(env, "al", seed)
        .with_param("initial_points", al.initial_points)
        .with_param("pool_size", al.pool_size)
        .with_param("epochs", &epochs);
    let dataset = Dataset::new(meta, transitions);
    let model = fit_gp(&dataset, &GpConfig { max_points: gp.max_points.max(dataset.len()), ..gp.clone() })?;
    Ok(AlOutcome { model, dataset, epochs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rule() {
        let cfg = AlConfig::default();
        assert_eq!(stop_reason(0, Some(0.009), &cfg), Some(StopReason::Threshold));
        assert_eq!(stop_reason(17, Some(0.0099), &cfg), Some(StopReason::Threshold));
        assert_eq!(stop_reason(17, Some(0.01), &cfg), None);
    }

    #[test]
    fn cap_rule() {
        let cfg = AlConfig::default();
        assert_eq!(stop_reason(300, Some(0.5), &cfg), Some(StopReason::Cap));
        assert_eq!(stop_reason(299, Some(0.5), &cfg), None);
        assert_eq!(stop_reason(10, None, &cfg), Some(StopReason::PoolExhausted));
    }

    fn small() -> AlConfig {
        AlConfig { pool_size: 200, max_points_per_epoch: 40, epochs: 3, ..Default::default() }
    }

    #[test]
    fn mountain_car_run_respects_bounds() {
        let cfg = small();
        let out = kriging_active_learning(EnvKind::MountainCar, &cfg, &GpConfig::default(), 0).unwrap();
        assert_eq!(out.epochs.len(), 3);
        let acquired: usize = out.epochs.iter().map(|e| e.added).sum();
        assert_eq!(out.dataset.len(), cfg.initial_points + acquired);
        assert!(out.dataset.len() <= cfg.max_dataset_size());
        for e in &out.epochs {
            assert!(e.added <= cfg.max_points_per_epoch);
            match e.stop {
                StopReason::Cap => assert_eq!(e.added, cfg.max_points_per_epoch),
                StopReason::Threshold => assert!(e.final_max_std < cfg.std_threshold),
                StopReason::PoolExhausted => panic!("pool of 600 cannot be exhausted by 40 picks"),
            }
        }
        let mut env = EnvKind::MountainCar.make();
        for t in &out.dataset.transitions {
            assert_eq!(simulate(env.as_mut(), &t.state, &t.action).unwrap().next_state, t.next_state);
        }
    }

    #[test]
    fn loose_threshold_stops_immediately() {
        let cfg = AlConfig { std_threshold: 2.0, ..small() };
        let out = kriging_active_learning(EnvKind::Pendulum, &cfg, &GpConfig::default(), 1).unwrap();
        assert!(out.epochs.iter().all(|e| e.added == 0 && e.stop == StopReason::Threshold));
        assert_eq!(out.dataset.len(), cfg.initial_points);
    }

    #[test]
    fn incremental_variance_matches_refit() {
        let cfg =
            AlConfig { pool_size: 50, max_points_per_epoch: 10, epochs: 1, initial_points: 16, ..Default::default() };
        let out = kriging_active_learning(EnvKind::Pendulum, &cfg, &GpConfig::default(), 2).unwrap();
        let e = &out.epochs[0];
        assert_eq!(e.stop, StopReason::Cap);
        // Every acquired point must have been the arg-max of a full refit on
        // the points before it.
        let inputs: Vec<Vec<f64>> = out
            .dataset
            .transitions
            .iter()
            .map(|t| encode_input(EnvKind::Pendulum, &t.state, &t.action).unwrap())
            .collect();
        let norm = Normalizer::fit(&inputs[..16]).unwrap();
        let z: Vec<Vec<f64>> = inputs.iter().map(|x| norm.apply(x)).collect();
        let pool = candidate_pool(EnvKind::Pendulum, 50, derive_seed(2, &[tag("al/pool"), 0])).unwrap();
        let pz: Vec<Vec<f64>> =
            pool.iter().map(|(s, a)| norm.apply(&encode_input(EnvKind::Pendulum, s, a).unwrap())).collect();
        for step in 0..10 {
            let n = 16 + step;
            let gp = GpModel::fit(&z[..n], &vec![vec![0.0]; n], &GpConfig::default()).unwrap();
            let (best, _) = pz
                .iter()
                .enumerate()
                .filter(|(_, x)| !z[16..n].contains(x))
                .map(|(i, x)| (i, gp.predict_std(x)))
                .fold((usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            assert_eq!(pz[best], z[n], "step {step}");
        }
    }

    #[test]
    fn deterministic() {
        let cfg = AlConfig { pool_size: 60, max_points_per_epoch: 8, ..Default::default() };
        let a = kriging_active_learning(EnvKind::CartPole, &cfg, &GpConfig::default(), 9).unwrap();
        let b = kriging_active_learning(EnvKind::CartPole, &cfg, &GpConfig::default(), 9).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.epochs, b.epochs);
    }
}
