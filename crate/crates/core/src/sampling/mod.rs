//! Generative dataset construction: fill the state (or state × action)
//! space with LHS, Sobol or uniform points and simulate one transition from
//! each, re-initializing the simulator before every sample.

pub mod sobol;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sobol::Sobol;

use crate::dataset::{Dataset, DatasetMeta, Transition};
use crate::env::{Action, ActionSpace, EnvKind, Interval};
use crate::error::{Error, Result};
use crate::rng::{rng_from, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceMethod {
    Lhs,
    Sobol,
    Random,
}

impl SpaceMethod {
    pub fn id(self) -> &'static str {
        match self {
            SpaceMethod::Lhs => "lhs",
            SpaceMethod::Sobol => "sobol",
            SpaceMethod::Random => "random",
        }
    }
}

impl fmt::Display for SpaceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SpaceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lhs" => Ok(SpaceMethod::Lhs),
            "sobol" => Ok(SpaceMethod::Sobol),
            "random" => Ok(SpaceMethod::Random),
            _ => Err(Error::UnknownSampler(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub method: SpaceMethod,
    pub count: usize,
    pub bounds: Vec<Interval>,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(method: SpaceMethod, count: usize, bounds: Vec<Interval>, seed: u64) -> Self {
        SamplePlan { method, count, bounds, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::InvalidArgument("sample plan has no dimensions".into()));
        }
        if let Some(b) = self.bounds.iter().find(|b| !b.is_valid()) {
            return Err(Error::InvalidArgument(format!("invalid bounds [{}, {}]", b.lo, b.hi)));
        }
        Ok(())
    }

    pub fn sample(&self) -> Result<Vec<Vec<f64>>> {
        match self.method {
            SpaceMethod::Lhs => lhs_sample(self),
            SpaceMethod::Sobol => sobol_sample(self),
            SpaceMethod::Random => uniform_sample(self),
        }
    }
}

fn map_unit(point: &[f64], bounds: &[Interval]) -> Vec<f64> {
    point.iter().zip(bounds).map(|(&u, b)| b.lerp(u)).collect()
}

/// Latin hypercube: each dimension is cut into `count` equal strata and
/// every stratum receives exactly one point.
pub fn lhs_sample(plan: &SamplePlan) -> Result<Vec<Vec<f64>>> {
    plan.validate()?;
    let k = plan.count;
    let mut rng = rng_from(plan.seed, &[tag("lhs")]);
    let mut columns = Vec::with_capacity(plan.bounds.len());
    for b in &plan.bounds {
        let mut strata: Vec<usize> = (0..k).collect();
        strata.shuffle(&mut rng);
        let col: Vec<f64> = strata
            .into_iter()
            .map(|s| {
                let u = (s as f64 + rng.random::<f64>()) / k as f64;
                // Rounding can land exactly on the upper stratum edge.
                b.lerp(u.min((s as f64 + 1.0) / k as f64 - f64::EPSILON))
            })
            .collect();
        columns.push(col);
    }
    Ok((0..k).map(|i| columns.iter().map(|c| c[i]).collect()).collect())
}

/// First `count` Sobol points (zero point skipped) mapped onto the bounds.
/// The seed is ignored.
pub fn sobol_sample(plan: &SamplePlan) -> Result<Vec<Vec<f64>>> {
    plan.validate()?;
    let mut g = Sobol::new(plan.bounds.len())?;
    Ok((0..plan.count).map(|_| map_unit(&g.next_point(), &plan.bounds)).collect())
}

pub fn uniform_sample(plan: &SamplePlan) -> Result<Vec<Vec<f64>>> {
    plan.validate()?;
    let mut rng = rng_from(plan.seed, &[tag("uniform")]);
    Ok((0..plan.count).map(|_| plan.bounds.iter().map(|b| b.lerp(rng.random::<f64>())).collect()).collect())
}

/// Simulates one transition from `state` under `action` on a fresh
/// environment state.
pub fn simulate(env: &mut dyn crate::env::Environment, state: &[f64], action: &Action) -> Result<Transition> {
    env.set_state(state)?;
    let r = env.step(action)?;
    Ok(Transition {
        state: state.to_vec(),
        action: action.clone(),
        next_state: r.next_state,
        reward: r.reward,
        done: r.done,
        step: 0,
    })
}

/// Turns sampled points into transitions. Discrete-action environments pair
/// every state with every action (`k * m` rows, point-major); continuous
/// ones read the trailing coordinates of each point as the action.
pub fn simulate_points(env: EnvKind, points: &[Vec<f64>]) -> Result<Vec<Transition>> {
    let spec = env.spec();
    let n = spec.state_dim;
    let expected = match &spec.action_space {
        ActionSpace::Discrete(_) => n,
        ActionSpace::Continuous(b) => n + b.len(),
    };
    if let Some(p) = points.iter().find(|p| p.len() != expected) {
        return Err(Error::Dimension { expected, got: p.len() });
    }
    const CHUNK: usize = 512;
    let chunks: Vec<Result<Vec<Transition>>> = points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sim = env.make();
            let mut out = Vec::with_capacity(chunk.len());
            for p in chunk {
                match &spec.action_space {
                    ActionSpace::Discrete(m) => {
                        for a in 0..*m {
                            out.push(simulate(sim.as_mut(), p, &Action::Discrete(a))?);
                        }
                    }
                    ActionSpace::Continuous(_) => {
                        let action = Action::Continuous(p[n..].to_vec());
                        out.push(simulate(sim.as_mut(), &p[..n], &action)?);
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// Builds a generative dataset for `env` from `plan`, whose dimension must
/// be `n` for discrete-action and `n + m` for continuous-action envs.
pub fn build_generative_dataset(env: EnvKind, plan: &SamplePlan) -> Result<Dataset> {
    let points = plan.sample()?;
    let transitions = simulate_points(env, &points)?;
    let meta = DatasetMeta::new(env, plan.method.id(), plan.seed).with_param("points", plan.count);
    Ok(Dataset::new(meta, transitions))
}

/// Plan over the environment's full generative space.
pub fn env_plan(env: EnvKind, method: SpaceMethod, count: usize, seed: u64) -> SamplePlan {
    SamplePlan::new(method, count, env.spec().generative_bounds(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(d: usize) -> Vec<Interval> {
        vec![Interval::new(0.0, 1.0); d]
    }

    fn assert_stratified(points: &[Vec<f64>], bounds: &[Interval]) {
        let k = points.len();
        for (d, b) in bounds.iter().enumerate() {
            let mut counts = vec![0usize; k];
            for p in points {
                let u = (p[d] - b.lo) / b.width();
                let bin = ((u * k as f64).floor() as usize).min(k - 1);
                counts[bin] += 1;
            }
            assert!(counts.iter().all(|&c| c == 1), "dim {d}: {counts:?}");
        }
    }

    #[test]
    fn lhs_four_strata_in_one_dimension() {
        let pts = lhs_sample(&SamplePlan::new(SpaceMethod::Lhs, 4, unit(1), 1)).unwrap();
        let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        for (i, x) in xs.iter().enumerate() {
            assert!(*x >= i as f64 * 0.25 && *x < (i + 1) as f64 * 0.25);
        }
    }

    #[test]
    fn lhs_single_point_inside_bounds() {
        let b = vec![Interval::new(-3.0, -1.0), Interval::new(5.0, 6.0)];
        let pts = lhs_sample(&SamplePlan::new(SpaceMethod::Lhs, 1, b.clone(), 9)).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].iter().zip(&b).all(|(x, b)| b.contains(*x)));
    }

    #[test]
    fn lhs_histogram_hundred_by_two() {
        let b = vec![Interval::new(-1.2, 0.6), Interval::new(-0.07, 0.07)];
        let pts = lhs_sample(&SamplePlan::new(SpaceMethod::Lhs, 100, b.clone(), 5)).unwrap();
        assert_stratified(&pts, &b);
    }

    #[test]
    fn zero_count_rejected() {
        for m in [SpaceMethod::Lhs, SpaceMethod::Sobol, SpaceMethod::Random] {
            assert!(SamplePlan::new(m, 0, unit(2), 0).sample().is_err());
        }
    }

    #[test]
    fn sobol_first_points_in_unit_square() {
        let pts = sobol_sample(&SamplePlan::new(SpaceMethod::Sobol, 3, unit(2), 0)).unwrap();
        assert_eq!(pts, vec![vec![0.5, 0.5], vec![0.75, 0.25], vec![0.25, 0.75]]);
    }

    #[test]
    fn sobol_affine_mapping() {
        let a = sobol_sample(&SamplePlan::new(SpaceMethod::Sobol, 64, unit(3), 0)).unwrap();
        let b =
            sobol_sample(&SamplePlan::new(SpaceMethod::Sobol, 64, vec![Interval::new(-10.0, 10.0); 3], 99)).unwrap();
        for (p, q) in a.iter().zip(&b) {
            for (u, x) in p.iter().zip(q) {
                assert!((u * 20.0 - 10.0 - x).abs() < 1e-12);
            }
        }
    }

    fn star_discrepancy_1d(xs: &[f64]) -> f64 {
        // Exhaustive over anchor boxes [0, t): the supremum is attained at
        // (or just past) a sample, so checking both one-sided limits at every
        // sample is exact.
        let n = xs.len() as f64;
        let mut worst: f64 = 0.0;
        for &t in xs {
            let below = xs.iter().filter(|&&x| x < t).count() as f64;
            let at_or_below = xs.iter().filter(|&&x| x <= t).count() as f64;
            worst = worst.max((below / n - t).abs()).max((at_or_below / n - t).abs());
        }
        worst.max((xs.iter().filter(|&&x| x < 1.0).count() as f64 / n - 1.0).abs())
    }

    #[test]
    fn sobol_beats_uniform_discrepancy() {
        let k = 1 << 10;
        let sob: Vec<f64> = sobol_sample(&SamplePlan::new(SpaceMethod::Sobol, k, unit(1), 0))
            .unwrap()
            .into_iter()
            .map(|p| p[0])
            .collect();
        let d_sobol = star_discrepancy_1d(&sob);
        let mut uni: Vec<f64> = (0..20)
            .map(|seed| {
                let xs: Vec<f64> = uniform_sample(&SamplePlan::new(SpaceMethod::Random, k, unit(1), seed))
                    .unwrap()
                    .into_iter()
                    .map(|p| p[0])
                    .collect();
                star_discrepancy_1d(&xs)
            })
            .collect();
        uni.sort_by(f64::total_cmp);
        let median = 0.5 * (uni[9] + uni[10]);
        assert!(d_sobol < median, "sobol {d_sobol} vs uniform median {median}");
    }

    #[test]
    fn uniform_sample_mean_is_midpoint() {
        let b = vec![Interval::new(-2.0, 6.0), Interval::new(0.0, 1.0)];
        let k = 10_000;
        let pts = uniform_sample(&SamplePlan::new(SpaceMethod::Random, k, b.clone(), 17)).unwrap();
        for (d, iv) in b.iter().enumerate() {
            let mean = pts.iter().map(|p| p[d]).sum::<f64>() / k as f64;
            let se = iv.width() / 12f64.sqrt() / (k as f64).sqrt();
            assert!((mean - iv.mid()).abs() < 3.0 * se, "dim {d}: {mean}");
            assert!(pts.iter().all(|p| iv.contains(p[d])));
        }
        assert_eq!(pts, uniform_sample(&SamplePlan::new(SpaceMethod::Random, k, b, 17)).unwrap());
    }

    #[test]
    fn discrete_env_pairs_every_state_with_every_action() {
        let plan = env_plan(EnvKind::MountainCar, SpaceMethod::Lhs, 10, 4);
        let d = build_generative_dataset(EnvKind::MountainCar, &plan).unwrap();
        assert_eq!(d.len(), 30);
        assert_eq!(d.meta.count, 30);
        for chunk in d.transitions.chunks(3) {
            assert!(chunk.iter().all(|t| t.state == chunk[0].state));
            let actions: Vec<_> = chunk.iter().map(|t| t.action.clone()).collect();
            assert_eq!(actions, vec![Action::Discrete(0), Action::Discrete(1), Action::Discrete(2)]);
        }
    }

    #[test]
    fn continuous_env_samples_action_jointly() {
        let plan = env_plan(EnvKind::Pendulum, SpaceMethod::Sobol, 10, 0);
        assert_eq!(plan.bounds.len(), 4);
        let d = build_generative_dataset(EnvKind::Pendulum, &plan).unwrap();
        assert_eq!(d.len(), 10);
        assert!(d.transitions.iter().all(|t| matches!(&t.action, Action::Continuous(v) if v.len() == 1)));
    }

    #[test]
    fn stored_next_state_resimulates() {
        for kind in EnvKind::ALL {
            let d = build_generative_dataset(kind, &env_plan(kind, SpaceMethod::Random, 50, 2)).unwrap();
            let mut env = kind.make();
            for t in &d.transitions {
                env.set_state(&t.state).unwrap();
                assert_eq!(env.step(&t.action).unwrap().next_state, t.next_state);
            }
        }
    }

    #[test]
    fn sample_order_does_not_change_transitions() {
        let plan = env_plan(EnvKind::CartPole, SpaceMethod::Lhs, 40, 8);
        let pts = plan.sample().unwrap();
        let forward = simulate_points(EnvKind::CartPole, &pts).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let backward = simulate_points(EnvKind::CartPole, &rev).unwrap();
        for (i, chunk) in backward.chunks(2).enumerate() {
            let j = pts.len() - 1 - i;
            assert_eq!(chunk, &forward[2 * j..2 * j + 2]);
        }
    }

    #[test]
    fn wrong_plan_dimension_rejected() {
        let plan = SamplePlan::new(SpaceMethod::Lhs, 5, unit(3), 0);
        assert!(matches!(
            build_generative_dataset(EnvKind::MountainCar, &plan),
            Err(Error::Dimension { expected: 2, got: 3 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lhs_stratified_in_every_dimension(k in 1usize..300, d in 1usize..6, seed in any::<u64>()) {
            let b: Vec<Interval> = (0..d).map(|i| Interval::new(-(i as f64) - 1.0, i as f64 * 3.0 + 0.5)).collect();
            let pts = lhs_sample(&SamplePlan::new(SpaceMethod::Lhs, k, b.clone(), seed)).unwrap();
            prop_assert_eq!(pts.len(), k);
            assert_stratified(&pts, &b);
        }
    }
}
