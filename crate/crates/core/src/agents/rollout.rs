use rand::seq::SliceRandom;

use super::policy::Policy;
use crate::dataset::{Dataset, DatasetMeta, Transition};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, tag};

/// Rolls `policy` out until exactly `k` transitions are recorded. Episodes
/// end on `done` (terminal state or step cap); the environment is then
/// reset with a fresh seed derived from `seed` and the episode index.
pub fn collect(policy: &Policy, k: usize, seed: u64, sampler: &str) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut env = policy.env.make();
    let mut rng = rng_from(seed, &[tag("collect/actions")]);
    let mut episode = 0u64;
    let mut state = env.reset(derive_seed(seed, &[tag("collect/episode"), episode]));
    let mut t = 0usize;
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let action = policy.act(&state, &mut rng);
        let r = env.step(&action)?;
        out.push(Transition {
            state: std::mem::replace(&mut state, r.next_state.clone()),
            action,
            next_state: r.next_state,
            reward: r.reward,
            done: r.done,
            step: t,
        });
        t += 1;
        if r.done {
            episode += 1;
            state = env.reset(derive_seed(seed, &[tag("collect/episode"), episode]));
            t = 0;
        }
    }
    let meta = DatasetMeta::new(policy.env, sampler, seed).with_param("episodes", episode + 1);
    Ok(Dataset::new(meta, out))
}

/// Draws `floor(p_i * k)` transitions without replacement from each part
/// (the remainder goes to the first part) and shuffles the union. Parts that
/// are the same dataset share one pool, so self-mixing yields a k-subset.
pub fn mix_datasets(parts: &[(&Dataset, f64)], k: usize, seed: u64, sampler: &str) -> Result<Dataset> {
    if parts.is_empty() {
        return Err(Error::InvalidArgument("nothing to mix".into()));
    }
    let total: f64 = parts.iter().map(|(_, p)| p).sum();
    if parts.iter().any(|(_, p)| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("mix proportions must be non-negative and sum to 1 (got {total})")));
    }
    let env = parts[0].0.meta.env;
    if parts.iter().any(|(d, _)| d.meta.env != env) {
        return Err(Error::InvalidArgument("cannot mix datasets from different environments".into()));
    }
    let mut counts: Vec<usize> = parts.iter().map(|(_, p)| (p * k as f64).floor() as usize).collect();
    counts[0] += k - counts.iter().sum::<usize>();

    // Group identical sources so their draws come from one permutation.
    let mut pools: Vec<(&Dataset, Vec<usize>, usize)> = Vec::new();
    let mut rows = Vec::with_capacity(k);
    for (i, ((d, _), &c)) in parts.iter().zip(&counts).enumerate() {
        let pool = match pools.iter().position(|(p, _, _)| std::ptr::eq(*p, *d)) {
            Some(j) => j,
            None => {
                let mut order: Vec<usize> = (0..d.len()).collect();
                order.shuffle(&mut rng_from(seed, &[tag("mix/part"), i as u64]));
                pools.push((d, order, 0));
                pools.len() - 1
            }
        };
        let (d, order, used) = &mut pools[pool];
        if *used + c > order.len() {
            return Err(Error::NotEnoughSamples { needed: *used + c, got: order.len() });
        }
        rows.extend(order[*used..*used + c].iter().map(|&r| d.transitions[r].clone()));
        *used += c;
    }
    rows.shuffle(&mut rng_from(seed, &[tag("mix/shuffle")]));
    let mut meta = DatasetMeta::new(env, sampler, seed);
    meta.sources = parts.iter().map(|(d, _)| d.meta.sampler.clone()).collect();
    meta = meta.with_param("proportions", parts.iter().map(|(_, p)| *p).collect::<Vec<_>>());
    Ok(Dataset::new(meta, rows))
}
