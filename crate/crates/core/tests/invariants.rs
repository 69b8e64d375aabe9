//! Public-API invariants over randomized inputs.

use proptest::prelude::*;
use surroforge::agents::{collect, mix_datasets, Policy};
use surroforge::eval::split_dataset;
use surroforge::{knn_entropy, Dataset, EnvKind};

fn env_strategy() -> impl Strategy<Value = EnvKind> {
    prop::sample::select(EnvKind::ALL.to_vec())
}

fn policy_for(env: EnvKind, which: u8) -> Policy {
    match which % 3 {
        0 => Policy::random(env),
        1 => Policy::expert(env),
        _ => Policy::partial(env, 0.5).unwrap(),
    }
}

fn resimulates(d: &Dataset) -> bool {
    let mut sim = d.meta.env.make();
    d.transitions.iter().all(|t| {
        sim.set_state(&t.state).unwrap();
        sim.step(&t.action).unwrap().next_state == t.next_state
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn collection_is_exact_chained_and_resimulable(env in env_strategy(), which in 0u8..3, k in 1usize..600, seed in any::<u64>()) {
        let d = collect(&policy_for(env, which), k, seed, "x").unwrap();
        prop_assert_eq!(d.len(), k);
        let cap = env.spec().max_episode_steps;
        for w in d.transitions.windows(2) {
            if w[0].done {
                prop_assert_eq!(w[1].step, 0);
            } else {
                prop_assert_eq!(&w[0].next_state, &w[1].state);
                prop_assert_eq!(w[1].step, w[0].step + 1);
            }
        }
        prop_assert!(d.transitions.iter().all(|t| t.step < cap));
        prop_assert!(resimulates(&d));
    }

    #[test]
    fn split_partitions_rows(k in 2usize..400, f in 0.05f64..0.95, seed in any::<u64>()) {
        let d = collect(&Policy::random(EnvKind::CartPole), k, seed, "ra").unwrap();
        match split_dataset(&d, f, seed) {
            Ok((train, test)) => {
                prop_assert_eq!(train.len(), (f * k as f64).floor() as usize);
                prop_assert_eq!(train.len() + test.len(), k);
                let mut all: Vec<_> = train.transitions.iter().chain(&test.transitions).map(|t| format!("{t:?}")).collect();
                let mut orig: Vec<_> = d.transitions.iter().map(|t| format!("{t:?}")).collect();
                all.sort();
                orig.sort();
                prop_assert_eq!(all, orig);
            }
            Err(_) => {
                let n = (f * k as f64).floor() as usize;
                prop_assert!(n == 0 || n == k);
            }
        }
    }

    #[test]
    fn mix_draws_only_from_its_parts(k in 3usize..300, seed in any::<u64>()) {
        let a = collect(&Policy::random(EnvKind::MountainCar), k, seed, "ra").unwrap();
        let b = collect(&Policy::expert(EnvKind::MountainCar), k, seed, "ea").unwrap();
        let m = mix_datasets(&[(&a, 0.5), (&b, 0.5)], k, seed, "mpa").unwrap();
        prop_assert_eq!(m.len(), k);
        // The sources may share rows (same seed, same first action), so only
        // membership is checked.
        prop_assert!(m.transitions.iter().all(|t| a.transitions.contains(t) || b.transitions.contains(t)));
        prop_assert!(m.transitions.iter().filter(|t| b.transitions.contains(t)).count() >= k / 2);
        prop_assert!(resimulates(&m));
    }

    #[test]
    fn entropy_scales_with_log_volume(pts in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 20..200), k in 1usize..5) {
        let h = match knn_entropy(&pts, k) {
            Ok(h) => h.value,
            Err(_) => return Ok(()),
        };
        // Powers of two scale every coordinate exactly.
        let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| x * 4.0).collect()).collect();
        let hs = knn_entropy(&scaled, k).unwrap().value;
        prop_assert!((hs - h - 2.0 * 4f64.ln()).abs() <= 1e-9);
    }
}
