//! Scoring and hypothesis tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R2Score {
    /// `None` marks a dimension whose truth has zero variance.
    pub per_dim: Vec<Option<f64>>,
    /// Unweighted mean over the defined dimensions.
    pub average: f64,
}

/// Coefficient of determination per output dimension.
pub fn r2_score(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<R2Score> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension { expected: truth.len(), got: pred.len() });
    }
    if truth.len() < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, got: truth.len() });
    }
    let d = truth[0].len();
    if let Some(r) = truth.iter().chain(pred).find(|r| r.len() != d) {
        return Err(Error::Dimension { expected: d, got: r.len() });
    }
    let n = truth.len() as f64;
    let per_dim: Vec<Option<f64>> = (0..d)
        .map(|j| {
            let mean = truth.iter().map(|t| t[j]).sum::<f64>() / n;
            let ss_tot: f64 = truth.iter().map(|t| (t[j] - mean).powi(2)).sum();
            let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t[j] - p[j]).powi(2)).sum();
            (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
        })
        .collect();
    let defined: Vec<f64> = per_dim.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::InvalidArgument("r2: every output dimension has zero variance".into()));
    }
    if defined.len() < d {
        log::warn!("r2: {} zero-variance dimension(s) excluded from the average", d - defined.len());
    }
    Ok(R2Score { per_dim, average: defined.iter().sum::<f64>() / defined.len() as f64 })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Welch's unequal-variance t-test. When both samples are constant the
/// result is `p = 1` for equal means and `p = 0` otherwise.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, got: a.len().min(b.len()) });
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("t-test sample"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_var(a) / na, sample_var(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(if diff == 0.0 {
            WelchTest { t: 0.0, df: f64::NAN, p: 1.0 }
        } else {
            WelchTest { t: diff.signum() * f64::INFINITY, df: f64::NAN, p: 0.0 }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(format!("t distribution: {e}")))?;
    Ok(WelchTest { t, df, p: (2.0 * dist.sf(t.abs())).min(1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::seq::SliceRandom;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};
    use rayon::prelude::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn perfect_and_mean_predictors() {
        let truth = vec![vec![1.0, 5.0], vec![2.0, 3.0], vec![4.0, 4.0]];
        assert_eq!(r2_score(&truth, &truth).unwrap().average, 1.0);
        let mean_pred = vec![vec![7.0 / 3.0, 4.0]; 3];
        assert!(r2_score(&truth, &mean_pred).unwrap().average.abs() < 1e-12);
    }

    #[test]
    fn hand_worked_value() {
        let r = r2_score(&col(&[1.0, 2.0, 3.0]), &col(&[1.0, 2.0, 2.0])).unwrap();
        assert!((r.average - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_dims_are_excluded() {
        let truth = vec![vec![1.0, 0.0], vec![3.0, 0.0]];
        let pred = vec![vec![1.0, 9.0], vec![3.0, 9.0]];
        let r = r2_score(&truth, &pred).unwrap();
        assert_eq!(r.per_dim, vec![Some(1.0), None]);
        assert_eq!(r.average, 1.0);
        assert!(r2_score(&col(&[2.0, 2.0]), &col(&[1.0, 1.0])).is_err());
        assert!(r2_score(&col(&[2.0]), &col(&[1.0])).is_err());
    }

    #[test]
    fn r2_matches_direct_formula_on_random_instances() {
        let mut rng = rng_from(11, &[]);
        for _ in 0..100 {
            let n = rng.random_range(2..60);
            let d = rng.random_range(1..5);
            let truth: Vec<Vec<f64>> =
                (0..n).map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
            let pred: Vec<Vec<f64>> =
                truth.iter().map(|t| t.iter().map(|x| x + rng.random_range(-3.0..3.0)).collect()).collect();
            // Direct evaluation: 1 - sum (y - f)^2 / sum (y - ybar)^2 per column.
            let mut expected = 0.0;
            for j in 0..d {
                let ys: Vec<f64> = truth.iter().map(|t| t[j]).collect();
                let ybar = ys.iter().sum::<f64>() / n as f64;
                let num: f64 = (0..n).map(|i| (ys[i] - pred[i][j]) * (ys[i] - pred[i][j])).sum();
                let den: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
                expected += 1.0 - num / den;
            }
            expected /= d as f64;
            let got = r2_score(&truth, &pred).unwrap().average;
            assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{got} vs {expected}");
        }
    }

    #[test]
    fn welch_conventions() {
        let a = [1.0, 2.0, 3.5, 0.2];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        assert_eq!(welch_t_test(&[0.0; 4], &[1.0; 4]).unwrap().p, 0.0);
        assert_eq!(welch_t_test(&[1.0; 4], &[1.0; 3]).unwrap().p, 1.0);
        let b = [0.5, 0.9, 4.0, 2.2, 1.0];
        let (x, y) = (welch_t_test(&a, &b).unwrap(), welch_t_test(&b, &a).unwrap());
        assert_eq!(x.t, -y.t);
        assert_eq!(x.p, y.p);
        assert!(welch_t_test(&[1.0], &b).is_err());
    }

    /// Studentized two-sample permutation test: the share of label
    /// permutations whose |t| reaches the observed one.
    fn permutation_p(a: &[f64], b: &[f64], rounds: usize, seed: u64) -> f64 {
        let observed = welch_stat(a, b).abs();
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let hits: usize = (0..rounds)
            .into_par_iter()
            .chunks(5_000)
            .map(|chunk| {
                let mut rng = rng_from(seed, &[chunk[0] as u64]);
                let mut buf = pooled.clone();
                chunk
                    .iter()
                    .filter(|_| {
                        buf.shuffle(&mut rng);
                        welch_stat(&buf[..a.len()], &buf[a.len()..]).abs() >= observed
                    })
                    .count()
            })
            .sum();
        (hits as f64 + 1.0) / (rounds as f64 + 1.0)
    }

    fn welch_stat(a: &[f64], b: &[f64]) -> f64 {
        let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let v = |x: &[f64]| {
            let mu = m(x);
            x.iter().map(|y| (y - mu) * (y - mu)).sum::<f64>() / (x.len() - 1) as f64
        };
        (m(a) - m(b)) / (v(a) / a.len() as f64 + v(b) / b.len() as f64).sqrt()
    }

    #[test]
    fn welch_agrees_with_permutation_oracle() {
        let mut rng = rng_from(5, &[]);
        for case in 0..20 {
            let na = rng.random_range(60..120);
            let nb = rng.random_range(60..120);
            let shift = rng.random_range(0.0..0.5);
            let sd = rng.random_range(0.8..1.25);
            let a: Vec<f64> = Normal::new(0.0, 1.0).unwrap().sample_iter(&mut rng).take(na).collect();
            let b: Vec<f64> = Normal::new(shift, sd).unwrap().sample_iter(&mut rng).take(nb).collect();
            let p = welch_t_test(&a, &b).unwrap().p;
            let oracle = permutation_p(&a, &b, 200_000, case);
            assert!((p - oracle).abs() <= 0.01, "case {case}: welch {p} vs permutation {oracle}");
        }
    }

    #[test]
    fn well_separated_normals_are_significant() {
        let mut rng = rng_from(8, &[]);
        let a: Vec<f64> = Normal::new(0.0, 1.0).unwrap().sample_iter(&mut rng).take(30).collect();
        let b: Vec<f64> = Normal::new(5.0, 1.0).unwrap().sample_iter(&mut rng).take(30).collect();
        assert!(welch_t_test(&a, &b).unwrap().p < 0.001);
        assert!(permutation_p(&a, &b, 20_000, 1) < 0.001);
    }
}
