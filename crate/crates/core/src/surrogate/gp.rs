//! Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! All outputs share one kernel and therefore one Cholesky factor; only the
//! weight vectors differ. Hyperparameters are fixed by configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    /// Per-input length-scales in normalized units; a single value is
    /// broadcast to every input.
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Training sets larger than this are rejected (cubic cost).
    pub max_points: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig { length_scales: vec![1.0], signal_variance: 1.0, noise_variance: 1e-6, max_points: 5_000 }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length_scales.is_empty()
            || self.length_scales.iter().any(|l| !(*l > 0.0))
            || !(self.signal_variance > 0.0)
            || !(self.noise_variance > 0.0)
        {
            return Err(Error::InvalidArgument("gp hyperparameters must be positive".into()));
        }
        Ok(())
    }

    pub fn kernel(&self, dim: usize) -> Result<Kernel> {
        self.validate()?;
        let ls = match self.length_scales.len() {
            1 => vec![self.length_scales[0]; dim],
            n if n == dim => self.length_scales.clone(),
            n => return Err(Error::Dimension { expected: dim, got: n }),
        };
        Ok(Kernel { inv_length_scales: ls.iter().map(|l| 1.0 / l).collect(), signal_variance: self.signal_variance })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub inv_length_scales: Vec<f64>,
    pub signal_variance: f64,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.inv_length_scales)
            .map(|((x, y), il)| {
                let d = (x - y) * il;
                d * d
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// Lower-triangular Cholesky factor of `K + noise * I`, grown one row at a
/// time, stored row-major by rows of increasing length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cholesky {
    rows: Vec<Vec<f64>>,
}

impl Cholesky {
    pub fn empty() -> Self {
        Cholesky { rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Solves `L v = b` by forward substitution.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&v).map(|(l, x)| l * x).sum();
            v.push((b[i] - s) / row[i]);
        }
        v
    }

    /// Solves `L^T x = v` by back substitution.
    pub fn backward(&self, v: &[f64]) -> Vec<f64> {
        let n = self.rows.len();
        let mut x = v.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.rows[i][i];
            let xi = x[i];
            for (j, xj) in x.iter_mut().enumerate().take(i) {
                *xj -= self.rows[i][j] * xi;
            }
        }
        x
    }

    /// Appends a point given `v = L^-1 k(X, x)` and `k(x, x) + noise`.
    /// Returns the new diagonal entry.
    pub fn push(&mut self, mut v: Vec<f64>, self_cov: f64) -> Result<f64> {
        let d2 = self_cov - v.iter().map(|x| x * x).sum::<f64>();
        if !(d2 > 0.0) || !d2.is_finite() {
            return Err(Error::NotPositiveDefinite(self_cov));
        }
        let d = d2.sqrt();
        v.push(d);
        self.rows.push(v);
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub kernel: Kernel,
    /// Effective noise variance after any jitter escalation.
    pub noise_variance: f64,
    pub inputs: Vec<Vec<f64>>,
    pub chol: Cholesky,
    /// `(K + noise I)^-1 y` for each output.
    pub weights: Vec<Vec<f64>>,
}

const JITTER_RETRIES: usize = 6;
/// First escalated noise floor, relative to the signal variance.
const MIN_JITTER: f64 = 1e-10;

impl GpModel {
    pub fn fit(inputs: &[Vec<f64>], targets: &[Vec<f64>], cfg: &GpConfig) -> Result<GpModel> {
        let n = inputs.len();
        if n < 2 {
            return Err(Error::NotEnoughSamples { needed: 2, got: n });
        }
        if n > cfg.max_points {
            return Err(Error::InvalidArgument(format!("gp: {n} points exceed the limit of {}", cfg.max_points)));
        }
        if targets.len() != n {
            return Err(Error::Dimension { expected: n, got: targets.len() });
        }
        let kernel = cfg.kernel(inputs[0].len())?;
        let mut noise = cfg.noise_variance;
        let mut attempt = 0;
        let chol = loop {
            match factor(&kernel, inputs, noise) {
                Ok(c) => break c,
                Err(_) if attempt < JITTER_RETRIES => {
                    attempt += 1;
                    noise = (noise * 10.0).max(MIN_JITTER * kernel.signal_variance);
                    log::warn!("gp: kernel matrix not positive definite, raising noise floor to {noise:e}");
                }
                Err(_) => return Err(Error::NotPositiveDefinite(noise)),
            }
        };
        let q = targets[0].len();
        let weights = (0..q)
            .map(|j| {
                let y: Vec<f64> = targets.iter().map(|t| t[j]).collect();
                chol.backward(&chol.forward(&y))
            })
            .collect();
        Ok(GpModel { kernel, noise_variance: noise, inputs: inputs.to_vec(), chol, weights })
    }

    fn cross_cov(&self, x: &[f64]) -> Vec<f64> {
        self.inputs.iter().map(|xi| self.kernel.eval(xi, x)).collect()
    }

    pub fn predict_mean(&self, x: &[f64]) -> Vec<f64> {
        let k = self.cross_cov(x);
        self.weights.iter().map(|w| w.iter().zip(&k).map(|(a, b)| a * b).sum()).collect()
    }

    /// Posterior standard deviation of the latent function (noise excluded).
    pub fn predict_std(&self, x: &[f64]) -> f64 {
        let v = self.chol.forward(&self.cross_cov(x));
        let var = self.kernel.signal_variance - v.iter().map(|a| a * a).sum::<f64>();
        var.max(0.0).sqrt()
    }
}

fn factor(kernel: &Kernel, inputs: &[Vec<f64>], noise: f64) -> Result<Cholesky> {
    let n = inputs.len();
    // Dense lower-triangular Cholesky; row i needs rows < i, so rows are
    // produced sequentially while the inner products run in parallel.
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = kernel.eval(&inputs[j], &inputs[j]) + noise;
        d -= l[j * n..j * n + j].iter().map(|x| x * x).sum::<f64>();
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite(noise));
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        let (done, rest) = l.split_at_mut((j + 1) * n);
        let lj = &done[j * n..j * n + j];
        rest.par_chunks_mut(n).enumerate().for_each(|(off, row)| {
            let i = j + 1 + off;
            let s: f64 = row[..j].iter().zip(lj).map(|(a, b)| a * b).sum();
            row[j] = (kernel.eval(&inputs[i], &inputs[j]) - s) / d;
        });
    }
    Ok(Cholesky { rows: (0..n).map(|i| l[i * n..i * n + i + 1].to_vec()).collect() })
}
