//! Fully connected ReLU network trained on mean squared error with Adam.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, tag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Training stops once the validation loss rises by more than this
    /// between consecutive epochs.
    pub early_stop_delta: f64,
    pub validation_fraction: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![512, 256],
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 10,
            early_stop_delta: 1e-3,
            validation_fraction: 0.1,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0)
            || !(self.learning_rate > 0.0)
            || self.batch_size == 0
            || self.epochs == 0
            || !(self.early_stop_delta >= 0.0)
        {
            return Err(Error::InvalidArgument("mlp hyperparameters must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument("mlp.validation_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Row-major `inputs x outputs` weight matrix plus bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn w(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.inputs, self.outputs), &self.weights).expect("weight shape")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub initial_loss: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_early: bool,
}

/// Gradient of the loss with respect to every layer's weights and bias.
pub type Gradients = Vec<(Array2<f64>, Array1<f64>)>;

impl Mlp {
    /// He-initialized network with the given layer widths.
    pub fn new(widths: &[usize], seed: u64) -> Mlp {
        let mut rng = rng_from(seed, &[tag("mlp/init")]);
        let layers = widths
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("finite std");
                Dense {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect(),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Activations of every layer; `acts[0]` is the input.
    fn forward_all(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.w());
            z += &ArrayView2::from_shape((1, layer.outputs), &layer.bias).expect("bias shape");
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_all(x).pop().expect("at least one layer")
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        let d = self.forward(x) - y;
        d.mapv(|v| v * v).mean().unwrap_or(0.0)
    }

    /// Mean squared error over all outputs and its analytic gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> (f64, Gradients) {
        let acts = self.forward_all(x);
        let out = acts.last().expect("output");
        let diff = out - &y;
        let count = diff.len() as f64;
        let loss = diff.mapv(|v| v * v).sum() / count;
        let mut delta = diff * (2.0 / count);
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            // The transposed product may come back column-major.
            let gw = acts[i].t().dot(&delta).as_standard_layout().into_owned();
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].w().t());
                back.zip_mut_with(&acts[i], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        (loss, grads)
    }

    /// Trains on `(x, y)`, holding out a shuffled validation split, and
    /// returns the parameters with the lowest validation loss.
    pub fn train(x: ArrayView2<f64>, y: ArrayView2<f64>, cfg: &MlpConfig, seed: u64) -> Result<(Mlp, TrainHistory)> {
        cfg.validate()?;
        let n = x.nrows();
        let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n.saturating_sub(1));
        if n < 2 || n_val == 0 || n_val >= n {
            return Err(Error::NotEnoughSamples { needed: 2, got: n });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from(seed, &[tag("mlp/split")]));
        let (val_idx, train_idx) = order.split_at(n_val);
        let xv = x.select(Axis(0), val_idx);
        let yv = y.select(Axis(0), val_idx);
        let xt = x.select(Axis(0), train_idx);
        let yt = y.select(Axis(0), train_idx);

        let mut widths = vec![x.ncols()];
        widths.extend(&cfg.hidden);
        widths.push(y.ncols());
        let mut net = Mlp::new(&widths, seed);
        let mut adam = Adam::new(&net, cfg.learning_rate);
        let mut history = TrainHistory { initial_loss: net.loss(xt.view(), yt.view()), ..Default::default() };
        let mut best = (net.loss(xv.view(), yv.view()), net.clone());
        let mut rng = rng_from(seed, &[tag("mlp/batches")]);
        let mut rows: Vec<usize> = (0..xt.nrows()).collect();

        for epoch in 0..cfg.epochs {
            rows.shuffle(&mut rng);
            for batch in rows.chunks(cfg.batch_size) {
                let bx = xt.select(Axis(0), batch);
                let by = yt.select(Axis(0), batch);
                let (loss, grads) = net.loss_and_grad(bx.view(), by.view());
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!("non-finite training loss in epoch {}", epoch + 1)));
                }
                adam.step(&mut net, &grads);
            }
            let train = net.loss(xt.view(), yt.view());
            let val = net.loss(xv.view(), yv.view());
            if !(train.is_finite() && val.is_finite()) {
                return Err(Error::Diverged(format!("non-finite loss after epoch {}", epoch + 1)));
            }
            log::debug!("mlp epoch {}: train {train:.6} val {val:.6}", epoch + 1);
            history.train_loss.push(train);
            history.val_loss.push(val);
            if val < best.0 {
                best = (val, net.clone());
            }
            if should_stop_early(&history.val_loss, cfg.early_stop_delta) {
                history.stopped_early = true;
                break;
            }
        }
        Ok((best.1, history))
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_params_flat(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = it.next().expect("length"));
        }
    }
}

/// True once the last validation loss exceeds the previous one by more
/// than `delta`.
pub fn should_stop_early(val_loss: &[f64], delta: f64) -> bool {
    match val_loss {
        [.., prev, last] => last - prev > delta,
        _ => false,
    }
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Mlp, lr: f64) -> Self {
        let sizes: Vec<usize> = net.layers.iter().flat_map(|l| [l.weights.len(), l.bias.len()]).collect();
        Adam {
            lr,
            t: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (li, (layer, (gw, gb))) in net.layers.iter_mut().zip(grads).enumerate() {
            let groups: [(&mut Vec<f64>, &[f64]); 2] = [
                (&mut layer.weights, gw.as_slice().expect("contiguous gradient")),
                (&mut layer.bias, gb.as_slice().expect("contiguous gradient")),
            ];
            for (gi, (params, g)) in groups.into_iter().enumerate() {
                let (m, v) = (&mut self.m[2 * li + gi], &mut self.v[2 * li + gi]);
                for k in 0..params.len() {
                    m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                    v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                    params[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Predicts a single row.
pub fn predict_row(net: &Mlp, x: &[f64]) -> Vec<f64> {
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
    net.forward(xv).slice(s![0, ..]).to_vec()
}
