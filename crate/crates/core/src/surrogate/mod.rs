//! Surrogate dynamics models: `(s, a) -> s'` regressors behind one
//! interface. Every family regresses the normalized delta `s' - s` on
//! normalized inputs and adds the de-normalized prediction back onto `s`.

pub mod active;
pub mod gbt;
pub mod gp;
pub mod mlp;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use active::{kriging_active_learning, AlConfig, AlEpoch, AlOutcome, StopReason};
pub use gbt::{GbtConfig, GbtModel};
pub use gp::{GpConfig, GpModel};
pub use mlp::{Mlp, MlpConfig};

use crate::dataset::{Dataset, Transition};
use crate::env::{Action, EnvKind};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gbt,
    Mlp,
    Gp,
}

impl Family {
    pub fn id(self) -> &'static str {
        match self {
            Family::Gbt => "gbt",
            Family::Mlp => "mlp",
            Family::Gp => "gp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbt" => Ok(Family::Gbt),
            "mlp" => Ok(Family::Mlp),
            "gp" => Ok(Family::Gp),
            _ => Err(Error::UnknownFamily(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gbt: GbtConfig,
    pub mlp: MlpConfig,
    pub gp: GpConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.gbt.validate()?;
        self.mlp.validate()?;
        self.gp.validate()
    }
}

/// Per-feature affine map to zero mean and unit variance. Constant
/// features get scale 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Normalizer> {
        let first = rows.first().ok_or(Error::NotEnoughSamples { needed: 1, got: 0 })?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::Dimension { expected: d, got: r.len() });
            }
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("normalizer statistics"));
        }
        Ok(Normalizer { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.scale).map(|((z, m), s)| z * s + m).collect()
    }
}

/// Surrogate input features: the state followed by the encoded action.
pub fn encode_input(env: EnvKind, state: &[f64], action: &Action) -> Result<Vec<f64>> {
    let spec = env.spec();
    if state.len() != spec.state_dim {
        return Err(Error::Dimension { expected: spec.state_dim, got: state.len() });
    }
    spec.action_space.validate(action)?;
    let mut x = state.to_vec();
    x.extend(action.encode());
    Ok(x)
}

fn delta(t: &Transition) -> Vec<f64> {
    t.next_state.iter().zip(&t.state).map(|(b, a)| b - a).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum Regressor {
    Gbt(GbtModel),
    Mlp(Mlp),
    Gp(GpModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub format_version: u32,
    pub family: Family,
    pub env: EnvKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub input_norm: Normalizer,
    /// Statistics of the training deltas `s' - s`.
    pub target_norm: Normalizer,
    pub regressor: Regressor,
}

struct Prepared {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    input_norm: Normalizer,
    target_norm: Normalizer,
}

fn prepare(train: &Dataset, min_rows: usize) -> Result<Prepared> {
    if train.len() < min_rows {
        return Err(Error::NotEnoughSamples { needed: min_rows, got: train.len() });
    }
    let env = train.meta.env;
    let raw_x = train.transitions.iter().map(|t| encode_input(env, &t.state, &t.action)).collect::<Result<Vec<_>>>()?;
    let raw_y: Vec<Vec<f64>> = train.transitions.iter().map(delta).collect();
    if raw_x.iter().chain(&raw_y).flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }
    let input_norm = Normalizer::fit(&raw_x)?;
    let target_norm = Normalizer::fit(&raw_y)?;
    Ok(Prepared {
        inputs: raw_x.iter().map(|x| input_norm.apply(x)).collect(),
        targets: raw_y.iter().map(|y| target_norm.apply(y)).collect(),
        input_norm,
        target_norm,
    })
}

fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows.first().map_or(0, Vec::len);
    Array2::from_shape_vec((rows.len(), d), rows.iter().flatten().copied().collect()).expect("rectangular rows")
}

impl SurrogateModel {
    fn assemble(family: Family, train: &Dataset, p: Prepared, regressor: Regressor) -> SurrogateModel {
        SurrogateModel {
            format_version: MODEL_FORMAT_VERSION,
            family,
            env: train.meta.env,
            input_dim: p.input_norm.dim(),
            output_dim: p.target_norm.dim(),
            input_norm: p.input_norm,
            target_norm: p.target_norm,
            regressor,
        }
    }

    /// Next-state prediction `s + delta`.
    pub fn predict(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        let x = encode_input(self.env, state, action)?;
        let z = self.input_norm.apply(&x);
        let dz = match &self.regressor {
            Regressor::Gbt(m) => m.predict(&z),
            Regressor::Mlp(m) => mlp::predict_row(m, &z),
            Regressor::Gp(m) => m.predict_mean(&z),
        };
        self.finish(state, &dz)
    }

    fn finish(&self, state: &[f64], dz: &[f64]) -> Result<Vec<f64>> {
        let d = self.target_norm.invert(dz);
        let out: Vec<f64> = state.iter().zip(&d).map(|(s, d)| s + d).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("surrogate prediction"));
        }
        Ok(out)
    }

    /// Predicted next states for every transition, in order.
    pub fn predict_transitions(&self, rows: &[Transition]) -> Result<Vec<Vec<f64>>> {
        let z = rows
            .iter()
            .map(|t| encode_input(self.env, &t.state, &t.action).map(|x| self.input_norm.apply(&x)))
            .collect::<Result<Vec<_>>>()?;
        let dz: Vec<Vec<f64>> = match &self.regressor {
            Regressor::Gbt(m) => z.par_iter().map(|x| m.predict(x)).collect(),
            Regressor::Gp(m) => z.par_iter().map(|x| m.predict_mean(x)).collect(),
            Regressor::Mlp(m) => z
                .par_chunks(2048)
                .flat_map_iter(|chunk| {
                    let out = m.forward(to_array(chunk).view());
                    out.axis_iter(Axis(0)).map(|r| r.to_vec()).collect::<Vec<_>>()
                })
                .collect(),
        };
        rows.iter().zip(&dz).map(|(t, d)| self.finish(&t.state, d)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SurrogateModel> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: SurrogateModel = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("unsupported model format version {}", model.format_version),
            });
        }
        Ok(model)
    }
}

pub fn fit_gbt(train: &Dataset, cfg: &GbtConfig) -> Result<SurrogateModel> {
    let p = prepare(train, 10)?;
    let model = GbtModel::fit(to_array(&p.inputs).view(), to_array(&p.targets).view(), cfg)?;
    Ok(SurrogateModel::assemble(Family::Gbt, train, p, Regressor::Gbt(model)))
}

pub fn fit_mlp(train: &Dataset, cfg: &MlpConfig, seed: u64) -> Result<SurrogateModel> {
    let p = prepare(train, 100)?;
    let (net, history) = Mlp::train(to_array(&p.inputs).view(), to_array(&p.targets).view(), cfg, seed)?;
    log::debug!(
        "mlp fit on {} rows: {} epochs, final validation loss {:?}",
        train.len(),
        history.val_loss.len(),
        history.val_loss.last()
    );
    Ok(SurrogateModel::assemble(Family::Mlp, train, p, Regressor::Mlp(net)))
}

pub fn fit_gp(train: &Dataset, cfg: &GpConfig) -> Result<SurrogateModel> {
    let p = prepare(train, 2)?;
    let model = GpModel::fit(&p.inputs, &p.targets, cfg)?;
    Ok(SurrogateModel::assemble(Family::Gp, train, p, Regressor::Gp(model)))
}

pub fn fit(family: Family, train: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<SurrogateModel> {
    match family {
        Family::Gbt => fit_gbt(train, &cfg.gbt),
        Family::Mlp => fit_mlp(train, &cfg.mlp, seed),
        Family::Gp => fit_gp(train, &cfg.gp),
    }
}
