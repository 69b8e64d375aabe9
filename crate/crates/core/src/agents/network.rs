use serde::{Deserialize, Serialize};

use crate::env::Interval;

/// Affine map of raw states to z-scores of the uniform law over the
/// sampling bounds. Shared by the max-entropy policy input and the entropy
/// objective so every policy is measured in the same coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StateScaler {
    pub fn from_bounds(bounds: &[Interval]) -> Self {
        StateScaler {
            mean: bounds.iter().map(Interval::mid).collect(),
            scale: bounds.iter().map(|b| b.width() / 12f64.sqrt()).collect(),
        }
    }

    pub fn apply(&self, state: &[f64]) -> Vec<f64> {
        state.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }
}

/// One-hidden-layer tanh network with a flat parameter vector laid out as
/// `[W1 (hidden x input), b1, W2 (output x hidden), b2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub params: Vec<f64>,
}

impl PolicyNet {
    pub const DEFAULT_HIDDEN: usize = 32;

    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden + output * hidden + output
    }

    pub fn new(input: usize, hidden: usize, output: usize, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), Self::param_count(input, hidden, output), "parameter length");
        PolicyNet { input, hidden, output, params }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let (w1, rest) = self.params.split_at(h * i);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(o * h);
        let hid: Vec<f64> = (0..h)
            .map(|r| (b1[r] + w1[r * i..(r + 1) * i].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh())
            .collect();
        (0..o).map(|r| b2[r] + w2[r * h..(r + 1) * h].iter().zip(&hid).map(|(w, v)| w * v).sum::<f64>()).collect()
    }
}
