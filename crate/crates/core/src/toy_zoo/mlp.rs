//! Dense feed-forward classifier over a flat [`ParamVector`].
//!
//! Each dense layer contributes two layer blocks: the `out x in` weight matrix
//! (row-major) followed by the bias. Hidden layers apply the configured
//! activation; the output layer is linear.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::tasks::LabeledSet;
use crate::error::{Error, Result};
use crate::param_space::{LayerSpan, ParamVector};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Structure(format!("invalid layer widths {widths:?}")));
        }
        if *widths.last().unwrap() < 2 {
            return Err(Error::Structure("need at least two output classes".into()));
        }
        Ok(Self { widths, activation })
    }

    /// `input -> hidden (activation) -> classes`.
    pub fn two_layer(input: usize, hidden: usize, classes: usize) -> Result<Self> {
        Self::new(vec![input, hidden, classes], Activation::Tanh)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn class_count(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn dense_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Activation applied after dense layer `k`.
    pub fn activation_of(&self, k: usize) -> Activation {
        if k + 1 == self.dense_layers() {
            Activation::Identity
        } else {
            self.activation
        }
    }

    /// Total parameter count (weights plus biases).
    pub fn d_model(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn layout(&self) -> Vec<LayerSpan> {
        let mut spans = Vec::with_capacity(2 * self.dense_layers());
        let mut cursor = 0;
        for w in self.widths.windows(2) {
            spans.push((cursor, w[0] * w[1]));
            cursor += w[0] * w[1];
            spans.push((cursor, w[1]));
            cursor += w[1];
        }
        spans
    }

    /// Scaled-Gaussian weights (variance `1 / fan_in`), zero biases.
    pub fn init(&self, seed: u64) -> ParamVector {
        let mut rng = seed::rng(seed, &[seed::tag("mlp-init")]);
        let mut values = Vec::with_capacity(self.d_model());
        for w in self.widths.windows(2) {
            let std = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                values.push((std * rng.sample::<f64, _>(StandardNormal)) as f32);
            }
            values.extend(std::iter::repeat_n(0.0f32, w[1]));
        }
        ParamVector::new(values, self.layout()).expect("layout matches d_model")
    }

    fn check(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != self.d_model() || theta.layers() != self.layout().as_slice() {
            return Err(Error::Structure(format!(
                "parameter vector of length {} does not match d_model {}",
                theta.len(),
                self.d_model()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, theta: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        self.check(theta)?;
        if x.len() != self.input_dim() {
            return Err(Error::Structure(format!(
                "input of length {} for input_dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut scratch = Scratch::default();
        self.scores_into(theta.values(), x, &mut scratch);
        Ok(scratch.current.clone())
    }

    pub fn predict(&self, theta: &ParamVector, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(theta, x)?))
    }

    /// Unchecked forward pass; the scores end up in `scratch.current`.
    pub(crate) fn scores_into(&self, params: &[f32], x: &[f64], scratch: &mut Scratch) {
        scratch.current.clear();
        scratch.current.extend_from_slice(x);
        let mut offset = 0;
        for (k, w) in self.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &params[offset..offset + fan_in * fan_out];
            let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let act = self.activation_of(k);
            scratch.next.clear();
            for (row, &b) in weights.chunks_exact(fan_in).zip(bias) {
                let mut z = b as f64;
                for (&wij, &aj) in row.iter().zip(&scratch.current) {
                    z += wij as f64 * aj;
                }
                scratch.next.push(act.apply(z));
            }
            std::mem::swap(&mut scratch.current, &mut scratch.next);
        }
    }

    /// Number of points in `set` whose predicted class differs from the label.
    pub(crate) fn count_errors(&self, params: &[f32], set: &LabeledSet) -> usize {
        let mut scratch = Scratch::default();
        set.iter()
            .filter(|(x, y)| {
                self.scores_into(params, x, &mut scratch);
                argmax(&scratch.current) != *y
            })
            .count()
    }
}

#[derive(Default)]
pub(crate) struct Scratch {
    current: Vec<f64>,
    next: Vec<f64>,
}

impl Scratch {
    pub(crate) fn scores(&self) -> &[f64] {
        &self.current
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Fraction of misclassified points.
pub fn zero_one_risk(spec: &MlpSpec, theta: &ParamVector, set: &LabeledSet) -> Result<f64> {
    spec.check(theta)?;
    if set.is_empty() {
        return Err(Error::Domain("risk of an empty set".into()));
    }
    if set.dim() != spec.input_dim() {
        return Err(Error::Structure(format!(
            "set dimension {} for input_dim {}",
            set.dim(),
            spec.input_dim()
        )));
    }
    Ok(spec.count_errors(theta.values(), set) as f64 / set.len() as f64)
}

/// Predicted labels for every point in `set`.
pub fn predictions(spec: &MlpSpec, theta: &ParamVector, set: &LabeledSet) -> Result<Vec<usize>> {
    spec.check(theta)?;
    let mut scratch = Scratch::default();
    Ok(set
        .iter()
        .map(|(x, _)| {
            spec.scores_into(theta.values(), x, &mut scratch);
            argmax(&scratch.current)
        })
        .collect())
}
