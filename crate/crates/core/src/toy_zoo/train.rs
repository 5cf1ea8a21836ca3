//! Mini-batch gradient descent on softmax cross-entropy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::MlpSpec;
use super::tasks::LabeledSet;
use crate::error::{Error, Result};
use crate::param_space::ParamVector;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self { lr: 0.05, epochs: 20, batch: 32, seed: 0 }
    }
}

/// Mean cross-entropy over `indices` and its gradient with respect to the
/// flat parameters.
pub fn loss_and_grad(
    spec: &MlpSpec,
    params: &[f64],
    set: &LabeledSet,
    indices: &[usize],
) -> (f64, Vec<f64>) {
    let widths = spec.widths();
    let layers = spec.dense_layers();
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;

    let mut offsets = Vec::with_capacity(layers);
    let mut cursor = 0;
    for w in widths.windows(2) {
        offsets.push(cursor);
        cursor += w[0] * w[1] + w[1];
    }

    // activations[k] is the input to dense layer k
    let mut activations: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut delta_next: Vec<f64> = Vec::new();

    for &i in indices {
        activations[0].copy_from_slice(set.input(i));
        for k in 0..layers {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let w = &params[offsets[k]..offsets[k] + fan_in * fan_out];
            let b = &params[offsets[k] + fan_in * fan_out..offsets[k] + fan_in * fan_out + fan_out];
            let act = spec.activation_of(k);
            let (head, tail) = activations.split_at_mut(k + 1);
            let input = &head[k];
            for (o, out) in tail[0].iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z: f64 = b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                *out = act.apply(z);
            }
        }

        let logits = &activations[layers];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let label = set.label(i);
        loss += max + sum.ln() - logits[label];

        let mut delta: Vec<f64> = logits.iter().map(|z| (z - max).exp() / sum).collect();
        delta[label] -= 1.0;

        for k in (0..layers).rev() {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let off = offsets[k];
            let input = &activations[k];
            for o in 0..fan_out {
                let d = delta[o];
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + fan_in * fan_out + o] += d;
            }
            if k > 0 {
                let w = &params[off..off + fan_in * fan_out];
                let act = spec.activation_of(k - 1);
                delta_next.clear();
                delta_next.resize(fan_in, 0.0);
                for o in 0..fan_out {
                    let d = delta[o];
                    for (dn, wij) in delta_next.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *dn += d * wij;
                    }
                }
                for (dn, a) in delta_next.iter_mut().zip(&activations[k]) {
                    *dn *= act.derivative_from_output(*a);
                }
                std::mem::swap(&mut delta, &mut delta_next);
            }
        }
    }

    let scale = 1.0 / indices.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, grad)
}

pub fn train(
    spec: &MlpSpec,
    init: &ParamVector,
    set: &LabeledSet,
    hyper: &TrainHyper,
) -> Result<ParamVector> {
    if hyper.batch == 0 || hyper.lr.is_nan() || hyper.lr <= 0.0 {
        return Err(Error::Domain("batch must be >= 1 and lr > 0".into()));
    }
    if init.len() != spec.d_model() {
        return Err(Error::Structure(format!(
            "init of length {} for d_model {}",
            init.len(),
            spec.d_model()
        )));
    }
    if hyper.epochs == 0 {
        return Ok(init.clone());
    }
    if set.is_empty() {
        return Err(Error::Domain("cannot train on an empty set".into()));
    }

    let mut params: Vec<f64> = init.values().iter().map(|&v| v as f64).collect();
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut rng = seed::rng(hyper.seed, &[seed::tag("sgd-shuffle")]);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch) {
            let (loss, grad) = loss_and_grad(spec, &params, set, batch);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= hyper.lr * g;
            }
        }
    }
    let values: Vec<f32> = params.iter().map(|&p| p as f32).collect();
    ParamVector::new(values, init.layers().to_vec()).map_err(|_| Error::TrainingDiverged {
        epoch: hyper.epochs,
        loss: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy_zoo::mlp::{zero_one_risk, Activation};
    use crate::toy_zoo::tasks::{gen_tasks, sample_set, TaskFamily};
    use rand::Rng;

    fn data() -> LabeledSet {
        let tasks = gen_tasks(4, &TaskFamily::default()).unwrap();
        sample_set(&tasks[0], 30, 2).unwrap()
    }

    /// Five-point central differences on `loss_and_grad`'s loss.
    fn fd_check(spec: &MlpSpec, seed: u64) {
        let set = data();
        let params: Vec<f64> = spec.init(seed).values().iter().map(|&v| v as f64).collect();
        let idx: Vec<usize> = (0..set.len()).collect();
        let (_, grad) = loss_and_grad(spec, &params, &set, &idx);
        let h = 1e-3;
        let mut rng = crate::seed::rng(seed, &[]);
        let loss_at = |i: usize, offset: f64| {
            let mut p = params.clone();
            p[i] += offset;
            loss_and_grad(spec, &p, &set, &idx).0
        };
        for (l, &(start, len)) in spec.layout().iter().enumerate() {
            for _ in 0..20 {
                let i = start + rng.random_range(0..len);
                let numeric = (8.0 * (loss_at(i, h) - loss_at(i, -h)) - (loss_at(i, 2.0 * h) - loss_at(i, -2.0 * h)))
                    / (12.0 * h);
                let denom = grad[i].abs().max(numeric.abs()).max(1e-8);
                let rel = (grad[i] - numeric).abs() / denom;
                assert!(rel < 1e-4, "layer {l} coord {i}: {} vs {numeric} (rel {rel})", grad[i]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        fd_check(&MlpSpec::two_layer(8, 6, 4).unwrap(), 1);
        fd_check(&MlpSpec::new(vec![8, 4], Activation::Tanh).unwrap(), 2);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let spec = MlpSpec::two_layer(8, 6, 4).unwrap();
        let init = spec.init(3);
        let hyper = TrainHyper { lr: 0.1, epochs: 0, batch: 8, seed: 1 };
        assert_eq!(train(&spec, &init, &data(), &hyper).unwrap(), init);
    }

    #[test]
    fn training_is_deterministic() {
        let spec = MlpSpec::two_layer(8, 6, 4).unwrap();
        let hyper = TrainHyper { lr: 0.1, epochs: 3, batch: 8, seed: 1 };
        let a = train(&spec, &spec.init(3), &data(), &hyper).unwrap();
        let b = train(&spec, &spec.init(3), &data(), &hyper).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_problem_reaches_zero_training_error() {
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        let mut rng = crate::seed::rng(17, &[]);
        for i in 0..40 {
            let y = i % 2;
            let sign = if y == 1 { 1.0 } else { -1.0 };
            inputs.push(sign * (0.5 + rng.random::<f64>()));
            inputs.push(rng.random::<f64>() * 2.0 - 1.0);
            labels.push(y);
        }
        let set = LabeledSet::new(2, inputs, labels).unwrap();
        let spec = MlpSpec::two_layer(2, 8, 2).unwrap();
        let hyper = TrainHyper { lr: 0.2, epochs: 200, batch: 8, seed: 4 };
        let theta = train(&spec, &spec.init(5), &set, &hyper).unwrap();
        assert_eq!(zero_one_risk(&spec, &theta, &set).unwrap(), 0.0);
    }

    #[test]
    fn exploding_learning_rate_is_reported() {
        let spec = MlpSpec::new(vec![8, 4], Activation::Tanh).unwrap();
        let set = data().relabeled(vec![0; 30]).unwrap();
        let hyper = TrainHyper { lr: 1e300, epochs: 5, batch: 30, seed: 1 };
        let err = train(&spec, &spec.init(1), &set, &hyper).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { .. }), "{err}");
    }
}
