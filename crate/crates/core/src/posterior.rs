//! Distributions over merge coefficients and Monte-Carlo risk of the
//! stochastic classifier they induce.
//!
//! Draw `j` of a distribution under seed `s` depends only on `(s, j)`, so
//! samples can be produced in any order or in parallel.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merging::MergeScheme;
use crate::seed;
use crate::toy_zoo::mlp::Scratch;
use crate::toy_zoo::{argmax, LabeledSet, MlpSpec};

pub const DEFAULT_VARIANCE: f64 = 0.05;
pub const DEFAULT_MC_SAMPLES: usize = 10;

/// Isotropic Gaussian `N(mean, variance * I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if variance <= 0.0 || !variance.is_finite() {
            return Err(Error::Domain(format!("variance {variance} must be positive")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("Gaussian mean"));
        }
        Ok(Self { mean, variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl CategoricalSpec {
    pub fn new(support: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::Domain(format!(
                "{} atoms with {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::Domain("negative probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        for i in 0..support.len() {
            if support[..i].contains(&support[i]) {
                return Err(Error::Domain(format!("atom {i} repeats an earlier atom")));
            }
        }
        Ok(Self { support, probs })
    }

    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let m = support.len();
        Self::new(support, vec![1.0 / m as f64; m])
    }
}

/// Point mass on a single coefficient vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub phi: Vec<f64>,
}

impl PointSpec {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point mass"));
        }
        Ok(Self { phi })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CoeffDist {
    Gaussian(GaussianSpec),
    Categorical(CategoricalSpec),
    Point(PointSpec),
}

impl CoeffDist {
    pub fn dim(&self) -> usize {
        match self {
            CoeffDist::Gaussian(g) => g.dim(),
            CoeffDist::Categorical(c) => c.support[0].len(),
            CoeffDist::Point(p) => p.phi.len(),
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self, CoeffDist::Point(_))
    }

    /// The `index`-th draw under `seed`.
    pub fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        match self {
            CoeffDist::Point(p) => p.phi.clone(),
            CoeffDist::Gaussian(g) => {
                let mut rng = seed::stream(seed, index);
                let std = g.variance.sqrt();
                g.mean
                    .iter()
                    .map(|m| m + std * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            CoeffDist::Categorical(c) => {
                let mut rng = seed::stream(seed, index);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (atom, &p) in c.support.iter().zip(&c.probs) {
                    acc += p;
                    if u < acc {
                        return atom.clone();
                    }
                }
                // rounding left u above the final cumulative sum
                let last = c.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                c.support[last].clone()
            }
        }
    }

    pub fn sample(&self, seed: u64, k: usize) -> Result<Vec<Vec<f64>>> {
        if k == 0 {
            return Err(Error::Domain("sample count must be at least 1".into()));
        }
        Ok((0..k as u64).map(|j| self.draw(seed, j)).collect())
    }
}

/// Mean 0-1 risk over `k` whole-model draws from `dist`.
pub fn mc_risk(
    dist: &CoeffDist,
    scheme: &MergeScheme,
    model: &MlpSpec,
    set: &LabeledSet,
    k: usize,
    seed: u64,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Domain("risk of an empty set".into()));
    }
    if k == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    check_dims(dist, scheme, model, set)?;
    // A point mass has one distinct draw.
    let draws = if dist.is_point() { 1 } else { k };
    let errors: Vec<usize> = (0..draws as u64)
        .into_par_iter()
        .map(|j| {
            let theta = scheme.realize(&dist.draw(seed, j))?;
            Ok(model.count_errors(theta.values(), set))
        })
        .collect::<Result<_>>()?;
    let total: usize = errors.iter().sum();
    Ok(total as f64 / (draws * set.len()) as f64)
}

/// Risk of the randomized classifier that redraws its coefficients for every
/// prediction. Unbiased for the population risk when `set` is fresh.
pub fn fresh_draw_risk(
    dist: &CoeffDist,
    scheme: &MergeScheme,
    model: &MlpSpec,
    set: &LabeledSet,
    seed: u64,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Domain("risk of an empty set".into()));
    }
    check_dims(dist, scheme, model, set)?;
    const CHUNK: usize = 256;
    let errors: Vec<usize> = (0..set.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(set.len());
            let mut scratch = Scratch::default();
            let mut wrong = 0;
            for i in lo..hi {
                let theta = scheme.realize(&dist.draw(seed, i as u64))?;
                model.scores_into(theta.values(), set.input(i), &mut scratch);
                if argmax(scratch.scores()) != set.label(i) {
                    wrong += 1;
                }
            }
            Ok(wrong)
        })
        .collect::<Result<_>>()?;
    Ok(errors.iter().sum::<usize>() as f64 / set.len() as f64)
}

fn check_dims(dist: &CoeffDist, scheme: &MergeScheme, model: &MlpSpec, set: &LabeledSet) -> Result<()> {
    if dist.dim() != scheme.d_phi() {
        return Err(Error::Structure(format!(
            "distribution over {} coefficients for d_phi = {}",
            dist.dim(),
            scheme.d_phi()
        )));
    }
    if set.dim() != model.input_dim() || scheme.pool().base().len() != model.d_model() {
        return Err(Error::Structure("set, model and pool dimensions disagree".into()));
    }
    Ok(())
}
