//! Covariance-matrix-adapting evolution strategy, `(mu/mu_w, lambda)` with
//! cumulative step-size adaptation and rank-one plus rank-mu covariance
//! updates.
//!
//! Candidates of one generation are sampled sequentially from a seeded stream
//! and evaluated in parallel; results are reduced in index order, so a run is
//! a pure function of its seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmaConfig {
    /// `None` selects `4 + floor(3 ln d)`.
    pub popsize: Option<usize>,
    pub sigma0: f64,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for CmaConfig {
    fn default() -> Self {
        Self {
            popsize: None,
            sigma0: 1.0,
            max_evals: 2000,
            seed: 0,
        }
    }
}

impl CmaConfig {
    pub fn population(&self, dim: usize) -> usize {
        self.popsize
            .unwrap_or_else(|| 4 + (3.0 * (dim.max(1) as f64).ln()).floor() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.popsize.is_some_and(|p| p < 4) {
            return Err(Error::Domain("CMA population must be at least 4".into()));
        }
        if self.sigma0 <= 0.0 || !self.sigma0.is_finite() {
            return Err(Error::Domain(format!("sigma0 {} must be positive", self.sigma0)));
        }
        if self.max_evals == 0 {
            return Err(Error::Domain("max_evals must be at least 1".into()));
        }
        Ok(())
    }
}

/// Objective value plus an auxiliary diagnostic (the KL term for bound
/// objectives) carried into the trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    pub aux: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Generation 0 is the initial point on its own.
    pub generation: usize,
    pub evaluations: usize,
    /// Best objective value within this generation.
    pub objective: f64,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaOutcome {
    pub best: Vec<f64>,
    pub best_value: Evaluation,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
}

struct Params {
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Params {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self { lambda, weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n }
    }
}

fn checked(eval: Evaluation) -> Result<Evaluation> {
    if eval.value.is_finite() {
        Ok(eval)
    } else {
        Err(Error::Opt(format!("objective returned {}", eval.value)))
    }
}

/// Minimizes `objective` starting from `x0`. The initial point is evaluated
/// first and competes for the best-ever result, so the returned point is
/// never worse than `x0`. Exhausting `max_evals` is the normal way to stop.
pub fn minimize<F>(objective: F, x0: &[f64], config: &CmaConfig) -> Result<CmaOutcome>
where
    F: Fn(&[f64]) -> Result<Evaluation> + Sync,
{
    config.validate()?;
    let n = x0.len();
    if n == 0 {
        return Err(Error::Opt("empty search space".into()));
    }
    let p = Params::new(n, config.population(n));
    let mut rng = seed::rng(config.seed, &[seed::tag("cma")]);

    let first = checked(objective(x0)?)?;
    let mut evaluations = 1;
    let mut best = x0.to_vec();
    let mut best_value = first;
    let mut trace = vec![TraceEntry {
        generation: 0,
        evaluations,
        objective: first.value,
        kl: first.aux,
    }];

    let mut mean = DVector::from_column_slice(x0);
    let mut sigma = config.sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut p_sigma = DVector::<f64>::zeros(n);
    let mut p_c = DVector::<f64>::zeros(n);
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut scales = DVector::<f64>::from_element(n, 1.0);

    let mut generation = 0;
    while evaluations < config.max_evals {
        generation += 1;
        let lambda = p.lambda.min(config.max_evals - evaluations);

        let steps: Vec<DVector<f64>> = (0..lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                &basis * z.component_mul(&scales)
            })
            .collect();
        let candidates: Vec<DVector<f64>> = steps.iter().map(|y| &mean + sigma * y).collect();
        let values: Vec<Evaluation> = candidates
            .par_iter()
            .map(|x| objective(x.as_slice()).and_then(checked))
            .collect::<Result<_>>()?;
        evaluations += lambda;

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| values[a].value.total_cmp(&values[b].value));
        let top = order[0];
        trace.push(TraceEntry {
            generation,
            evaluations,
            objective: values[top].value,
            kl: values[top].aux,
        });
        if values[top].value < best_value.value {
            best_value = values[top];
            best = candidates[top].as_slice().to_vec();
        }
        // a truncated final generation only reports its evaluations
        if lambda < p.lambda {
            break;
        }

        let mut y_w = DVector::<f64>::zeros(n);
        for (w, &i) in p.weights.iter().zip(&order) {
            y_w += *w * &steps[i];
        }
        mean += sigma * &y_w;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_sqrt_y = &basis * (basis.transpose() * &y_w).component_div(&scales);
        p_sigma = (1.0 - p.c_sigma) * &p_sigma
            + (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt() * inv_sqrt_y;
        let ps_norm = p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - p.c_sigma).powi(2 * generation as i32)).sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        p_c = (1.0 - p.c_c) * &p_c + h * (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &i) in p.weights.iter().zip(&order) {
            rank_mu += *w * &steps[i] * steps[i].transpose();
        }
        let correction = (1.0 - h) * p.c_c * (2.0 - p.c_c);
        cov = (1.0 - p.c_1 - p.c_mu) * &cov
            + p.c_1 * (&p_c * p_c.transpose() + correction * &cov)
            + p.c_mu * rank_mu;
        cov = 0.5 * (&cov + cov.transpose());

        sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
        if !sigma.is_finite() {
            return Err(Error::Opt("step size diverged".into()));
        }

        let eig = cov.clone().symmetric_eigen();
        basis = eig.eigenvectors;
        scales = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());

        if sigma * scales.max() < 1e-12 {
            break;
        }
    }

    Ok(CmaOutcome {
        best,
        best_value,
        evaluations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(target: Vec<f64>) -> impl Fn(&[f64]) -> Result<Evaluation> + Sync {
        move |x: &[f64]| {
            let v = x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
            Ok(Evaluation { value: v, aux: 0.0 })
        }
    }

    #[test]
    fn population_rule() {
        let c = CmaConfig::default();
        assert_eq!(c.population(1), 4);
        assert_eq!(c.population(7), 4 + 5);
        assert_eq!(c.population(28), 4 + 9);
        assert_eq!(CmaConfig { popsize: Some(12), ..c }.population(3), 12);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let cfg = CmaConfig { max_evals: 500, seed: 3, ..CmaConfig::default() };
        let out = minimize(quad(vec![3.0]), &[0.0], &cfg).unwrap();
        assert!((out.best[0] - 3.0).abs() < 1e-3, "{:?}", out.best);
        assert!(out.evaluations <= 500);
    }

    #[test]
    fn ten_dimensional_quadratic() {
        let target: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let cfg = CmaConfig { max_evals: 6000, seed: 1, ..CmaConfig::default() };
        let out = minimize(quad(target.clone()), &[0.0; 10], &cfg).unwrap();
        for (a, b) in out.best.iter().zip(&target) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = CmaConfig { max_evals: 200, seed: 9, ..CmaConfig::default() };
        let a = minimize(quad(vec![1.0, -2.0, 0.5]), &[0.0; 3], &cfg).unwrap();
        let b = minimize(quad(vec![1.0, -2.0, 0.5]), &[0.0; 3], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn best_is_the_trace_minimum_and_never_worse_than_start() {
        let cfg = CmaConfig { max_evals: 300, seed: 5, ..CmaConfig::default() };
        let out = minimize(quad(vec![0.2, 0.1]), &[0.2, 0.1], &cfg).unwrap();
        let trace_min = out.trace.iter().map(|t| t.objective).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_value.value, trace_min);
        assert_eq!(out.best, vec![0.2, 0.1]);
        assert_eq!(out.trace[0].generation, 0);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let f = |_: &[f64]| Ok(Evaluation { value: f64::NAN, aux: 0.0 });
        assert!(matches!(minimize(f, &[0.0], &CmaConfig::default()), Err(Error::Opt(_))));
    }

    #[test]
    fn respects_the_evaluation_budget() {
        let cfg = CmaConfig { max_evals: 37, seed: 2, ..CmaConfig::default() };
        let flat = |_: &[f64]| Ok(Evaluation { value: 1.0, aux: 0.0 });
        let out = minimize(flat, &[0.0; 5], &cfg).unwrap();
        assert_eq!(out.evaluations, 37);
    }

    #[test]
    fn config_validation() {
        assert!(CmaConfig { popsize: Some(3), ..CmaConfig::default() }.validate().is_err());
        assert!(CmaConfig { sigma0: 0.0, ..CmaConfig::default() }.validate().is_err());
        assert!(CmaConfig { max_evals: 0, ..CmaConfig::default() }.validate().is_err());
    }
}
