//! Learning the posterior mean over merge coefficients and certifying it.
//!
//! Every objective evaluation estimates the posterior's empirical risk with
//! the same `mc_seed` draws, and the certificate reuses those draws. The
//! optimizer therefore compares candidates on common random numbers and the
//! certified value of the returned point is exactly the value it was chosen
//! for.

pub mod cma;

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    conventional_bound, gaussian_kl, point_mass_kl, seeger_certificate, test_set_bound,
    BoundBudget, CertificateRecord, Provenance, SeegerCertificate, TestSetForm,
    VACUITY_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::merging::{MergeKind, MergeScheme};
use crate::param_space::ModelPool;
use crate::posterior::{mc_risk, CoeffDist, GaussianSpec, DEFAULT_MC_SAMPLES, DEFAULT_VARIANCE};
use crate::seed;
use crate::toy_zoo::{zero_one_risk, LabeledSet, MlpSpec};

pub use cma::{minimize, CmaConfig, CmaOutcome, Evaluation, TraceEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    TrainRisk,
    PacBayesUpper,
}

impl ObjectiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveKind::TrainRisk => "train_risk",
            ObjectiveKind::PacBayesUpper => "pac_bayes_upper",
        }
    }
}

/// What the search minimizes. The bound objective's sample size is the size
/// of the set it is evaluated on.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    TrainRisk,
    PacBayesUpper { prior: GaussianSpec, delta: f64 },
}

impl Objective {
    pub fn kind(&self) -> ObjectiveKind {
        match self {
            Objective::TrainRisk => ObjectiveKind::TrainRisk,
            Objective::PacBayesUpper { .. } => ObjectiveKind::PacBayesUpper,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub prior_variance: f64,
    pub posterior_variance: f64,
    pub mc_samples: usize,
    pub mc_seed: u64,
    pub delta: f64,
    pub cma: CmaConfig,
    pub test_set_form: TestSetForm,
    /// Copied into every record's provenance.
    pub config_hash: String,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            prior_variance: DEFAULT_VARIANCE,
            posterior_variance: DEFAULT_VARIANCE,
            mc_samples: DEFAULT_MC_SAMPLES,
            mc_seed: 0,
            delta: 0.05,
            cma: CmaConfig::default(),
            test_set_form: TestSetForm::default(),
            config_hash: String::new(),
        }
    }
}

impl CertifyConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("prior_variance", self.prior_variance),
            ("posterior_variance", self.posterior_variance),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Domain(format!("{name} {v} must be positive")));
            }
        }
        if self.mc_samples == 0 {
            return Err(Error::Domain("mc_samples must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!("delta {} outside (0, 1)", self.delta)));
        }
        self.cma.validate()
    }

    fn seeds(&self) -> Vec<(String, u64)> {
        vec![("mc".into(), self.mc_seed), ("cma".into(), self.cma.seed)]
    }

    fn query_seed(&self) -> u64 {
        seed::derive(self.mc_seed, &[seed::tag("query")])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpConfig {
    pub split: f64,
    pub prior_objective: ObjectiveKind,
    pub split_seed: u64,
}

impl Default for DdpConfig {
    fn default() -> Self {
        Self {
            split: 0.5,
            prior_objective: ObjectiveKind::TrainRisk,
            split_seed: 0,
        }
    }
}

/// The set a certificate is issued for, plus an optional fresh set used only
/// to report test error.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a> {
    pub task: &'a str,
    pub support: &'a LabeledSet,
    pub query: Option<&'a LabeledSet>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimized {
    pub mean: Vec<f64>,
    pub value: f64,
    pub trace: Vec<TraceEntry>,
}

/// Searches for the posterior mean minimizing `objective` on `support`,
/// starting from the prior mean (or `default_phi` for `TrainRisk`).
pub fn optimize(
    scheme: &MergeScheme,
    model: &MlpSpec,
    objective: &Objective,
    support: &LabeledSet,
    config: &CertifyConfig,
) -> Result<Optimized> {
    optimize_from(scheme, model, objective, support, config, scheme.default_phi())
}

fn optimize_from(
    scheme: &MergeScheme,
    model: &MlpSpec,
    objective: &Objective,
    support: &LabeledSet,
    config: &CertifyConfig,
    start: Vec<f64>,
) -> Result<Optimized> {
    config.validate()?;
    if support.is_empty() {
        return Err(Error::Domain("empty support set".into()));
    }
    let x0 = match objective {
        Objective::TrainRisk => start,
        Objective::PacBayesUpper { prior, delta } => {
            if prior.dim() != scheme.d_phi() {
                return Err(Error::Structure(format!(
                    "prior over {} coefficients for d_phi = {}",
                    prior.dim(),
                    scheme.d_phi()
                )));
            }
            BoundBudget::new(0.0, support.len(), *delta)?;
            prior.mean.clone()
        }
    };
    let n = support.len();
    let evaluate = |phi: &[f64]| -> Result<Evaluation> {
        let q = GaussianSpec::new(phi.to_vec(), config.posterior_variance)?;
        let kl = match objective {
            Objective::TrainRisk => 0.0,
            Objective::PacBayesUpper { prior, .. } => gaussian_kl(&q, prior)?,
        };
        let dist = CoeffDist::Gaussian(q);
        let risk = mc_risk(&dist, scheme, model, support, config.mc_samples, config.mc_seed)?;
        let value = match objective {
            Objective::TrainRisk => risk,
            Objective::PacBayesUpper { delta, .. } => conventional_bound(risk, kl, n, *delta)?,
        };
        Ok(Evaluation { value, aux: kl })
    };
    let out = minimize(evaluate, &x0, &config.cma)?;
    Ok(Optimized {
        mean: out.best,
        value: out.best_value.value,
        trace: out.trace,
    })
}

/// Certifies the Gaussian posterior centred at `mean` against `prior`.
fn certify_posterior(
    target: Target<'_>,
    scheme: &MergeScheme,
    model: &MlpSpec,
    mean: Vec<f64>,
    prior: &GaussianSpec,
    objective: &str,
    config: &CertifyConfig,
) -> Result<CertificateRecord> {
    let n = target.support.len();
    if n < 2 {
        return Err(Error::Domain(format!("certificate needs n >= 2, got {n}")));
    }
    let q = GaussianSpec::new(mean, config.posterior_variance)?;
    let kl = gaussian_kl(&q, prior)?;
    let dist = CoeffDist::Gaussian(q);
    let k = config.mc_samples;
    let train = mc_risk(&dist, scheme, model, target.support, k, config.mc_seed)?;
    let test = target
        .query
        .map(|set| mc_risk(&dist, scheme, model, set, k, config.query_seed()))
        .transpose()?;
    let cert = seeger_certificate(train, kl, n, config.delta)?;
    let CoeffDist::Gaussian(q) = dist else { unreachable!() };
    Ok(CertificateRecord::from_seeger(
        target.task,
        train,
        test,
        &cert,
        q.mean,
        provenance(scheme.kind(), objective, config),
    ))
}

fn provenance(kind: MergeKind, objective: &str, config: &CertifyConfig) -> Provenance {
    Provenance {
        scheme: kind.as_str().into(),
        objective: objective.into(),
        seeds: config.seeds(),
        config_hash: config.config_hash.clone(),
    }
}

fn uninformative_prior(scheme: &MergeScheme, config: &CertifyConfig) -> Result<GaussianSpec> {
    GaussianSpec::new(scheme.default_phi(), config.prior_variance)
}

/// Optimizes `kind` on the whole support set and certifies the result against
/// the prior `N(default_phi, prior_variance)`.
pub fn certify(
    target: Target<'_>,
    scheme: &MergeScheme,
    model: &MlpSpec,
    kind: ObjectiveKind,
    config: &CertifyConfig,
) -> Result<CertificateRecord> {
    if target.support.len() < 2 {
        return Err(Error::Domain("certificate needs n >= 2".into()));
    }
    let prior = uninformative_prior(scheme, config)?;
    let objective = match kind {
        ObjectiveKind::TrainRisk => Objective::TrainRisk,
        ObjectiveKind::PacBayesUpper => Objective::PacBayesUpper {
            prior: prior.clone(),
            delta: config.delta,
        },
    };
    let found = optimize(scheme, model, &objective, target.support, config)?;
    certify_posterior(target, scheme, model, found.mean, &prior, kind.as_str(), config)
}

/// Disjoint halves `(A, B)` of `0..n`; `A` is fitted first.
pub fn split_indices(n: usize, ddp: &DdpConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ddp.split > 0.0 && ddp.split < 1.0) {
        return Err(Error::Domain(format!("split fraction {} outside (0, 1)", ddp.split)));
    }
    if n < 4 {
        return Err(Error::Domain(format!("splitting needs n >= 4, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(ddp.split_seed, &[seed::tag("split"), n as u64]));
    let n_a = ((ddp.split * n as f64).round() as usize).clamp(2, n - 2);
    let mut a = order[..n_a].to_vec();
    let mut b = order[n_a..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}

/// Fits the data-dependent prior mean on `prior_set`.
pub fn fit_prior(
    scheme: &MergeScheme,
    model: &MlpSpec,
    prior_set: &LabeledSet,
    ddp: &DdpConfig,
    config: &CertifyConfig,
) -> Result<Vec<f64>> {
    let objective = match ddp.prior_objective {
        ObjectiveKind::TrainRisk => Objective::TrainRisk,
        ObjectiveKind::PacBayesUpper => Objective::PacBayesUpper {
            prior: uninformative_prior(scheme, config)?,
            delta: config.delta,
        },
    };
    Ok(optimize(scheme, model, &objective, prior_set, config)?.mean)
}

/// Data-dependent prior: fit the prior mean on half A, then optimize and
/// certify the bound on half B alone.
pub fn certify_ddp(
    target: Target<'_>,
    scheme: &MergeScheme,
    model: &MlpSpec,
    ddp: &DdpConfig,
    config: &CertifyConfig,
) -> Result<CertificateRecord> {
    let (a, b) = split_indices(target.support.len(), ddp)?;
    let half_a = target.support.subset(&a);
    let half_b = target.support.subset(&b);
    let prior_mean = fit_prior(scheme, model, &half_a, ddp, config)?;
    certify_on_half(target, scheme, model, prior_mean, &half_b, config)
}

fn certify_on_half(
    target: Target<'_>,
    scheme: &MergeScheme,
    model: &MlpSpec,
    prior_mean: Vec<f64>,
    half_b: &LabeledSet,
    config: &CertifyConfig,
) -> Result<CertificateRecord> {
    let prior = GaussianSpec::new(prior_mean.clone(), config.prior_variance)?;
    let objective = Objective::PacBayesUpper {
        prior: prior.clone(),
        delta: config.delta,
    };
    let found = optimize_from(scheme, model, &objective, half_b, config, prior_mean)?;
    let on_b = Target { support: half_b, ..target };
    certify_posterior(on_b, scheme, model, found.mean, &prior, "ddp", config)
}

/// Train on half A, then certify the deterministic merged model by its error
/// on half B through the test-set bound.
pub fn certify_half_val(
    target: Target<'_>,
    scheme: &MergeScheme,
    model: &MlpSpec,
    ddp: &DdpConfig,
    config: &CertifyConfig,
) -> Result<CertificateRecord> {
    let (a, b) = split_indices(target.support.len(), ddp)?;
    let fitted = fit_prior(scheme, model, &target.support.subset(&a), ddp, config)?;
    half_val_record(target, scheme, model, fitted, &target.support.subset(&b), config)
}

fn half_val_record(
    target: Target<'_>,
    scheme: &MergeScheme,
    model: &MlpSpec,
    phi: Vec<f64>,
    half_b: &LabeledSet,
    config: &CertifyConfig,
) -> Result<CertificateRecord> {
    let theta = scheme.realize(&phi)?;
    let val = zero_one_risk(model, &theta, half_b)?;
    let test = target.query.map(|q| zero_one_risk(model, &theta, q)).transpose()?;
    let n = half_b.len();
    let pb = test_set_bound(val, n, config.delta, config.test_set_form)?;
    let cert = SeegerCertificate {
        budget: BoundBudget::new(0.0, n, config.delta)?,
        pb_bound: pb,
        upper_bound: conventional_bound(val, 0.0, n, config.delta)?,
        vacuous: pb >= VACUITY_THRESHOLD,
    };
    let label = match config.test_set_form {
        TestSetForm::PacBayes => "half_val",
        TestSetForm::Classic => "half_val_classic",
    };
    Ok(CertificateRecord::from_seeger(
        target.task,
        val,
        test,
        &cert,
        phi,
        provenance(scheme.kind(), label, config),
    ))
}

/// The DDP and half-validation certificates of one support set, sharing the
/// split and the half-A fit.
pub fn certify_ddp_and_half_val(
    target: Target<'_>,
    scheme: &MergeScheme,
    model: &MlpSpec,
    ddp: &DdpConfig,
    config: &CertifyConfig,
) -> Result<(CertificateRecord, CertificateRecord)> {
    let (a, b) = split_indices(target.support.len(), ddp)?;
    let half_b = target.support.subset(&b);
    let prior_mean = fit_prior(scheme, model, &target.support.subset(&a), ddp, config)?;
    let half = half_val_record(target, scheme, model, prior_mean.clone(), &half_b, config)?;
    let ddp_rec = certify_on_half(target, scheme, model, prior_mean, &half_b, config)?;
    Ok((ddp_rec, half))
}

/// Finite hypothesis class: task arithmetic with its scale on an even grid
/// of `grid_size` points in `[0, 1]`, uniform prior, point-mass posterior on
/// the grid point with the lowest training error.
pub fn certify_discrete(
    target: Target<'_>,
    pool: Arc<ModelPool>,
    model: &MlpSpec,
    grid_size: usize,
    config: &CertifyConfig,
) -> Result<CertificateRecord> {
    if grid_size < 2 {
        return Err(Error::Domain(format!("grid size {grid_size} must be at least 2")));
    }
    let scheme = MergeScheme::with_defaults(MergeKind::TaskArith, pool)?;
    let step = 1.0 / (grid_size - 1) as f64;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..grid_size {
        let phi = i as f64 * step;
        let err = zero_one_risk(model, &scheme.realize(&[phi])?, target.support)?;
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((phi, err));
        }
    }
    let (phi, train) = best.expect("grid is non-empty");
    let theta = scheme.realize(&[phi])?;
    let test = target.query.map(|q| zero_one_risk(model, &theta, q)).transpose()?;
    let cert = seeger_certificate(train, point_mass_kl(grid_size), target.support.len(), config.delta)?;
    Ok(CertificateRecord::from_seeger(
        target.task,
        train,
        test,
        &cert,
        vec![phi],
        provenance(MergeKind::TaskArith, "discrete", config),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::{ParamVector, TaskVector};
    use crate::toy_zoo::{build_pool, gen_tasks, sample_set, PoolRecipe, TaskFamily, TrainHyper};

    struct Fixture {
        pool: Arc<ModelPool>,
        model: MlpSpec,
        support: LabeledSet,
        query: LabeledSet,
    }

    fn fixture() -> Fixture {
        let family = TaskFamily { count: 4, ..TaskFamily::default() };
        let tasks = gen_tasks(11, &family).unwrap();
        let model = MlpSpec::two_layer(family.input_dim, 8, family.class_count).unwrap();
        let recipe = PoolRecipe {
            pretrain_per_task: 60,
            finetune_per_task: 120,
            base: TrainHyper { epochs: 5, ..PoolRecipe::default().base },
            finetune: TrainHyper { epochs: 5, ..PoolRecipe::default().finetune },
        };
        let pool = build_pool(&tasks[1..], &model, &recipe, 4).unwrap();
        Fixture {
            pool: Arc::new(pool),
            model,
            support: sample_set(&tasks[0], 40, 1).unwrap(),
            query: sample_set(&tasks[0], 400, 2).unwrap(),
        }
    }

    fn quick() -> CertifyConfig {
        CertifyConfig {
            cma: CmaConfig { max_evals: 60, seed: 3, ..CmaConfig::default() },
            ..CertifyConfig::default()
        }
    }

    fn target(f: &Fixture) -> Target<'_> {
        Target { task: "t0", support: &f.support, query: Some(&f.query) }
    }

    #[test]
    fn train_risk_record_satisfies_the_bound_identity() {
        let f = fixture();
        let scheme = MergeScheme::with_defaults(MergeKind::TaskArith, f.pool.clone()).unwrap();
        let rec = certify(target(&f), &scheme, &f.model, ObjectiveKind::TrainRisk, &quick()).unwrap();
        let n = rec.n as f64;
        let kl = (rec.upper_bound - rec.train_error).powi(2) * 2.0 * (n - 1.0) - (n / rec.delta).ln();
        assert!((kl - rec.kl_qp).abs() < 1e-6);
        assert!(rec.test_error.is_some());
        rec.revalidate(1e-9).unwrap();
        if !rec.vacuous {
            assert!(rec.train_error <= rec.pb_bound && rec.pb_bound <= rec.upper_bound);
        }
    }

    #[test]
    fn bound_objective_never_loses_to_its_start() {
        let f = fixture();
        let scheme = MergeScheme::with_defaults(MergeKind::TaskWiseAda, f.pool.clone()).unwrap();
        let cfg = quick();
        let rec = certify(target(&f), &scheme, &f.model, ObjectiveKind::PacBayesUpper, &cfg).unwrap();
        let prior = uninformative_prior(&scheme, &cfg).unwrap();
        let at_start = certify_posterior(target(&f), &scheme, &f.model, scheme.default_phi(), &prior, "x", &cfg)
            .unwrap();
        assert!(rec.upper_bound <= at_start.upper_bound + 1e-6);
    }

    #[test]
    fn dominant_kl_keeps_the_mean_at_the_prior() {
        let f = fixture();
        let scheme = MergeScheme::with_defaults(MergeKind::TaskWiseAda, f.pool.clone()).unwrap();
        let cfg = quick();
        let prior = GaussianSpec::new(scheme.default_phi(), 1e-8).unwrap();
        let objective = Objective::PacBayesUpper { prior: prior.clone(), delta: 0.05 };
        let out = optimize(&scheme, &f.model, &objective, &f.support, &cfg).unwrap();
        for (a, b) in out.mean.iter().zip(&prior.mean) {
            assert!((a - b).abs() < 0.05);
        }
    }

    #[test]
    fn optimization_is_deterministic() {
        let f = fixture();
        let scheme = MergeScheme::with_defaults(MergeKind::Ties, f.pool.clone()).unwrap();
        let a = optimize(&scheme, &f.model, &Objective::TrainRisk, &f.support, &quick()).unwrap();
        let b = optimize(&scheme, &f.model, &Objective::TrainRisk, &f.support, &quick()).unwrap();
        assert_eq!(a, b);
        let trace_min = a.trace.iter().map(|t| t.objective).fold(f64::INFINITY, f64::min);
        assert_eq!(a.value, trace_min);
    }

    #[test]
    fn prior_dimension_mismatch_is_rejected() {
        let f = fixture();
        let scheme = MergeScheme::with_defaults(MergeKind::TaskWiseAda, f.pool.clone()).unwrap();
        let objective = Objective::PacBayesUpper {
            prior: GaussianSpec::new(vec![0.0], 0.05).unwrap(),
            delta: 0.05,
        };
        assert!(matches!(
            optimize(&scheme, &f.model, &objective, &f.support, &quick()),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn halves_are_disjoint_and_cover() {
        let ddp = DdpConfig::default();
        let (a, b) = split_indices(100, &ddp).unwrap();
        assert_eq!((a.len(), b.len()), (50, 50));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (a, b) = split_indices(5, &DdpConfig { split: 0.9, ..ddp.clone() }).unwrap();
        assert_eq!((a.len(), b.len()), (3, 2));
        assert!(split_indices(3, &ddp).is_err());
        assert!(split_indices(10, &DdpConfig { split: 1.0, ..ddp }).is_err());
    }

    #[test]
    fn ddp_certifies_on_half_b() {
        let f = fixture();
        let scheme = MergeScheme::with_defaults(MergeKind::TaskArith, f.pool.clone()).unwrap();
        let rec = certify_ddp(target(&f), &scheme, &f.model, &DdpConfig::default(), &quick()).unwrap();
        assert_eq!(rec.n, 20);
        rec.revalidate(1e-9).unwrap();
        let (d, h) =
            certify_ddp_and_half_val(target(&f), &scheme, &f.model, &DdpConfig::default(), &quick()).unwrap();
        assert_eq!(d, rec);
        assert_eq!(h.n, 20);
        assert_eq!(h.kl_qp, 0.0);
        h.revalidate(1e-9).unwrap();
    }

    #[test]
    fn prior_mean_ignores_half_b() {
        let f = fixture();
        let scheme = MergeScheme::with_defaults(MergeKind::TaskWiseAda, f.pool.clone()).unwrap();
        let ddp = DdpConfig::default();
        let (a, _) = split_indices(f.support.len(), &ddp).unwrap();
        let mu = fit_prior(&scheme, &f.model, &f.support.subset(&a), &ddp, &quick()).unwrap();
        // same half A inside a different support set
        let mut relabeled: Vec<usize> = f.support.labels().to_vec();
        let (_, b) = split_indices(f.support.len(), &ddp).unwrap();
        for &i in &b {
            relabeled[i] = (relabeled[i] + 1) % 4;
        }
        let other = f.support.relabeled(relabeled).unwrap();
        let (a2, _) = split_indices(other.len(), &ddp).unwrap();
        let mu2 = fit_prior(&scheme, &f.model, &other.subset(&a2), &ddp, &quick()).unwrap();
        assert_eq!(mu, mu2);
    }

    #[test]
    fn discrete_kl_is_log_grid_size() {
        let f = fixture();
        let rec = certify_discrete(target(&f), f.pool.clone(), &f.model, 20, &quick()).unwrap();
        assert_eq!(rec.kl_qp, 20f64.ln());
        assert!((rec.kl_qp - 2.9957).abs() < 1e-4);
        rec.revalidate(1e-9).unwrap();
        assert!(certify_discrete(target(&f), f.pool.clone(), &f.model, 1, &quick()).is_err());
    }

    #[test]
    fn discrete_picks_the_better_hypothesis() {
        // base predicts class 0 everywhere, the task vector flips to class 1
        let model = MlpSpec::new(vec![1, 2], crate::toy_zoo::Activation::Identity).unwrap();
        let base = ParamVector::new(vec![0.0, 0.0, 1.0, 0.0], model.layout()).unwrap();
        let delta = ParamVector::new(vec![0.0, 0.0, -2.0, 2.0], model.layout()).unwrap();
        let pool = Arc::new(ModelPool::new(base, vec![("a".into(), TaskVector::new(delta))]).unwrap());
        let support = LabeledSet::new(1, vec![0.5, -0.5, 1.0], vec![1, 1, 1]).unwrap();
        let t = Target { task: "t", support: &support, query: None };
        let rec = certify_discrete(t, pool.clone(), &model, 2, &quick()).unwrap();
        assert_eq!(rec.phi, vec![1.0]);
        assert_eq!(rec.train_error, 0.0);
        let flipped = support.relabeled(vec![0, 0, 0]).unwrap();
        let t = Target { task: "t", support: &flipped, query: None };
        assert_eq!(certify_discrete(t, pool, &model, 2, &quick()).unwrap().phi, vec![0.0]);
    }
}
