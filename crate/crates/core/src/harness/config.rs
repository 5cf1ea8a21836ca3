//! Experiment configuration: a TOML document of `key.path = value` entries
//! over the defaults below, hashed in canonical JSON form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::TestSetForm;
use crate::certify::{CertifyConfig, CmaConfig, DdpConfig};
use crate::error::{Error, Result};
use crate::merging::{MergeKind, DEFAULT_TRIM_FRACTION};
use crate::posterior::{DEFAULT_MC_SAMPLES, DEFAULT_VARIANCE};
use crate::seed;
use crate::toy_zoo::{Activation, MlpSpec, PoolRecipe, TaskFamily};

/// What `run` does with the configured grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every (method, scheme, n, target) combination once.
    #[default]
    Grid,
    /// DDP, half-validation and full-data bound optimization per n.
    Sweep,
    /// Repeated fresh support sets against a large population sample.
    Validity,
}

/// How a merge coefficient vector is learned and certified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TrainRisk,
    PacBayesUpper,
    Ddp,
    HalfVal,
    Discrete,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::TrainRisk => "train_risk",
            Method::PacBayesUpper => "pac_bayes_upper",
            Method::Ddp => "ddp",
            Method::HalfVal => "half_val",
            Method::Discrete => "discrete",
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 16, activation: Activation::Tanh }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PosteriorConfig {
    pub variance: f64,
    /// Whole-model draws per risk estimate.
    pub mc_samples: usize,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self { variance: DEFAULT_VARIANCE, mc_samples: DEFAULT_MC_SAMPLES }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub variance: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { variance: DEFAULT_VARIANCE }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub kind: Vec<MergeKind>,
    pub trim_fraction: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { kind: vec![MergeKind::TaskArith], trim_fraction: DEFAULT_TRIM_FRACTION }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub kind: Vec<Method>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { kind: vec![Method::PacBayesUpper] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscreteConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub grid_size: Vec<usize>,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        Self { grid_size: vec![20] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidityConfig {
    pub trials: usize,
    /// Fresh points used as the population for each trial.
    pub population_size: usize,
}

impl Default for ValidityConfig {
    fn default() -> Self {
        Self { trials: 200, population_size: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    /// Not part of the hash.
    pub out_dir: PathBuf,
    /// The first `targets` tasks are held out and certified in turn.
    pub targets: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    pub query_size: usize,
    pub delta: f64,
    pub posterior: PosteriorConfig,
    pub prior: PriorConfig,
    pub test_set_form: TestSetForm,
    pub tasks: TaskFamily,
    pub model: ModelConfig,
    pub pool: PoolRecipe,
    pub merge: MergeConfig,
    pub objective: ObjectiveConfig,
    pub cma: CmaConfig,
    pub ddp: DdpConfig,
    pub discrete: DiscreteConfig,
    pub validity: ValidityConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "custom".into(),
            mode: Mode::Grid,
            seed: 0,
            out_dir: PathBuf::from("out"),
            targets: 5,
            n: vec![100],
            query_size: 5000,
            delta: 0.05,
            posterior: PosteriorConfig::default(),
            prior: PriorConfig::default(),
            test_set_form: TestSetForm::PacBayes,
            tasks: TaskFamily::default(),
            model: ModelConfig::default(),
            pool: PoolRecipe::default(),
            merge: MergeConfig::default(),
            objective: ObjectiveConfig::default(),
            cma: CmaConfig::default(),
            ddp: DdpConfig::default(),
            discrete: DiscreteConfig::default(),
            validity: ValidityConfig::default(),
        }
    }
}

/// Built-in scenario files.
pub const SCENARIOS: [(&str, &str); 6] = [
    ("paper-table1-toy", include_str!("../../scenarios/paper-table1-toy.toml")),
    ("paper-ddp", include_str!("../../scenarios/paper-ddp.toml")),
    ("paper-halfval", include_str!("../../scenarios/paper-halfval.toml")),
    ("paper-gap-sweep", include_str!("../../scenarios/paper-gap-sweep.toml")),
    ("paper-discrete", include_str!("../../scenarios/paper-discrete.toml")),
    ("validity-trial", include_str!("../../scenarios/validity-trial.toml")),
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn scenario(name: &str) -> Result<Self> {
        let (_, text) = SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| {
                let known: Vec<&str> = SCENARIOS.iter().map(|(n, _)| *n).collect();
                Error::config("scenario", format!("unknown scenario `{name}` (known: {})", known.join(", ")))
            })?;
        Self::from_toml(text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, msg: String| Err(Error::config(path, msg));
        if self.targets == 0 || self.targets > self.tasks.count {
            return fail("targets", format!("must be in 1..={}", self.tasks.count));
        }
        if self.tasks.count < 3 {
            return fail("tasks.count", "hold-one-out needs at least 3 tasks".into());
        }
        if !(0.0..=1.0).contains(&self.tasks.relatedness) {
            return fail("tasks.relatedness", format!("{} outside [0, 1]", self.tasks.relatedness));
        }
        if self.n.is_empty() {
            return fail("n", "needs at least one sample size".into());
        }
        let min_n = match self.mode {
            Mode::Sweep => 4,
            _ if self.objective.kind.iter().any(|m| matches!(m, Method::Ddp | Method::HalfVal)) => 4,
            _ => 2,
        };
        if let Some(&bad) = self.n.iter().find(|&&n| n < min_n) {
            return fail("n", format!("sample size {bad} below {min_n}"));
        }
        if self.mode == Mode::Sweep && self.n.windows(2).any(|w| w[0] >= w[1]) {
            return fail("n", "sweep sizes must be strictly ascending".into());
        }
        if self.query_size == 0 {
            return fail("query_size", "must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail("delta", format!("{} outside (0, 1)", self.delta));
        }
        for (path, v) in [
            ("posterior.variance", self.posterior.variance),
            ("prior.variance", self.prior.variance),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return fail(path, format!("{v} must be positive"));
            }
        }
        if self.posterior.mc_samples == 0 {
            return fail("posterior.mc_samples", "must be at least 1".into());
        }
        if self.model.hidden == 0 {
            return fail("model.hidden", "must be positive".into());
        }
        if self.merge.kind.is_empty() {
            return fail("merge.kind", "needs at least one scheme".into());
        }
        if !(0.0..=1.0).contains(&self.merge.trim_fraction) || self.merge.trim_fraction == 0.0 {
            return fail("merge.trim_fraction", format!("{} outside (0, 1]", self.merge.trim_fraction));
        }
        if self.objective.kind.is_empty() {
            return fail("objective.kind", "needs at least one method".into());
        }
        if self.mode == Mode::Validity
            && !matches!(self.objective.kind[0], Method::TrainRisk | Method::PacBayesUpper)
        {
            return fail("objective.kind", "validity trials take train_risk or pac_bayes_upper".into());
        }
        if let Some(p) = self.cma.popsize.filter(|&p| p < 4) {
            return fail("cma.popsize", format!("{p} below 4"));
        }
        if self.cma.sigma0 <= 0.0 || !self.cma.sigma0.is_finite() {
            return fail("cma.sigma0", format!("{} must be positive", self.cma.sigma0));
        }
        if self.cma.max_evals == 0 {
            return fail("cma.max_evals", "must be at least 1".into());
        }
        if !(self.ddp.split > 0.0 && self.ddp.split < 1.0) {
            return fail("ddp.split", format!("{} outside (0, 1)", self.ddp.split));
        }
        if let Some(&g) = self.discrete.grid_size.iter().find(|&&g| g < 2) {
            return fail("discrete.grid_size", format!("{g} below 2"));
        }
        if self.discrete.grid_size.is_empty() {
            return fail("discrete.grid_size", "needs at least one grid".into());
        }
        if self.validity.trials == 0 || self.validity.population_size == 0 {
            return fail("validity", "trials and population_size must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (sorted keys, output directory
    /// blanked), hex encoded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model_spec(&self) -> Result<MlpSpec> {
        MlpSpec::new(
            vec![self.tasks.input_dim, self.model.hidden, self.tasks.class_count],
            self.model.activation,
        )
    }

    /// Certification settings for held-out target `t`.
    pub fn certify_config(&self, t: usize) -> CertifyConfig {
        CertifyConfig {
            prior_variance: self.prior.variance,
            posterior_variance: self.posterior.variance,
            mc_samples: self.posterior.mc_samples,
            mc_seed: seed::derive(self.seed, &[seed::tag("mc"), t as u64]),
            delta: self.delta,
            cma: CmaConfig {
                seed: seed::derive(self.seed, &[seed::tag("cma"), self.cma.seed, t as u64]),
                ..self.cma.clone()
            },
            test_set_form: self.test_set_form,
            config_hash: self.hash(),
        }
    }

    pub fn ddp_config(&self, t: usize) -> DdpConfig {
        DdpConfig {
            split_seed: seed::derive(self.seed, &[seed::tag("split"), self.ddp.split_seed, t as u64]),
            ..self.ddp.clone()
        }
    }

    pub fn max_n(&self) -> usize {
        self.n.iter().copied().max().unwrap_or(0)
    }
}
