use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, Mode};
use super::report::{report, ReportFormat};
use crate::bounds::CertificateRecord;
use crate::certify::{
    certify, certify_ddp, certify_ddp_and_half_val, certify_discrete, certify_half_val,
    ObjectiveKind, Target,
};
use crate::error::{Error, Result};
use crate::merging::{MergeKind, MergeScheme};
use crate::param_space::ModelPool;
use crate::posterior::{fresh_draw_risk, CoeffDist, GaussianSpec};
use crate::seed;
use crate::toy_zoo::{build_pool, gen_tasks, sample_set, LabeledSet, MlpSpec, SyntheticTask};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub config_hash: String,
    pub tool_version: String,
    pub wall_time_secs: f64,
    pub records: Vec<CertificateRecord>,
}

impl RunRecord {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Tasks, classifier shape and the full source pool of one configuration.
pub struct Fixture {
    pub tasks: Vec<SyntheticTask>,
    pub model: MlpSpec,
    pub pool: Arc<ModelPool>,
}

pub fn pool_dir(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join("pools").join(&config.hash()[..16])
}

fn build_fixture(config: &ExperimentConfig) -> Result<Fixture> {
    let tasks = gen_tasks(seed::derive(config.seed, &[seed::tag("tasks")]), &config.tasks)?;
    let model = config.model_spec()?;
    let pool = build_pool(&tasks, &model, &config.pool, seed::derive(config.seed, &[seed::tag("pool")]))?;
    Ok(Fixture { tasks, model, pool: Arc::new(pool) })
}

/// Builds the fixture, reusing the pool cached for this exact config hash
/// when one is on disk.
pub fn prepare(config: &ExperimentConfig) -> Result<Fixture> {
    let dir = pool_dir(config);
    if dir.exists() {
        if let Ok(pool) = ModelPool::load(&dir) {
            let tasks = gen_tasks(seed::derive(config.seed, &[seed::tag("tasks")]), &config.tasks)?;
            return Ok(Fixture { tasks, model: config.model_spec()?, pool: Arc::new(pool) });
        }
    }
    let fixture = build_fixture(config)?;
    fixture.pool.save(&dir)?;
    Ok(fixture)
}

/// Builds and caches the pool, returning its directory.
pub fn gen_pool(config: &ExperimentConfig) -> Result<PathBuf> {
    config.validate()?;
    prepare(config)?;
    Ok(pool_dir(config))
}

struct HeldOut {
    task_id: String,
    pool: Arc<ModelPool>,
    support: LabeledSet,
    query: LabeledSet,
}

impl HeldOut {
    fn new(fixture: &Fixture, config: &ExperimentConfig, t: usize) -> Result<Self> {
        let task = &fixture.tasks[t];
        Ok(Self {
            task_id: task.task_id.clone(),
            pool: Arc::new(fixture.pool.without(&task.task_id)?),
            // prefixes of one stream, so larger n extends smaller n
            support: sample_set(task, config.max_n(), seed::derive(config.seed, &[seed::tag("support")]))?,
            query: sample_set(task, config.query_size, seed::derive(config.seed, &[seed::tag("query")]))?,
        })
    }

    fn support(&self, n: usize) -> LabeledSet {
        self.support.subset(&(0..n).collect::<Vec<_>>())
    }

    fn scheme(&self, kind: MergeKind, config: &ExperimentConfig) -> Result<MergeScheme> {
        MergeScheme::new(kind, self.pool.clone(), config.merge.trim_fraction)
    }
}

fn grid_records(config: &ExperimentConfig, fixture: &Fixture, t: usize) -> Result<Vec<CertificateRecord>> {
    let held = HeldOut::new(fixture, config, t)?;
    let cfg = config.certify_config(t);
    let ddp = config.ddp_config(t);
    let model = &fixture.model;
    let mut out = Vec::new();
    for &n in &config.n {
        let support = held.support(n);
        let target = Target { task: &held.task_id, support: &support, query: Some(&held.query) };
        for &method in &config.objective.kind {
            if method == Method::Discrete {
                for &g in &config.discrete.grid_size {
                    out.push(certify_discrete(target, held.pool.clone(), model, g, &cfg)?);
                }
                continue;
            }
            for &kind in &config.merge.kind {
                let scheme = held.scheme(kind, config)?;
                out.push(match method {
                    Method::TrainRisk => certify(target, &scheme, model, ObjectiveKind::TrainRisk, &cfg)?,
                    Method::PacBayesUpper => {
                        certify(target, &scheme, model, ObjectiveKind::PacBayesUpper, &cfg)?
                    }
                    Method::Ddp => certify_ddp(target, &scheme, model, &ddp, &cfg)?,
                    Method::HalfVal => certify_half_val(target, &scheme, model, &ddp, &cfg)?,
                    Method::Discrete => unreachable!(),
                });
            }
        }
    }
    Ok(out)
}

fn sweep_records(
    config: &ExperimentConfig,
    fixture: &Fixture,
    t: usize,
    n_list: &[usize],
) -> Result<Vec<CertificateRecord>> {
    let held = HeldOut::new(fixture, config, t)?;
    let cfg = config.certify_config(t);
    let ddp = config.ddp_config(t);
    let mut out = Vec::new();
    for &n in n_list {
        let support = held.support(n);
        let target = Target { task: &held.task_id, support: &support, query: Some(&held.query) };
        for &kind in &config.merge.kind {
            let scheme = held.scheme(kind, config)?;
            let (d, h) = certify_ddp_and_half_val(target, &scheme, &fixture.model, &ddp, &cfg)?;
            out.push(d);
            out.push(h);
            out.push(certify(target, &scheme, &fixture.model, ObjectiveKind::PacBayesUpper, &cfg)?);
        }
    }
    Ok(out)
}

fn per_target<F>(config: &ExperimentConfig, f: F) -> Result<Vec<CertificateRecord>>
where
    F: Fn(usize) -> Result<Vec<CertificateRecord>> + Sync + Send,
{
    let chunks: Vec<Vec<CertificateRecord>> =
        (0..config.targets).into_par_iter().map(f).collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn finish(config: &ExperimentConfig, started: Instant, records: Vec<CertificateRecord>) -> RunRecord {
    RunRecord {
        scenario: config.scenario.clone(),
        config_hash: config.hash(),
        tool_version: TOOL_VERSION.into(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        records,
    }
}

/// Computes every certificate the config asks for, without writing results.
pub fn execute(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    match config.mode {
        Mode::Grid => {
            let started = Instant::now();
            let fixture = prepare(config)?;
            let records = per_target(config, |t| grid_records(config, &fixture, t))?;
            Ok(finish(config, started, records))
        }
        Mode::Sweep => sweep_n(config, &config.n),
        Mode::Validity => validity_trial(config),
    }
}

/// DDP, half-validation and full-data bound-optimized certificates for each
/// support size in `n_list`.
pub fn sweep_n(config: &ExperimentConfig, n_list: &[usize]) -> Result<RunRecord> {
    config.validate()?;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("n", "sweep sizes must be non-empty and strictly ascending"));
    }
    if let Some(&bad) = n_list.iter().find(|&&n| n < 4) {
        return Err(Error::config("n", format!("sweep size {bad} below 4")));
    }
    let started = Instant::now();
    let config = &ExperimentConfig { n: n_list.to_vec(), ..config.clone() };
    let fixture = prepare(config)?;
    let records = per_target(config, |t| sweep_records(config, &fixture, t, n_list))?;
    Ok(finish(config, started, records))
}

/// Each trial certifies a fresh support set and stores the population risk
/// of the randomized classifier, estimated on `population_size` fresh points,
/// as the record's test error.
pub fn validity_trial(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let started = Instant::now();
    let fixture = prepare(config)?;
    let kind = match config.objective.kind[0] {
        Method::TrainRisk => ObjectiveKind::TrainRisk,
        _ => ObjectiveKind::PacBayesUpper,
    };
    let n = config.n[0];
    let records: Vec<CertificateRecord> = (0..config.validity.trials)
        .into_par_iter()
        .map(|i| {
            let t = i % config.targets;
            let task = &fixture.tasks[t];
            let pool = Arc::new(fixture.pool.without(&task.task_id)?);
            let scheme = MergeScheme::new(config.merge.kind[0], pool, config.merge.trim_fraction)?;
            let trial = i as u64;
            let support = sample_set(task, n, seed::derive(config.seed, &[seed::tag("trial-support"), trial]))?;
            let population = sample_set(
                task,
                config.validity.population_size,
                seed::derive(config.seed, &[seed::tag("trial-population"), trial]),
            )?;
            let cfg = config.certify_config(config.targets + i);
            let target = Target { task: &task.task_id, support: &support, query: None };
            let mut rec = certify(target, &scheme, &fixture.model, kind, &cfg)?;
            let q = CoeffDist::Gaussian(GaussianSpec::new(rec.phi.clone(), cfg.posterior_variance)?);
            let risk_seed = seed::derive(cfg.mc_seed, &[seed::tag("population")]);
            rec.test_error = Some(fresh_draw_risk(&q, &scheme, &fixture.model, &population, risk_seed)?);
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    Ok(finish(config, started, records))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValiditySummary {
    pub trials: usize,
    pub violations: usize,
    pub frequency: f64,
    /// `delta + 3 sqrt(delta (1 - delta) / trials)`.
    pub threshold: f64,
}

impl ValiditySummary {
    pub fn from_records(records: &[CertificateRecord], delta: f64) -> Self {
        let trials = records.len();
        let violations = records
            .iter()
            .filter(|r| r.test_error.is_some_and(|risk| risk > r.pb_bound))
            .count();
        Self {
            trials,
            violations,
            frequency: violations as f64 / trials.max(1) as f64,
            threshold: delta + 3.0 * (delta * (1.0 - delta) / trials.max(1) as f64).sqrt(),
        }
    }

    pub fn passed(&self) -> bool {
        self.frequency <= self.threshold
    }
}

/// Paths written by [`run`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutputs {
    pub record: RunRecord,
    pub json: PathBuf,
    pub csv: PathBuf,
}

/// Executes the config and writes `record.json` and `table.csv` under
/// `out_dir/<scenario>/`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutputs> {
    let record = execute(config)?;
    let dir = config.out_dir.join(&config.scenario);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let json = dir.join("record.json");
    let csv = dir.join("table.csv");
    report(&record, ReportFormat::Json, &json)?;
    report(&record, ReportFormat::Csv, &csv)?;
    Ok(RunOutputs { record, json, csv })
}
