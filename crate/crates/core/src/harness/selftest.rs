//! Quick oracle checks runnable from the command line.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::run::execute;
use crate::bounds::{bernoulli_kl, categorical_kl_uniform, gaussian_kl, invert_kl, seeger_certificate};
use crate::merging::MergeKind;
use crate::posterior::{CategoricalSpec, GaussianSpec};
use crate::seed;
use crate::toy_zoo::{gen_tasks, loss_and_grad, sample_set, MlpSpec, TaskFamily};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

fn table_arithmetic() -> Check {
    // (train, conventional upper bound, reported tightened bound) at n = 100
    let rows = [(0.508, 0.714, 0.704), (0.178, 0.444, 0.428), (0.570, 0.775, 0.757), (0.354, 0.560, 0.559)];
    let (n, delta) = (100.0f64, 0.05f64);
    let mut worst = 0.0f64;
    for (train, upper, pb) in rows {
        let kl = (upper - train) * (upper - train) * 2.0 * (n - 1.0) - (n / delta).ln();
        let got = seeger_certificate(train, kl.max(0.0), 100, delta).map(|c| c.pb_bound).unwrap_or(f64::NAN);
        worst = worst.max((got - pb).abs());
    }
    check("table arithmetic", worst <= 0.006, format!("max deviation {worst:.4}"))
}

fn bisect(p: f64, budget: f64) -> f64 {
    let (mut lo, mut hi) = (p, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bernoulli_kl(p, mid).unwrap_or(f64::INFINITY) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn inversion() -> Check {
    let mut worst = 0.0f64;
    for i in 0..20 {
        for j in 0..20 {
            let p = i as f64 / 20.0;
            let b = 0.001 + j as f64 * 0.25;
            let q = invert_kl(p, b).min(1.0);
            worst = worst.max((q - bisect(p, b).min(1.0)).abs());
        }
    }
    check("kl inversion", worst < 1e-6, format!("max deviation {worst:.2e}"))
}

fn kl_closed_forms() -> Check {
    let mut rng = seed::rng(99, &[]);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (mq, mp): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let (vq, vp): (f64, f64) = (rng.random_range(0.02..1.0), rng.random_range(0.02..1.0));
        let pdf = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let (lo, hi, steps) = (mq - 12.0 * vq.sqrt(), mq + 12.0 * vq.sqrt(), 20_000);
        let h = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for k in 0..=steps {
            let x = lo + k as f64 * h;
            let w = if k == 0 || k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let q = pdf(x, mq, vq);
            if q > 0.0 {
                integral += w * q * (q / pdf(x, mp, vp)).ln();
            }
        }
        integral *= h / 3.0;
        let closed = gaussian_kl(
            &GaussianSpec { mean: vec![mq], variance: vq },
            &GaussianSpec { mean: vec![mp], variance: vp },
        )
        .unwrap_or(f64::NAN);
        worst = worst.max((closed - integral).abs());
    }
    let delta_ok = [20usize, 40, 60, 80, 100].iter().all(|&m| {
        let mut probs = vec![0.0; m];
        probs[0] = 1.0;
        CategoricalSpec::new((0..m).map(|i| vec![i as f64]).collect(), probs)
            .map(|q| categorical_kl_uniform(&q) == (m as f64).ln())
            .unwrap_or(false)
    });
    check(
        "kl closed forms",
        worst < 1e-6 && delta_ok,
        format!("gaussian max deviation {worst:.2e}, delta posterior = ln M: {delta_ok}"),
    )
}

fn gradient() -> Check {
    let spec = MlpSpec::two_layer(8, 6, 4).expect("valid widths");
    let task = &gen_tasks(4, &TaskFamily::default()).expect("valid family")[0];
    let set = sample_set(task, 30, 2).expect("n > 0");
    let params: Vec<f64> = spec.init(1).values().iter().map(|&v| v as f64).collect();
    let idx: Vec<usize> = (0..set.len()).collect();
    let (_, grad) = loss_and_grad(&spec, &params, &set, &idx);
    let loss_at = |i: usize, off: f64| {
        let mut p = params.clone();
        p[i] += off;
        loss_and_grad(&spec, &p, &set, &idx).0
    };
    let h = 1e-3;
    let mut rng = seed::rng(5, &[]);
    let mut worst = 0.0f64;
    for &(start, len) in &spec.layout() {
        for _ in 0..20 {
            let i = start + rng.random_range(0..len);
            let numeric = (8.0 * (loss_at(i, h) - loss_at(i, -h)) - (loss_at(i, 2.0 * h) - loss_at(i, -2.0 * h))) / (12.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    check("gradient", worst < 1e-4, format!("max relative error {worst:.2e}"))
}

fn end_to_end() -> Check {
    let mut config = ExperimentConfig {
        scenario: "selftest".into(),
        targets: 2,
        query_size: 500,
        out_dir: std::env::temp_dir().join("pacmerge-selftest"),
        ..ExperimentConfig::default()
    };
    config.merge.kind = vec![MergeKind::TaskArith, MergeKind::TaskWiseAda];
    config.objective.kind = vec![Method::TrainRisk, Method::PacBayesUpper, Method::Ddp];
    config.cma.max_evals = 150;
    match execute(&config) {
        Ok(run) => {
            let bad: Vec<String> = run
                .records
                .iter()
                .filter_map(|r| r.revalidate(1e-9).err().map(|e| e.to_string()))
                .collect();
            check(
                "end to end",
                bad.is_empty() && run.records.len() == 12,
                format!("{} records, {} failed revalidation", run.records.len(), bad.len()),
            )
        }
        Err(e) => check("end to end", false, e.to_string()),
    }
}

pub fn selftest() -> SelftestReport {
    SelftestReport {
        checks: vec![table_arithmetic(), inversion(), kl_closed_forms(), gradient(), end_to_end()],
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        let report = super::selftest();
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
