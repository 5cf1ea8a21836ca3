//! Gaussian-mixture classification tasks with tunable shared structure.
//!
//! Task `t`'s class-`c` mean is
//! `sqrt(r) * shared_c + sqrt(1 - r) * (sqrt(a) * cluster_{g,c} + sqrt(1 - a) * own_{t,c})`
//! where `r` is the family's relatedness, `g` the cluster of `t` and `a` the
//! cluster affinity. At `r = 1` every task has the same means; at `r = 0`
//! tasks in different clusters are drawn independently.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskFamily {
    /// Number of tasks, including every task that will later be held out.
    pub count: usize,
    pub input_dim: usize,
    pub class_count: usize,
    pub relatedness: f64,
    pub noise_scale: f64,
    /// Expected norm of a class mean.
    pub mean_scale: f64,
    /// Consecutive tasks grouped into one cluster; 1 disables clustering.
    pub cluster_size: usize,
    pub cluster_affinity: f64,
}

impl Default for TaskFamily {
    fn default() -> Self {
        Self {
            count: 8,
            input_dim: 8,
            class_count: 4,
            relatedness: 0.0,
            noise_scale: 1.0,
            mean_scale: 3.0,
            cluster_size: 2,
            cluster_affinity: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub task_id: String,
    pub input_dim: usize,
    pub class_count: usize,
    pub class_means: Vec<Vec<f64>>,
    pub noise_scale: f64,
    /// Keys every set drawn from this task.
    pub seed: u64,
}

/// Labeled points stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(dim: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || inputs.len() != dim * labels.len() {
            return Err(Error::Structure(format!(
                "{} input values for {} labels of dimension {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self { dim, inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.inputs.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        LabeledSet {
            dim: self.dim,
            inputs,
            labels,
        }
    }

    /// The same points with labels replaced.
    pub fn relabeled(&self, labels: Vec<usize>) -> Result<LabeledSet> {
        LabeledSet::new(self.dim, self.inputs.clone(), labels)
    }

    pub fn concat(sets: &[&LabeledSet]) -> Result<LabeledSet> {
        let dim = sets
            .first()
            .map(|s| s.dim)
            .ok_or_else(|| Error::Domain("cannot concatenate zero sets".into()))?;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for s in sets {
            if s.dim != dim {
                return Err(Error::Structure("input dimensions differ".into()));
            }
            inputs.extend_from_slice(&s.inputs);
            labels.extend_from_slice(&s.labels);
        }
        LabeledSet::new(dim, inputs, labels)
    }
}

fn gaussian_vec(rng: &mut impl Rng, dim: usize, std: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn gen_tasks(seed: u64, family: &TaskFamily) -> Result<Vec<SyntheticTask>> {
    if !(0.0..=1.0).contains(&family.relatedness) {
        return Err(Error::Domain(format!(
            "relatedness {} outside [0, 1]",
            family.relatedness
        )));
    }
    if !(0.0..=1.0).contains(&family.cluster_affinity) {
        return Err(Error::Domain(format!(
            "cluster affinity {} outside [0, 1]",
            family.cluster_affinity
        )));
    }
    if family.cluster_size == 0 {
        return Err(Error::Domain("cluster size must be at least 1".into()));
    }
    if family.count < 2 {
        return Err(Error::Domain("need at least two tasks".into()));
    }
    if family.class_count < 2 || family.input_dim == 0 {
        return Err(Error::Domain("need >= 2 classes and a positive input dimension".into()));
    }
    if family.noise_scale.is_nan() || family.mean_scale.is_nan() || family.noise_scale <= 0.0 || family.mean_scale <= 0.0 {
        return Err(Error::Domain("noise_scale and mean_scale must be positive".into()));
    }

    let std = family.mean_scale / (family.input_dim as f64).sqrt();
    let mut shared_rng = seed::rng(seed, &[seed::tag("shared-means")]);
    let shared: Vec<Vec<f64>> = (0..family.class_count)
        .map(|_| gaussian_vec(&mut shared_rng, family.input_dim, std))
        .collect();

    let (ws, wo) = (family.relatedness.sqrt(), (1.0 - family.relatedness).sqrt());
    let (wc, wi) = (family.cluster_affinity.sqrt(), (1.0 - family.cluster_affinity).sqrt());
    let mut tasks = Vec::with_capacity(family.count);
    for t in 0..family.count {
        let g = t / family.cluster_size;
        let mut cluster_rng = seed::rng(seed, &[seed::tag("cluster-means"), g as u64]);
        let mut own_rng = seed::rng(seed, &[seed::tag("own-means"), t as u64]);
        let class_means: Vec<Vec<f64>> = shared
            .iter()
            .map(|s| {
                let cluster = gaussian_vec(&mut cluster_rng, family.input_dim, std);
                let own = gaussian_vec(&mut own_rng, family.input_dim, std);
                s.iter()
                    .zip(cluster.iter().zip(&own))
                    .map(|(a, (c, o))| ws * a + wo * (wc * c + wi * o))
                    .collect()
            })
            .collect();
        for i in 0..class_means.len() {
            for j in 0..i {
                if class_means[i] == class_means[j] {
                    return Err(Error::Domain(format!("task {t}: classes {i} and {j} coincide")));
                }
            }
        }
        tasks.push(SyntheticTask {
            task_id: format!("task{t}"),
            input_dim: family.input_dim,
            class_count: family.class_count,
            class_means,
            noise_scale: family.noise_scale,
            seed: seed::derive(seed, &[seed::tag("task-stream"), t as u64]),
        });
    }
    Ok(tasks)
}

/// Draws `n` i.i.d. points: uniform label, then the class mean plus isotropic
/// Gaussian noise.
pub fn sample_set(task: &SyntheticTask, n: usize, seed: u64) -> Result<LabeledSet> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let mut rng = seed::rng(task.seed, &[seed]);
    let mut inputs = Vec::with_capacity(n * task.input_dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random_range(0..task.class_count);
        for &m in &task.class_means[y] {
            inputs.push(m + task.noise_scale * rng.sample::<f64, _>(StandardNormal));
        }
        labels.push(y);
    }
    LabeledSet::new(task.input_dim, inputs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(relatedness: f64) -> TaskFamily {
        TaskFamily {
            relatedness,
            ..TaskFamily::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_tasks(11, &family(0.5)).unwrap(), gen_tasks(11, &family(0.5)).unwrap());
        assert_ne!(gen_tasks(11, &family(0.5)).unwrap(), gen_tasks(12, &family(0.5)).unwrap());
    }

    #[test]
    fn full_relatedness_shares_means() {
        let tasks = gen_tasks(3, &family(1.0)).unwrap();
        for t in &tasks[1..] {
            assert_eq!(t.class_means, tasks[0].class_means);
        }
    }

    #[test]
    fn relatedness_out_of_range_is_rejected() {
        assert!(matches!(gen_tasks(0, &family(1.5)), Err(Error::Domain(_))));
        assert!(matches!(gen_tasks(0, &family(-0.1)), Err(Error::Domain(_))));
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn zero_relatedness_means_are_uncorrelated() {
        // Monte-Carlo oracle: cosine similarity of two independent isotropic
        // vectors in d dims has mean 0 and std 1/sqrt(d).
        let fam = TaskFamily {
            count: 2,
            input_dim: 16,
            relatedness: 0.0,
            cluster_size: 1,
            ..TaskFamily::default()
        };
        let draws = 100;
        let mut sum = 0.0;
        for s in 0..draws {
            let tasks = gen_tasks(s, &fam).unwrap();
            sum += cosine(&tasks[0].class_means[0], &tasks[1].class_means[0]);
        }
        let mean = sum / draws as f64;
        let se = 1.0 / (16.0f64).sqrt() / (draws as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean cosine {mean}");
    }

    #[test]
    fn cluster_mates_share_structure() {
        let fam = TaskFamily {
            count: 4,
            input_dim: 64,
            relatedness: 0.0,
            cluster_affinity: 0.9,
            ..TaskFamily::default()
        };
        let tasks = gen_tasks(3, &fam).unwrap();
        let mates = cosine(&tasks[0].class_means[1], &tasks[1].class_means[1]);
        let strangers = cosine(&tasks[0].class_means[1], &tasks[2].class_means[1]);
        // expected 0.9 and 0 with std about 1/8
        assert!(mates > 0.6, "{mates}");
        assert!(strangers.abs() < 0.4, "{strangers}");
        assert!(gen_tasks(3, &TaskFamily { cluster_size: 0, ..fam.clone() }).is_err());
        assert!(gen_tasks(3, &TaskFamily { cluster_affinity: 1.5, ..fam }).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let task = &gen_tasks(5, &family(0.5)).unwrap()[0];
        assert!(matches!(sample_set(task, 0, 1), Err(Error::Domain(_))));
        let a = sample_set(task, 100, 9).unwrap();
        assert_eq!(a, sample_set(task, 100, 9).unwrap());
        assert_ne!(a, sample_set(task, 100, 10).unwrap());
        assert_eq!(a.len(), 100);
        assert!(a.labels().iter().all(|&y| y < task.class_count));
    }

    #[test]
    fn class_frequencies_are_uniform() {
        let task = &gen_tasks(5, &family(0.5)).unwrap()[1];
        let n = 10_000;
        let set = sample_set(task, n, 77).unwrap();
        let p = 1.0 / task.class_count as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in 0..task.class_count {
            let count = set.labels().iter().filter(|&&y| y == c).count() as f64;
            assert!((count - n as f64 * p).abs() < 3.0 * sigma, "class {c}: {count}");
        }
    }

    #[test]
    fn subset_and_concat() {
        let task = &gen_tasks(5, &family(0.5)).unwrap()[0];
        let set = sample_set(task, 10, 1).unwrap();
        let a = set.subset(&[0, 1, 2]);
        let b = set.subset(&[3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(LabeledSet::concat(&[&a, &b]).unwrap(), set);
    }
}
