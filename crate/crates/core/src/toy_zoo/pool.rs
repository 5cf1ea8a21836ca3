//! Builds the source-model pool: one base model trained on a mixture of every
//! task, then one fine-tuned copy per task.

use serde::{Deserialize, Serialize};

use super::mlp::MlpSpec;
use super::tasks::{sample_set, LabeledSet, SyntheticTask};
use super::train::{train, TrainHyper};
use crate::error::Result;
use crate::param_space::{ModelPool, TaskVector};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolRecipe {
    /// Points drawn from each task for the shared base model.
    pub pretrain_per_task: usize,
    pub finetune_per_task: usize,
    pub base: TrainHyper,
    pub finetune: TrainHyper,
}

impl Default for PoolRecipe {
    fn default() -> Self {
        Self {
            pretrain_per_task: 200,
            finetune_per_task: 400,
            base: TrainHyper { lr: 0.05, epochs: 2, batch: 32, seed: 1 },
            finetune: TrainHyper { lr: 0.02, epochs: 10, batch: 32, seed: 2 },
        }
    }
}

pub fn build_pool(
    tasks: &[SyntheticTask],
    spec: &MlpSpec,
    recipe: &PoolRecipe,
    seed: u64,
) -> Result<ModelPool> {
    let pretrain: Vec<LabeledSet> = tasks
        .iter()
        .map(|t| sample_set(t, recipe.pretrain_per_task, seed::derive(seed, &[seed::tag("pretrain")])))
        .collect::<Result<_>>()?;
    let mixture = LabeledSet::concat(&pretrain.iter().collect::<Vec<_>>())?;
    let base_hyper = TrainHyper {
        seed: seed::derive(seed, &[recipe.base.seed]),
        ..recipe.base.clone()
    };
    let base = train(spec, &spec.init(seed), &mixture, &base_hyper)?;

    let mut members = Vec::with_capacity(tasks.len());
    for (t, task) in tasks.iter().enumerate() {
        let set = sample_set(task, recipe.finetune_per_task, seed::derive(seed, &[seed::tag("finetune")]))?;
        let hyper = TrainHyper {
            seed: seed::derive(seed, &[recipe.finetune.seed, t as u64]),
            ..recipe.finetune.clone()
        };
        let tuned = train(spec, &base, &set, &hyper)?;
        members.push((task.task_id.clone(), TaskVector::between(&base, &tuned)?));
    }
    ModelPool::new(base, members)
}
