//! End-to-end toy recipes: world, two-stage training and evaluation with
//! settings small enough for a laptop CPU.

use serde::{Deserialize, Serialize};

use crate::corpus::{ConversationParams, FtoDistribution};
use crate::error::Result;
use crate::grid::LossWeights;
use crate::model::{
    adapt_to_variant, train_stage1, train_stage2, LossLog, OptimConfig, Params, Stage1Data, Stage1Mixture, Stage2Data,
    Stage2Mixture, TrainReport, Variant,
};
use crate::pipeline::{World, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Recipe {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Stage-1 pool size per unit of mixture weight.
    pub stage1_pool: usize,
    pub stage2_pool: usize,
    pub seed: u64,
}

impl Default for Recipe {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            stage1_steps: 1500,
            stage2_steps: 3000,
            batch_size: 4,
            lr: 3e-3,
            stage1_pool: 200,
            stage2_pool: 8000,
            seed: 7,
        }
    }
}

/// Short two-turn conversations with a narrow reply offset.
pub fn toy_world_config() -> WorldConfig {
    WorldConfig {
        conversation: ConversationParams {
            n_turns: 2,
            min_words: 2,
            max_words: 4,
            backchannel_rate: 0.1,
            overlap_rate: 0.05,
            fto: FtoDistribution::Uniform { median: 1.4, width: 0.6 },
            lead_in_jitter: 4.0,
            tail: 2.5,
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn optim(recipe: &Recipe, steps: usize) -> OptimConfig {
    OptimConfig {
        steps,
        batch_size: recipe.batch_size,
        lr: recipe.lr,
        warmup_steps: (steps / 10).clamp(1, 100),
        ..OptimConfig::default()
    }
}

/// Data shared by the runs of one comparison.
pub struct Pools {
    pub stage1: Stage1Data,
    pub stage2: Stage2Data,
}

pub fn pools(world: &World, recipe: &Recipe) -> Result<Pools> {
    Ok(Pools {
        stage1: world.stage1_data(recipe.stage1_pool, recipe.seed ^ 0x51)?,
        stage2: world.stage2_data(recipe.stage2_pool, recipe.seed ^ 0x52)?,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub stage1: Option<TrainReport>,
    pub stage2: TrainReport,
    pub log: LossLog,
}

/// Stage 1 (unless `stage1` is false, in which case stage 2 gets its steps
/// too), then stage 2 for `variant`.
pub fn train_two_stage(
    world: &World,
    recipe: &Recipe,
    data: &Pools,
    variant: Variant,
    mixture: &Stage2Mixture,
    stage1: bool,
) -> Result<(Params<f32>, RunReport)> {
    let weights = LossWeights::default();
    let mut log = LossLog::default();
    let init = Params::init(&world.model_config(recipe.d_model, recipe.n_layers, recipe.n_heads, Variant::Dual), recipe.seed)?;
    let (base, s1, s2_steps) = if stage1 {
        let (p, r) = train_stage1(
            init,
            &data.stage1,
            &Stage1Mixture::default(),
            &optim(recipe, recipe.stage1_steps),
            &weights,
            recipe.seed,
            &mut log,
        )?;
        (p, Some(r), recipe.stage2_steps)
    } else {
        (init, None, recipe.stage1_steps + recipe.stage2_steps)
    };
    let p = adapt_to_variant(&base, variant, recipe.seed ^ 0xAD)?;
    let (p, r2) = train_stage2(p, &data.stage2, mixture, &optim(recipe, s2_steps), &weights, recipe.seed ^ 2, &mut log)?;
    Ok((p, RunReport { stage1: s1, stage2: r2, log }))
}
