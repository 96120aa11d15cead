//! Small causal multi-stream transformer: fused frame embeddings, one or two
//! output heads, exact backpropagation, cached streaming inference and the
//! two-stage training recipe.

mod checkpoint;
mod config;
mod decode;
mod forward;
mod kernels;
mod loss;
mod optim;
mod params;
mod real;
mod sequence;
mod stream;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, LossLog, LossRecord};
pub use config::{HeadSpec, ModelConfig, Variant};
pub use decode::{decode_greedy, decode_sample, decode_sample_with, softmax};
pub use forward::{backward, forward_sequence, Forward, Logits};
pub use loss::{weighted_ce_loss, LossOutput};
pub use optim::{AdamW, OptimConfig};
pub use params::{Layout, Params, Tensor};
pub use real::Real;
pub use sequence::{shift_history, FrameInput, Sequence, Targets};
pub use stream::{embed_step, step_with_cache, DecodeCache, StepActivation};
pub use train::{
    adapt_to_variant, evaluate_loss, stage1_eval_pair, stage1_target_tokens, train_stage1, train_stage2, Modality,
    Stage1Data, Stage1Mixture, Stage2Data, Stage2Mixture, Stage2Sample, TrainReport,
};

#[cfg(test)]
mod tests;
