use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::LossLog;
use super::config::{ModelConfig, Variant};
use super::forward::{backward, forward_sequence};
use super::loss::weighted_ce_loss;
use super::optim::{AdamW, OptimConfig};
use super::params::Params;
use super::sequence::{shift_history, Sequence, Targets};
use crate::error::{Error, Result};
use crate::frontend::{AcousticTokenGrid, VisualFeatureGrid};
use crate::grid::{
    strip_sot, AlignedTargetStreams, LossWeights, Stage1Example, Stage1Task, TokenId, UnifiedTargetStream, NULL, SOT,
};

/// Which input modalities a sample exposes; the other is replaced by NULL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "a")]
    Audio,
    #[serde(rename = "v")]
    Visual,
    #[serde(rename = "av")]
    AudioVisual,
}

impl std::str::FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Modality::Audio),
            "v" => Ok(Modality::Visual),
            "av" => Ok(Modality::AudioVisual),
            _ => Err(Error::Validation(format!("unknown modality '{s}' (a|v|av)"))),
        }
    }
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "a",
            Modality::Visual => "v",
            Modality::AudioVisual => "av",
        }
    }

    pub fn mask(self, audio: &AcousticTokenGrid, visual: &VisualFeatureGrid) -> (AcousticTokenGrid, VisualFeatureGrid) {
        match self {
            Modality::Audio => (audio.clone(), visual.nulled()),
            Modality::Visual => (audio.nulled(), visual.clone()),
            Modality::AudioVisual => (audio.clone(), visual.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Mixture {
    pub text: f64,
    pub asr: f64,
    pub caption: f64,
    pub avsr: f64,
}

impl Default for Stage1Mixture {
    fn default() -> Self {
        Self { text: 0.48, asr: 0.32, caption: 0.04, avsr: 0.16 }
    }
}

impl Stage1Mixture {
    pub fn validate(&self) -> Result<()> {
        let w = [self.text, self.asr, self.caption, self.avsr];
        if w.iter().any(|&x| x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("stage-1 mixture must sum to 1, got {w:?}")));
        }
        Ok(())
    }

    /// Draws a task.
    pub fn sample<G: Rng>(&self, rng: &mut G) -> Stage1Task {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (task, p) in [
            (Stage1Task::Text, self.text),
            (Stage1Task::Asr, self.asr),
            (Stage1Task::Caption, self.caption),
            (Stage1Task::Avsr, self.avsr),
        ] {
            acc += p;
            if u < acc {
                return task;
            }
        }
        Stage1Task::Avsr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Mixture {
    pub audio_only: f64,
    pub audio_visual: f64,
}

impl Default for Stage2Mixture {
    fn default() -> Self {
        Self { audio_only: 0.55, audio_visual: 0.45 }
    }
}

impl Stage2Mixture {
    pub fn audio_only() -> Self {
        Self { audio_only: 1.0, audio_visual: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.audio_only < 0.0 || self.audio_visual < 0.0 || (self.audio_only + self.audio_visual - 1.0).abs() > 1e-9 {
            return Err(Error::Config("stage-2 mixture must sum to 1".into()));
        }
        Ok(())
    }

    pub fn sample<G: Rng>(&self, rng: &mut G) -> Modality {
        if rng.gen::<f64>() < self.audio_only {
            Modality::Audio
        } else {
            Modality::AudioVisual
        }
    }
}

/// Stage-1 examples grouped by task.
#[derive(Debug, Clone, Default)]
pub struct Stage1Data {
    pub text: Vec<Stage1Example>,
    pub asr: Vec<Stage1Example>,
    pub caption: Vec<Stage1Example>,
    pub avsr: Vec<Stage1Example>,
}

impl Stage1Data {
    pub fn of(&self, task: Stage1Task) -> &[Stage1Example] {
        match task {
            Stage1Task::Text => &self.text,
            Stage1Task::Asr => &self.asr,
            Stage1Task::Caption => &self.caption,
            Stage1Task::Avsr => &self.avsr,
        }
    }
}

/// One conversation side prepared for stage 2: corrupted audio tokens, clean
/// visual features of the user, and both target layouts.
#[derive(Debug, Clone)]
pub struct Stage2Sample {
    pub id: String,
    pub user_side: usize,
    pub audio: AcousticTokenGrid,
    pub visual: VisualFeatureGrid,
    pub dual: AlignedTargetStreams,
    pub unified: UnifiedTargetStream,
}

impl Stage2Sample {
    /// Teacher-forced inputs and targets for `variant` under `modality`.
    pub fn training_pair(&self, variant: Variant, modality: Modality) -> (Sequence, Targets) {
        let (audio, visual) = modality.mask(&self.audio, &self.visual);
        match variant {
            Variant::Dual => (
                Sequence::teacher_forced(audio, visual, &self.dual.u, Some(&self.dual.t)),
                Targets { streams: vec![self.dual.u.clone(), self.dual.t.clone()] },
            ),
            Variant::Unified | Variant::UnifiedNoSot => {
                let r = if variant == Variant::UnifiedNoSot { strip_sot(&self.unified).r } else { self.unified.r.clone() };
                let n = r.len();
                (
                    Sequence { audio, visual, u_prev: shift_history(&r), t_prev: vec![NULL; n] },
                    Targets { streams: vec![r] },
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Stage2Data {
    pub samples: Vec<Stage2Sample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub steps: usize,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self, window: usize) -> Option<f64> {
        if self.losses.is_empty() {
            return None;
        }
        let tail = &self.losses[self.losses.len().saturating_sub(window)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

fn stage1_pair(params: &Params<f32>, ex: &Stage1Example) -> (Sequence, Targets) {
    let n = ex.frames();
    let seq = Sequence::teacher_forced(ex.audio.clone(), ex.visual.clone(), &ex.target, None);
    let streams = if params.heads.len() == 2 { vec![ex.target.clone(), vec![NULL; n]] } else { vec![ex.target.clone()] };
    (seq, Targets { streams })
}

/// Forward, loss and backward over a batch; returns the mean loss.
fn batch_step(
    params: &mut Params<f32>,
    opt: &mut AdamW,
    batch: &[(Sequence, Targets)],
    weights: &LossWeights,
    per_sample: &mut Vec<f64>,
) -> Result<f64> {
    let mut grads = params.zeros_like();
    let scale = 1.0 / batch.len() as f32;
    let mut total = 0.0;
    per_sample.clear();
    for (seq, tg) in batch {
        let fwd = forward_sequence(params, seq)?;
        let mut out = weighted_ce_loss(&params.heads, &fwd.logits, tg, weights)?;
        if !out.loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {}", out.loss)));
        }
        out.dlogits.iter_mut().flatten().for_each(|g| *g *= scale);
        backward(params, seq, &fwd, &out.dlogits, &mut grads);
        total += out.loss;
        per_sample.push(out.loss);
    }
    opt.step(params, &grads);
    if !params.all_finite() {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    Ok(total / batch.len() as f64)
}

/// Multi-task stage 1. Each batch element draws its task from `mixture`.
pub fn train_stage1(
    mut params: Params<f32>,
    data: &Stage1Data,
    mixture: &Stage1Mixture,
    optim: &OptimConfig,
    weights: &LossWeights,
    seed: u64,
    log: &mut LossLog,
) -> Result<(Params<f32>, TrainReport)> {
    mixture.validate()?;
    optim.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = AdamW::new(optim.clone(), &params);
    let mut report = TrainReport::default();
    let mut per = Vec::new();
    for step in 0..optim.steps {
        let mut batch = Vec::with_capacity(optim.batch_size);
        let mut tasks = Vec::with_capacity(optim.batch_size);
        while batch.len() < optim.batch_size {
            let task = mixture.sample(&mut rng);
            let pool = data.of(task);
            if pool.is_empty() {
                return Err(Error::Data(format!("no stage-1 examples for task {}", task.name())));
            }
            let ex = &pool[rng.gen_range(0..pool.len())];
            batch.push(stage1_pair(&params, ex));
            tasks.push(task);
        }
        let loss = batch_step(&mut params, &mut opt, &batch, weights, &mut per)?;
        for (task, l) in tasks.iter().zip(&per) {
            log.push(step, task.name(), *l);
        }
        report.losses.push(loss);
        if step % 50 == 0 {
            debug!("stage1 step {step}: loss {loss:.4}");
        }
    }
    report.steps = optim.steps;
    info!("stage1 done: {} steps, final loss {:?}", optim.steps, report.final_loss(20));
    Ok((params, report))
}

/// Copies a checkpoint into the layout of `variant`. A unified head starts
/// from the stage-1 text head.
pub fn adapt_to_variant(src: &Params<f32>, variant: Variant, seed: u64) -> Result<Params<f32>> {
    let cfg = ModelConfig { variant, ..src.config.clone() };
    let mut p = Params::init(&cfg, seed)?;
    p.load_matching(src);
    if variant.is_unified() {
        for part in ["w", "b"] {
            if let (Some(to), Some(from)) = (p.find(&format!("head.r.{part}")), src.find(&format!("head.u.{part}"))) {
                if p.tensors[to].shape == src.tensors[from].shape {
                    let data = src.tensors[from].data.clone();
                    p.tensors[to].data = data;
                }
            }
        }
    }
    Ok(p)
}

/// Stage 2 on conversations. The variant is the one of `params`.
pub fn train_stage2(
    mut params: Params<f32>,
    data: &Stage2Data,
    mixture: &Stage2Mixture,
    optim: &OptimConfig,
    weights: &LossWeights,
    seed: u64,
    log: &mut LossLog,
) -> Result<(Params<f32>, TrainReport)> {
    mixture.validate()?;
    optim.validate()?;
    if data.samples.is_empty() && optim.steps > 0 {
        return Err(Error::Data("no stage-2 samples".into()));
    }
    let variant = params.config.variant;
    if variant == Variant::UnifiedNoSot {
        // precondition: the stripped targets must be free of turn tokens
        if let Some(s) = data.samples.iter().find(|s| strip_sot(&s.unified).r.contains(&SOT)) {
            return Err(Error::Validation(format!("{}: stripped targets still contain <SOT>", s.id)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = AdamW::new(optim.clone(), &params);
    let mut report = TrainReport::default();
    let mut per = Vec::new();
    for step in 0..optim.steps {
        let mut batch = Vec::with_capacity(optim.batch_size);
        let mut mods = Vec::with_capacity(optim.batch_size);
        for _ in 0..optim.batch_size {
            let s = &data.samples[rng.gen_range(0..data.samples.len())];
            let m = mixture.sample(&mut rng);
            batch.push(s.training_pair(variant, m));
            mods.push(m);
        }
        let loss = batch_step(&mut params, &mut opt, &batch, weights, &mut per)?;
        for (m, l) in mods.iter().zip(&per) {
            log.push(step, if *m == Modality::Audio { "conv-a" } else { "conv-av" }, *l);
        }
        report.losses.push(loss);
        if step % 50 == 0 {
            debug!("stage2 step {step}: loss {loss:.4}");
        }
    }
    report.steps = optim.steps;
    info!("stage2 done: {} steps, final loss {:?}", optim.steps, report.final_loss(20));
    Ok((params, report))
}

/// Teacher-forced mean loss per stream over `pairs` (held-out evaluation).
pub fn evaluate_loss(params: &Params<f32>, pairs: &[(Sequence, Targets)], weights: &LossWeights) -> Result<Vec<Option<f64>>> {
    let mut sums = vec![(0.0, 0usize); params.heads.len()];
    for (seq, tg) in pairs {
        let fwd = forward_sequence(params, seq)?;
        let out = weighted_ce_loss(&params.heads, &fwd.logits, tg, weights)?;
        for (s, l) in sums.iter_mut().zip(&out.per_stream) {
            if let Some(l) = l {
                s.0 += l;
                s.1 += 1;
            }
        }
    }
    Ok(sums.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect())
}

/// Token-level targets of a stage-1 example, for tests and reports.
pub fn stage1_target_tokens(ex: &Stage1Example) -> Vec<TokenId> {
    ex.target.iter().copied().filter(|&t| t != NULL).collect()
}

/// Stage-1 pair for held-out evaluation.
pub fn stage1_eval_pair(params: &Params<f32>, ex: &Stage1Example) -> (Sequence, Targets) {
    stage1_pair(params, ex)
}
