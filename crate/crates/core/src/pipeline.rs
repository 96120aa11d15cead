//! Glue from the synthetic world to model-ready samples: rendering,
//! corruption, tokenization and target construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    apply_mix, draw_training_spec, gen_conversation, gen_eval_condition, gen_utterance, synth_speech, AugmentConfig,
    Banks, Condition, ConversationParams, InterfererBank, Lexicon, MixSpec, NoiseBank, NoiseKind, SyntheticConversation,
    Waveform, WordRole,
};
use crate::error::{Error, Result};
use crate::frontend::{visual_encode, AcousticEncoder, AcousticTokenGrid, EncoderConfig, VisualFeatureGrid};
use crate::grid::{
    build_stage1_targets, build_stage2_dual_targets, build_unified_targets, FrameGrid, Stage1Example, Stage1Payload,
    Stage1Task, TokenId, TurnKind,
};
use crate::model::{ModelConfig, Stage1Data, Stage2Data, Stage2Sample, Variant};

/// Party whose speech the model transcribes. Side 0 opens every
/// conversation and side 1 answers it.
pub const USER_SIDE: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub sample_rate: u32,
    pub n_visemes: u8,
    pub recognition_delay: usize,
    pub conversation: ConversationParams,
    pub augment: AugmentConfig,
    pub encoder: EncoderConfig,
    pub noise_per_kind: usize,
    pub noise_seconds: f64,
    pub n_interferers: usize,
    /// Word count range of each competing-talker clip.
    pub interferer_words: (usize, usize),
    pub bank_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            sample_rate: crate::corpus::SAMPLE_RATE,
            n_visemes: 4,
            recognition_delay: 25,
            conversation: ConversationParams::default(),
            augment: AugmentConfig::default(),
            encoder: EncoderConfig::default(),
            noise_per_kind: 3,
            noise_seconds: 12.0,
            n_interferers: 12,
            interferer_words: (8, 16),
            bank_seed: 0xBA2C,
        }
    }
}

/// A side rendered to model inputs, with the ground truth it came from.
#[derive(Debug, Clone)]
pub struct RenderedSide {
    pub conversation: SyntheticConversation,
    pub user_side: usize,
    pub clean: Waveform,
    pub mix: MixSpec,
    pub audio: AcousticTokenGrid,
    pub visual: VisualFeatureGrid,
}

impl RenderedSide {
    /// User words of the side, as piece sequences.
    pub fn reference_words(&self) -> Vec<Vec<TokenId>> {
        self.conversation.sides[self.user_side].words.iter().map(|w| w.pieces.clone()).collect()
    }

    /// User turn ends that precede an agent turn, with the true offsets.
    pub fn turn_ends(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let opp = self.conversation.turn_opportunities(self.user_side)?;
        Ok((opp.iter().map(|o| o.user_end).collect(), opp.iter().map(|o| o.fto).collect()))
    }
}

/// Immutable synthetic world: lexicon, tokenizer and corruption banks.
pub struct World {
    pub config: WorldConfig,
    pub lexicon: Lexicon,
    pub grid: FrameGrid,
    pub encoder: AcousticEncoder,
    pub banks: Banks,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.augment.validate()?;
        config.encoder.validate()?;
        let lexicon = Lexicon::standard(config.n_visemes);
        let encoder = AcousticEncoder::new(&config.encoder, &lexicon, config.sample_rate)?;
        let noise = NoiseBank::new(config.bank_seed, config.noise_per_kind, config.noise_seconds, config.sample_rate)?;
        let interferers = InterfererBank::new(
            config.bank_seed ^ 0x1F,
            config.n_interferers,
            config.interferer_words,
            &lexicon,
            config.sample_rate,
        )?;
        Ok(Self {
            grid: FrameGrid::new(config.recognition_delay),
            lexicon,
            encoder,
            banks: Banks { noise, interferers },
            config,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.lexicon.vocab().len()
    }

    /// Model config sized for this world's vocabulary and tokenizer.
    pub fn model_config(&self, d_model: usize, n_layers: usize, n_heads: usize, variant: Variant) -> ModelConfig {
        let mut c = ModelConfig::small(self.vocab_size(), d_model, n_layers, n_heads);
        c.n_codebooks = self.config.encoder.codebooks;
        c.codebook_size = self.config.encoder.codebook_size;
        c.visual_dims = self.config.encoder.visual_dims;
        c.variant = variant;
        c
    }

    pub fn conversation(&self, seed: u64) -> Result<SyntheticConversation> {
        gen_conversation(seed, &self.config.conversation, &self.lexicon)
    }

    pub fn render_clean(&self, conv: &SyntheticConversation, side: usize) -> Waveform {
        let s = &conv.sides[side];
        synth_speech(s, &self.lexicon, s.voice_seed, conv.n_samples(self.config.sample_rate), self.config.sample_rate)
    }

    /// Renders a side, corrupts it per `mix` and extracts both grids. The
    /// visual grid comes from the clean script and never sees the mixture.
    pub fn render(&self, conv: &SyntheticConversation, side: usize, mix: &MixSpec) -> Result<RenderedSide> {
        let clean = self.render_clean(conv, side);
        let mixed = apply_mix(&clean, mix, &self.banks)?;
        let audio = self.encoder.tokenize(&mixed)?;
        let visual = visual_encode(&conv.sides[side], &clean, &self.lexicon, &self.config.encoder)?;
        let n = conv.horizon(&self.grid);
        if audio.frames() != n || visual.frames() != n {
            return Err(Error::LengthMismatch { what: "rendered grids", left: n, right: audio.frames() });
        }
        Ok(RenderedSide { conversation: conv.clone(), user_side: side, clean, mix: mix.clone(), audio, visual })
    }

    pub fn stage2_sample(&self, r: &RenderedSide) -> Result<Stage2Sample> {
        Ok(Stage2Sample {
            id: format!("{}#{}", r.conversation.id, r.user_side),
            user_side: r.user_side,
            audio: r.audio.clone(),
            visual: r.visual.clone(),
            dual: build_stage2_dual_targets(&r.conversation, r.user_side, &self.grid)?,
            unified: build_unified_targets(&r.conversation, r.user_side, &self.grid)?,
        })
    }

    /// `n` training conversations with augmentation drawn per sample.
    pub fn stage2_data(&self, n: usize, seed: u64) -> Result<Stage2Data> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let conv = self.conversation(rng.gen())?;
            let mix = draw_training_spec(&self.banks, &self.config.augment, &mut rng);
            samples.push(self.stage2_sample(&self.render(&conv, USER_SIDE, &mix)?)?);
        }
        Ok(Stage2Data { samples })
    }

    /// Held-out sides under a forced condition and SNR range.
    pub fn eval_set(&self, condition: Condition, snr: (f64, f64), n: usize, seed: u64) -> Result<Vec<RenderedSide>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let conv = self.conversation(rng.gen::<u64>() | 1 << 63)?;
            let mix = gen_eval_condition(condition, snr, &self.banks, &mut rng)?;
            out.push(self.render(&conv, USER_SIDE, &mix)?);
        }
        Ok(out)
    }

    /// Same conversations as `base`, re-mixed under another condition.
    pub fn remix(&self, base: &[RenderedSide], condition: Condition, snr: (f64, f64), seed: u64) -> Result<Vec<RenderedSide>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        base.iter()
            .map(|b| {
                let mix = gen_eval_condition(condition, snr, &self.banks, &mut rng)?;
                self.render(&b.conversation, b.user_side, &mix)
            })
            .collect()
    }

    fn example(&self, task: Stage1Task, payload: Stage1Payload) -> Result<Stage1Example> {
        let e = &self.config.encoder;
        build_stage1_targets(task, payload, e.codebooks, e.codebook_size, e.visual_dims)
    }

    /// Stage-1 pools: `n` examples per unit of mixture weight for each task
    /// (at least one each). AVSR audio is corrupted, ASR audio is clean.
    pub fn stage1_data(&self, n: usize, seed: u64) -> Result<Stage1Data> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Stage1Data::default();
        let words = (self.config.conversation.min_words, self.config.conversation.max_words);
        let per = |w: f64| ((n as f64 * w).round() as usize).max(1);
        let mix = crate::model::Stage1Mixture::default();
        for _ in 0..per(mix.text) {
            let conv = self.conversation(rng.gen())?;
            let tokens = text_continuation(&conv, &self.lexicon);
            data.text.push(self.example(Stage1Task::Text, Stage1Payload::Text { tokens })?);
        }
        for _ in 0..per(mix.asr) {
            let utt = gen_utterance(rng.gen(), words, &self.lexicon)?;
            let clean = self.render_clean(&utt, 0);
            let transcript = utt.sides[0].words.iter().flat_map(|w| w.pieces.clone()).collect();
            let audio = self.encoder.tokenize(&clean)?;
            data.asr.push(self.example(Stage1Task::Asr, Stage1Payload::Asr { audio, transcript })?);
        }
        for _ in 0..per(mix.avsr) {
            let utt = gen_utterance(rng.gen(), words, &self.lexicon)?;
            let spec = draw_training_spec(&self.banks, &self.config.augment, &mut rng);
            let r = self.render(&utt, 0, &spec)?;
            let transcript = utt.sides[0].words.iter().flat_map(|w| w.pieces.clone()).collect();
            data.avsr.push(self.example(
                Stage1Task::Avsr,
                Stage1Payload::Avsr { audio: r.audio, visual: r.visual, transcript },
            )?);
        }
        for _ in 0..per(mix.caption) {
            let id = rng.gen_range(0..self.banks.noise.len());
            let kind = self.banks.noise.kind(id).ok_or_else(|| Error::Data(format!("noise clip {id}")))?;
            let clip = self.banks.noise.clip(id)?;
            let len = (self.config.sample_rate as usize * 3 / 2).min(clip.len());
            let start = rng.gen_range(0..=clip.len() - len);
            let excerpt = Waveform::new(self.config.sample_rate, clip.samples[start..start + len].to_vec())?;
            let audio = self.encoder.tokenize(&excerpt)?;
            let caption = caption_tokens(&self.lexicon, kind)?;
            data.caption.push(self.example(Stage1Task::Caption, Stage1Payload::Caption { audio, caption })?);
        }
        Ok(data)
    }
}

/// User turn followed by the paired reply, as one text sequence.
fn text_continuation(conv: &SyntheticConversation, lexicon: &Lexicon) -> Vec<TokenId> {
    let mut out = Vec::new();
    let user = conv.sides[USER_SIDE].turn_segments();
    for seg in user.iter().filter(|s| s.event.kind != TurnKind::Backchannel) {
        let pieces: Vec<TokenId> = seg.words.iter().flat_map(|w| w.pieces.clone()).collect();
        out.extend_from_slice(&pieces);
        out.extend(lexicon.respond_pieces(&pieces));
    }
    out
}

fn caption_tokens(lexicon: &Lexicon, kind: NoiseKind) -> Result<Vec<TokenId>> {
    let name = match kind {
        NoiseKind::White => "white",
        NoiseKind::Pink => "pink",
        NoiseKind::Brown => "brown",
        NoiseKind::Babble => "babble",
    };
    let mut out = Vec::new();
    for w in [name, "noise"] {
        let idx = lexicon
            .with_role(WordRole::Caption)
            .into_iter()
            .find(|&i| lexicon.surface(i) == w)
            .ok_or_else(|| Error::Data(format!("caption word '{w}' missing from lexicon")))?;
        out.extend_from_slice(lexicon.pieces(idx));
    }
    Ok(out)
}
