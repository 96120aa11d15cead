//! Synthetic dyadic conversation world: scripts, a parametric voice
//! synthesizer, noise and interferer banks, and SNR-controlled mixing.

mod audio_io;
mod augment;
mod generate;
mod lexicon;
mod mix;
mod noise;
mod synth;

pub use audio_io::{read_pcm_f32, write_pcm_f32, AudioSidecar, ManifestRecord};
pub use augment::{apply_mix, augment, draw_training_spec, gen_eval_condition, AugmentConfig, Banks, Condition, MixSpec};
pub use generate::{gen_conversation, gen_utterance, ConversationParams, FtoDistribution};
pub use lexicon::{Lexicon, LexiconWord, WordRole};
pub use mix::{measure_snr, mix_at_snr, power};
pub use noise::{InterfererBank, NoiseBank, NoiseKind, OFF_VOCAB_BASE};
pub use synth::{synth_speech, Voice, WordSignature, SPEECH_RMS};

use crate::error::{Error, Result};
use crate::grid::{FrameGrid, TurnAnnotation, TurnKind, WordTiming, FPS};

/// Default sample rate: 640 samples per 40 ms frame.
pub const SAMPLE_RATE: u32 = 16_000;

/// Words and turn events of one conversation side.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SideScript {
    pub words: Vec<WordTiming>,
    pub turns: Vec<TurnAnnotation>,
    pub voice_seed: u64,
}

/// A turn event and the words it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnSegment {
    pub event: TurnAnnotation,
    pub words: Vec<WordTiming>,
}

impl SideScript {
    /// Words grouped under the turn event that precedes them.
    pub fn turn_segments(&self) -> Vec<TurnSegment> {
        let mut out = Vec::with_capacity(self.turns.len());
        for (i, ev) in self.turns.iter().enumerate() {
            let until = self.turns.get(i + 1).map(|e| e.t_turn).unwrap_or(f64::INFINITY);
            let words = self
                .words
                .iter()
                .filter(|w| w.t_start >= ev.t_turn && w.t_start < until)
                .cloned()
                .collect();
            out.push(TurnSegment { event: ev.clone(), words });
        }
        out
    }

    pub fn end_time(&self) -> f64 {
        self.words.iter().map(|w| w.t_end).fold(0.0, f64::max)
    }
}

/// A ground-truth floor transfer from the user to the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnOpportunity {
    /// End of the user's last word before the agent took the floor.
    pub user_end: f64,
    pub agent_start: f64,
    pub fto: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConversation {
    pub id: String,
    pub sides: [SideScript; 2],
    pub duration: f64,
    /// Offsets of every floor transfer in the conversation, either direction.
    pub fto_list: Vec<f64>,
}

impl SyntheticConversation {
    pub fn user_and_agent(&self, user_side: usize) -> Result<(&SideScript, &SideScript)> {
        match user_side {
            0 => Ok((&self.sides[0], &self.sides[1])),
            1 => Ok((&self.sides[1], &self.sides[0])),
            s => Err(Error::Validation(format!("user side must be 0 or 1, got {s}"))),
        }
    }

    pub fn horizon(&self, grid: &FrameGrid) -> usize {
        grid.horizon_for(self.duration)
    }

    pub fn n_samples(&self, sample_rate: u32) -> usize {
        self.horizon(&FrameGrid::default()) * (sample_rate / FPS) as usize
    }

    /// User→agent floor transfers, in time order.
    pub fn turn_opportunities(&self, user_side: usize) -> Result<Vec<TurnOpportunity>> {
        let (user, agent) = self.user_and_agent(user_side)?;
        let user_turns: Vec<TurnSegment> = user
            .turn_segments()
            .into_iter()
            .filter(|s| s.event.kind != TurnKind::Backchannel && !s.words.is_empty())
            .collect();
        let mut out = Vec::new();
        for ev in agent.turns.iter().filter(|e| e.kind != TurnKind::Backchannel) {
            let Some(prev) = user_turns.iter().rev().find(|s| s.event.t_turn < ev.t_turn) else {
                continue;
            };
            // only the user turn immediately before this agent turn counts
            let agent_between = agent
                .turns
                .iter()
                .any(|e| e.kind != TurnKind::Backchannel && e.t_turn > prev.event.t_turn && e.t_turn < ev.t_turn);
            if agent_between {
                continue;
            }
            let user_end = prev.words.last().map(|w| w.t_end).unwrap_or(prev.event.t_turn);
            out.push(TurnOpportunity {
                user_end,
                agent_start: ev.t_turn,
                fto: ev.t_turn - user_end,
            });
        }
        Ok(out)
    }
}

/// Mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl Waveform {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Result<Self> {
        if sample_rate == 0 || sample_rate % FPS != 0 {
            return Err(Error::Validation(format!(
                "sample rate {sample_rate} is not a multiple of {FPS}"
            )));
        }
        Ok(Self { sample_rate, samples })
    }

    pub fn silent(sample_rate: u32, n: usize) -> Self {
        Self {
            sample_rate,
            samples: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples_per_frame(&self) -> usize {
        (self.sample_rate / FPS) as usize
    }

    pub fn frames(&self) -> usize {
        self.samples.len().div_ceil(self.samples_per_frame())
    }

    pub fn rms(&self) -> f64 {
        power(&self.samples).sqrt()
    }
}

pub(crate) use synth::render_word as render_signature;

/// Signature id of lexicon entry `idx`.
pub(crate) fn signature_id_of(_lexicon: &Lexicon, idx: usize) -> u64 {
    idx as u64
}
