//! Global frame clock, token vocabulary and frame-alignment rules.

mod align;
mod records;
mod targets;
mod vocab;
mod weights;

pub use align::{align_transcript, align_turn_events, AlignedStream};
pub use records::{read_conversations, write_conversations, ConversationRecord, VocabManifest};
pub use targets::{
    build_stage1_targets, build_stage2_dual_targets, build_unified_targets, strip_sot, unified_runs_are_anchored,
    AlignedTargetStreams, Stage1Example, Stage1Payload, Stage1Task, UnifiedTargetStream,
};
pub use vocab::{Special, TokenId, Vocabulary, BACKCHANNEL, BOS, CONTINUATION, EMP, EOS, NULL, SOT};
pub use weights::{loss_weight_of, LossWeights, StreamKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frames per second of the shared time base.
pub const FPS: u32 = 25;
/// Duration of one frame in seconds.
pub const FRAME_SECONDS: f64 = 0.040;

/// Timestamps within this distance of a frame boundary snap onto it.
const SNAP_EPS: f64 = 1e-9;

/// The 25 Hz / 40 ms clock shared by every stream, plus the recognition delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    /// Delay, in frames, between a word's onset and its first text token.
    pub recognition_delay: usize,
}

impl Default for FrameGrid {
    fn default() -> Self {
        Self {
            recognition_delay: 25,
        }
    }
}

impl FrameGrid {
    pub fn new(recognition_delay: usize) -> Self {
        Self { recognition_delay }
    }

    pub fn fps(&self) -> u32 {
        FPS
    }

    pub fn frame_duration(&self) -> f64 {
        FRAME_SECONDS
    }

    /// `⌈t · fps⌉`.
    pub fn frame_ceil(&self, t: f64) -> Result<usize> {
        let x = scaled(t)?;
        let r = x.round();
        Ok(if (x - r).abs() < SNAP_EPS { r } else { x.ceil() } as usize)
    }

    /// `⌊t · fps⌋`.
    pub fn frame_floor(&self, t: f64) -> Result<usize> {
        let x = scaled(t)?;
        let r = x.round();
        Ok(if (x - r).abs() < SNAP_EPS { r } else { x.floor() } as usize)
    }

    /// Start time of frame `n` in seconds.
    pub fn frame_time(&self, n: usize) -> f64 {
        n as f64 * FRAME_SECONDS
    }

    /// Number of frames needed to cover `seconds`.
    pub fn horizon_for(&self, seconds: f64) -> usize {
        self.frame_ceil(seconds.max(0.0)).unwrap_or(0)
    }
}

fn scaled(t: f64) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!("timestamp must be finite and >= 0, got {t}")));
    }
    Ok(t * FPS as f64)
}

/// A word with its onset and offset in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTiming {
    pub pieces: Vec<TokenId>,
    pub t_start: f64,
    pub t_end: f64,
}

/// Three-way turn-taking taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TurnKind {
    /// Speaker starts after the other side finished.
    Normal,
    /// Speaker starts before the other side finished.
    Overlapping,
    /// Short interjection that does not claim the floor.
    Backchannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnAnnotation {
    pub kind: TurnKind,
    pub t_turn: f64,
    pub speaker: u8,
}
