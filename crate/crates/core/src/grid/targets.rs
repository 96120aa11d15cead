use std::str::FromStr;

use log::debug;

use super::align::{align_transcript, align_turn_events, turn_token};
use super::vocab::{TokenId, Vocabulary, BOS, EMP, EOS, NULL, SOT};
use super::{FrameGrid, Special, TurnKind};
use crate::corpus::SyntheticConversation;
use crate::error::{Error, Result};
use crate::frontend::{AcousticTokenGrid, VisualFeatureGrid};

/// Stage-1 multi-task objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage1Task {
    Text,
    Asr,
    Avsr,
    Caption,
}

impl Stage1Task {
    pub const ALL: [Stage1Task; 4] = [Stage1Task::Text, Stage1Task::Asr, Stage1Task::Avsr, Stage1Task::Caption];

    /// Task prefix placed at the head of the target transcript.
    pub fn prefix(self) -> TokenId {
        match self {
            Stage1Task::Text => BOS,
            Stage1Task::Asr => Special::Asr.id(),
            Stage1Task::Avsr => Special::Trans.id(),
            Stage1Task::Caption => Special::Ac.id(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage1Task::Text => "text",
            Stage1Task::Asr => "asr",
            Stage1Task::Avsr => "avsr",
            Stage1Task::Caption => "caption",
        }
    }
}

impl FromStr for Stage1Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Stage1Task::Text),
            "asr" => Ok(Stage1Task::Asr),
            "avsr" => Ok(Stage1Task::Avsr),
            "caption" | "ac" => Ok(Stage1Task::Caption),
            other => Err(Error::Validation(format!("unknown stage-1 task {other:?}"))),
        }
    }
}

/// Raw material for one stage-1 sample.
#[derive(Debug, Clone)]
pub enum Stage1Payload {
    Text { tokens: Vec<TokenId> },
    Asr { audio: AcousticTokenGrid, transcript: Vec<TokenId> },
    Avsr { audio: AcousticTokenGrid, visual: VisualFeatureGrid, transcript: Vec<TokenId> },
    Caption { audio: AcousticTokenGrid, caption: Vec<TokenId> },
}

/// Input grids, target stream and loss mask for one stage-1 sample.
///
/// Layout: the modality frames come first with `<NULL>` targets; the last
/// modality frame predicts the task prefix, then the transcript follows one
/// token per frame with missing-modality inputs, closed by `<EOS>`.
#[derive(Debug, Clone)]
pub struct Stage1Example {
    pub task: Stage1Task,
    pub audio: AcousticTokenGrid,
    pub visual: VisualFeatureGrid,
    pub target: Vec<TokenId>,
    pub loss_mask: Vec<f32>,
}

impl Stage1Example {
    pub fn frames(&self) -> usize {
        self.target.len()
    }
}

pub fn build_stage1_targets(
    task: Stage1Task,
    payload: Stage1Payload,
    codebooks: usize,
    codebook_size: usize,
    visual_dims: usize,
) -> Result<Stage1Example> {
    let (audio, visual, text) = match (task, payload) {
        (Stage1Task::Text, Stage1Payload::Text { tokens }) => (None, None, tokens),
        (Stage1Task::Asr, Stage1Payload::Asr { audio, transcript }) => (Some(audio), None, transcript),
        (Stage1Task::Avsr, Stage1Payload::Avsr { audio, visual, transcript }) => {
            if audio.frames() != visual.frames() {
                return Err(Error::LengthMismatch {
                    what: "avsr audio/visual frames",
                    left: audio.frames(),
                    right: visual.frames(),
                });
            }
            (Some(audio), Some(visual), transcript)
        }
        (Stage1Task::Caption, Stage1Payload::Caption { audio, caption }) => (Some(audio), None, caption),
        (t, _) => return Err(Error::Validation(format!("payload does not match task {}", t.name()))),
    };
    if text.iter().any(|&t| t == NULL) {
        return Err(Error::Validation("stage-1 text may not contain <NULL>".into()));
    }
    let media = audio.as_ref().map(|a| a.frames()).unwrap_or(0);
    let mut target = Vec::with_capacity(media + text.len() + 2);
    if media > 0 {
        target.extend(std::iter::repeat(NULL).take(media - 1));
    }
    if task != Stage1Task::Text || media > 0 {
        target.push(task.prefix());
    }
    target.extend_from_slice(&text);
    target.push(EOS);
    let frames = target.len();

    let mut audio_in = AcousticTokenGrid::null(frames, codebooks, codebook_size);
    if let Some(a) = &audio {
        for n in 0..a.frames() {
            audio_in.frame_mut(n).copy_from_slice(a.frame(n));
        }
    }
    let mut visual_in = VisualFeatureGrid::null(frames, visual_dims);
    if let Some(v) = &visual {
        for n in 0..v.frames() {
            visual_in.set_frame(n, v.frame(n), v.is_present(n));
        }
    }
    let loss_mask = target.iter().map(|&t| if t == NULL { 0.0 } else { 1.0 }).collect();
    Ok(Stage1Example {
        task,
        audio: audio_in,
        visual: visual_in,
        target,
        loss_mask,
    })
}

/// Frame-aligned dual-model targets for one side of a conversation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedTargetStreams {
    pub u: Vec<TokenId>,
    pub t: Vec<TokenId>,
    pub horizon: usize,
    pub dropped: usize,
}

/// `U` = the user's words delayed by `d`; `T` = the other side's turn starts
/// and backchannels, undelayed.
pub fn build_stage2_dual_targets(
    conv: &SyntheticConversation,
    user_side: usize,
    grid: &FrameGrid,
) -> Result<AlignedTargetStreams> {
    let (user, agent) = conv.user_and_agent(user_side)?;
    let horizon = conv.horizon(grid);
    let u = align_transcript(&user.words, grid, horizon)?;
    let t = align_turn_events(&agent.turns, grid, horizon)?;
    if u.tokens.len() != t.tokens.len() {
        return Err(Error::LengthMismatch {
            what: "dual target streams",
            left: u.tokens.len(),
            right: t.tokens.len(),
        });
    }
    Ok(AlignedTargetStreams {
        u: u.tokens,
        t: t.tokens,
        horizon,
        dropped: u.dropped + t.dropped,
    })
}

/// Single interleaved stream of the unified model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnifiedTargetStream {
    pub r: Vec<TokenId>,
    pub horizon: usize,
    pub shifted: usize,
}

/// Turn tokens as in [`align_turn_events`]; each turn's response pieces follow
/// its `<SOT>` on consecutive frames. Anything that would overlap earlier
/// content waits until that content is complete.
pub fn build_unified_targets(
    conv: &SyntheticConversation,
    user_side: usize,
    grid: &FrameGrid,
) -> Result<UnifiedTargetStream> {
    let (_, agent) = conv.user_and_agent(user_side)?;
    let horizon = conv.horizon(grid);
    let mut r = vec![EMP; horizon];
    let mut next_free = 0usize;
    let mut shifted = 0usize;
    for seg in agent.turn_segments() {
        let nominal = grid.frame_floor(seg.event.t_turn)?;
        let pos = nominal.max(next_free);
        if pos > nominal {
            shifted += 1;
            debug!("build_unified_targets: turn at {} s shifted to frame {pos}", seg.event.t_turn);
        }
        if pos < horizon {
            r[pos] = turn_token(seg.event.kind);
        }
        next_free = pos + 1;
        if seg.event.kind != TurnKind::Backchannel {
            for w in &seg.words {
                for &p in &w.pieces {
                    if next_free < horizon {
                        r[next_free] = p;
                    }
                    next_free += 1;
                }
            }
        }
    }
    Ok(UnifiedTargetStream { r, horizon, shifted })
}

/// Removes explicit turn supervision: every `<SOT>` becomes `<EMP>`, the
/// response tokens keep their frames.
pub fn strip_sot(stream: &UnifiedTargetStream) -> UnifiedTargetStream {
    UnifiedTargetStream {
        r: stream.r.iter().map(|&t| if t == SOT { EMP } else { t }).collect(),
        horizon: stream.horizon,
        shifted: stream.shifted,
    }
}

/// True iff every contiguous agent-text run is preceded by a `<SOT>` with no
/// other `<SOT>` in between.
pub fn unified_runs_are_anchored(vocab: &Vocabulary, r: &[TokenId]) -> bool {
    let mut open = false;
    let mut in_run = false;
    for &t in r {
        if t == SOT {
            open = true;
            in_run = false;
        } else if vocab.is_text(t) {
            if !in_run && !open {
                return false;
            }
            in_run = true;
            open = false;
        } else {
            in_run = false;
        }
    }
    true
}
