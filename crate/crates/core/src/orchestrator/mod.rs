//! LISTENING/SPEAKING runtime over a streaming model, with pluggable
//! response backbones and timestamped session traces.

mod backbone;
mod replay;
mod session;
mod trace;

pub use backbone::{Backbone, EchoBackbone, ScriptedBackbone, TinyLmBackbone};
pub use replay::{parse_transcript, render_transcript};
pub use session::{
    run_session, Decoding, FrameModel, Mode, ScriptedModel, SessionConfig, TransformerModel,
};
pub use trace::{check_trace, DialogueState, EventKind, SessionTrace, TraceEvent};

use serde::{Deserialize, Serialize};

use crate::grid::FRAME_SECONDS;

/// Platform-independent delay from input availability to earliest output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyBudget {
    pub chunk_ms: u32,
    pub visual_lookahead_frames: u32,
    pub total_ms: u32,
}

impl LatencyBudget {
    pub fn new(visual_lookahead_frames: u32) -> Self {
        let frame_ms = (FRAME_SECONDS * 1000.0).round() as u32;
        Self {
            chunk_ms: frame_ms,
            visual_lookahead_frames,
            total_ms: frame_ms + visual_lookahead_frames * frame_ms,
        }
    }
}

/// One 40 ms chunk plus the visual encoder's lookahead.
pub fn algorithmic_latency(cfg: &crate::frontend::EncoderConfig) -> u32 {
    LatencyBudget::new(cfg.lookahead as u32).total_ms
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::EncoderConfig;

    #[test]
    fn latency_formula() {
        assert_eq!(algorithmic_latency(&EncoderConfig::default()), 120);
        for (l, ms) in [(0, 40), (1, 80), (2, 120), (5, 240)] {
            let b = LatencyBudget::new(l);
            assert_eq!(b.total_ms, ms);
            assert_eq!(b.total_ms, b.chunk_ms + b.visual_lookahead_frames * 40);
        }
    }
}
