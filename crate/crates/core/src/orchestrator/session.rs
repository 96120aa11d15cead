use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::Backbone;
use super::trace::{DialogueState, EventKind, SessionTrace, TraceEvent};
use crate::error::{Error, Result};
use crate::frontend::{AcousticTokenGrid, VisualFeatureGrid};
use crate::grid::{Special, TokenId, BACKCHANNEL, BOS, EMP, EOS, NULL, SOT};
use crate::model::{decode_greedy, step_with_cache, DecodeCache, FrameInput, Params, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Transcript and turn heads; responses come from the backbone.
    Dual,
    /// One interleaved head that speaks for itself.
    Unified,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(Mode::Dual),
            "unified" => Ok(Mode::Unified),
            _ => Err(Error::Validation(format!("unknown mode '{s}' (dual|unified)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Decoding {
    Greedy,
    Sample { temperature: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub decoding: Decoding,
    /// Consecutive user tokens needed to interrupt the agent.
    pub yield_debounce: usize,
    /// Unified mode: treat a response token heard while listening as a turn
    /// onset. Needed by models trained without `<SOT>`.
    pub implicit_onset: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { decoding: Decoding::Greedy, yield_debounce: 1, implicit_onset: false }
    }
}

/// What the session loop needs from an understanding model.
pub trait FrameModel {
    fn mode(&self) -> Mode;
    /// Advances one frame and returns one decoded token per head.
    fn step(&mut self, input: &FrameInput<'_>, rng: &mut ChaCha8Rng) -> Result<Vec<TokenId>>;
    fn reset(&mut self);
}

/// A trained transformer behind a per-session cache.
pub struct TransformerModel<'p> {
    params: &'p Params<f32>,
    cache: DecodeCache<f32>,
    decoding: Decoding,
}

impl<'p> TransformerModel<'p> {
    pub fn new(params: &'p Params<f32>, decoding: Decoding) -> Self {
        Self { cache: DecodeCache::new(params), params, decoding }
    }
}

impl FrameModel for TransformerModel<'_> {
    fn mode(&self) -> Mode {
        match self.params.config.variant {
            Variant::Dual => Mode::Dual,
            Variant::Unified | Variant::UnifiedNoSot => Mode::Unified,
        }
    }

    fn step(&mut self, input: &FrameInput<'_>, rng: &mut ChaCha8Rng) -> Result<Vec<TokenId>> {
        let act = step_with_cache(&mut self.cache, input, self.params)?;
        Ok(act
            .logits
            .iter()
            .zip(&self.params.heads)
            .map(|(l, h)| {
                let i = match self.decoding {
                    Decoding::Greedy => decode_greedy(l),
                    Decoding::Sample { temperature } => crate::model::decode_sample_with(l, temperature, rng),
                };
                h.classes[i]
            })
            .collect())
    }

    fn reset(&mut self) {
        self.cache.reset();
    }
}

/// Replays fixed per-frame decisions; for tests and demos.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    mode: Mode,
    heads: Vec<Vec<TokenId>>,
    pos: usize,
}

impl ScriptedModel {
    pub fn dual(u: Vec<TokenId>, t: Vec<TokenId>) -> Self {
        Self { mode: Mode::Dual, heads: vec![u, t], pos: 0 }
    }

    pub fn unified(r: Vec<TokenId>) -> Self {
        Self { mode: Mode::Unified, heads: vec![r], pos: 0 }
    }
}

impl FrameModel for ScriptedModel {
    fn mode(&self) -> Mode {
        self.mode
    }

    fn step(&mut self, _input: &FrameInput<'_>, _rng: &mut ChaCha8Rng) -> Result<Vec<TokenId>> {
        let out = self.heads.iter().map(|h| h.get(self.pos).copied().unwrap_or(EMP)).collect();
        self.pos += 1;
        Ok(out)
    }

    fn reset(&mut self) {
        self.pos = 0;
    }
}

fn is_user_speech(t: TokenId) -> bool {
    t != EMP && t != NULL && t != BOS && t != EOS
}

fn is_response_text(t: TokenId) -> bool {
    Special::from_id(t).is_none()
}

struct Loop<'a> {
    trace: SessionTrace,
    state: DialogueState,
    backbone: &'a mut dyn Backbone,
    queue: VecDeque<TokenId>,
    /// Frame at which the current SPEAKING span began.
    speaking_since: usize,
    user_run: usize,
}

impl Loop<'_> {
    fn enter(&mut self, n: usize, state: DialogueState, implicit: bool) {
        self.state = state;
        if state == DialogueState::Speaking {
            self.speaking_since = n;
        } else {
            self.queue.clear();
        }
        self.trace.push(TraceEvent::state(n, state, implicit));
    }

    fn dual_frame(&mut self, n: usize, u: TokenId, t: TokenId, debounce: usize) {
        if is_user_speech(u) {
            self.trace.push(TraceEvent::token(n, EventKind::UserToken, u));
            self.user_run += 1;
            if self.state == DialogueState::Speaking && self.user_run >= debounce {
                self.trace.push(TraceEvent::bare(n, EventKind::Yield));
                self.enter(n, DialogueState::Listening, false);
            }
            if self.state == DialogueState::Listening {
                self.backbone.ingest_user_token(u);
            }
        } else {
            self.user_run = 0;
        }
        if t == SOT {
            self.trace.push(TraceEvent::token(n, EventKind::TurnToken, SOT));
            if self.state == DialogueState::Listening {
                self.enter(n, DialogueState::Speaking, false);
                self.queue = self.backbone.on_turn().into();
                return;
            }
        } else if t == BACKCHANNEL {
            self.trace.push(TraceEvent::token(n, EventKind::Backchannel, BACKCHANNEL));
        }
        if self.state == DialogueState::Speaking && n > self.speaking_since {
            match self.queue.pop_front() {
                Some(tok) => self.trace.push(TraceEvent::token(n, EventKind::AgentToken, tok)),
                None => self.enter(n, DialogueState::Listening, false),
            }
        }
    }

    fn unified_frame(&mut self, n: usize, r: TokenId, implicit_onset: bool) {
        if r == SOT {
            self.trace.push(TraceEvent::token(n, EventKind::TurnToken, SOT));
            if self.state == DialogueState::Speaking {
                // a new turn closes the running one
                self.enter(n, DialogueState::Listening, false);
            }
            self.enter(n, DialogueState::Speaking, false);
        } else if r == BACKCHANNEL {
            self.trace.push(TraceEvent::token(n, EventKind::Backchannel, BACKCHANNEL));
        } else if is_response_text(r) {
            if self.state == DialogueState::Listening && implicit_onset {
                self.enter(n, DialogueState::Speaking, true);
            }
            if self.state == DialogueState::Speaking {
                self.trace.push(TraceEvent::token(n, EventKind::AgentToken, r));
            }
        } else if self.state == DialogueState::Speaking && n > self.speaking_since {
            self.enter(n, DialogueState::Listening, false);
        }
    }
}

/// Walks the grids frame by frame, feeding decoded tokens back as history.
/// Deterministic for fixed inputs, model, backbone and seed.
pub fn run_session(
    audio: &AcousticTokenGrid,
    visual: &VisualFeatureGrid,
    model: &mut dyn FrameModel,
    backbone: &mut dyn Backbone,
    mode: Mode,
    cfg: &SessionConfig,
    seed: u64,
) -> Result<SessionTrace> {
    if audio.frames() != visual.frames() {
        return Err(Error::LengthMismatch { what: "session audio/visual frames", left: audio.frames(), right: visual.frames() });
    }
    if model.mode() != mode {
        return Err(Error::Validation(format!("model runs in {:?} mode, session asked for {mode:?}", model.mode())));
    }
    if cfg.yield_debounce == 0 {
        return Err(Error::Config("yield_debounce must be at least 1".into()));
    }
    model.reset();
    backbone.reset();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lp = Loop {
        trace: SessionTrace::default(),
        state: DialogueState::Listening,
        backbone,
        queue: VecDeque::new(),
        speaking_since: 0,
        user_run: 0,
    };
    let (mut u_prev, mut t_prev) = (BOS, if mode == Mode::Dual { BOS } else { NULL });
    for n in 0..audio.frames() {
        let input = FrameInput {
            audio: audio.frame(n),
            visual: visual.is_present(n).then(|| visual.frame(n)),
            u_prev,
            t_prev,
        };
        let out = model.step(&input, &mut rng)?;
        match mode {
            Mode::Dual => {
                let (u, t) = (out[0], out[1]);
                lp.dual_frame(n, u, t, cfg.yield_debounce);
                (u_prev, t_prev) = (u, t);
            }
            Mode::Unified => {
                lp.unified_frame(n, out[0], cfg.implicit_onset);
                u_prev = out[0];
            }
        }
    }
    Ok(lp.trace)
}
