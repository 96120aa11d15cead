use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FrameGrid, TokenId, SOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DialogueState {
    Listening,
    Speaking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    UserToken,
    TurnToken,
    StateChange,
    AgentToken,
    Backchannel,
    Yield,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub frame: usize,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<DialogueState>,
    /// A turn onset inferred from the first response token, without `<SOT>`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub implicit: bool,
}

impl TraceEvent {
    pub fn token(frame: usize, kind: EventKind, token: TokenId) -> Self {
        Self { frame, kind, token: Some(token), state: None, implicit: false }
    }

    pub fn state(frame: usize, state: DialogueState, implicit: bool) -> Self {
        Self { frame, kind: EventKind::StateChange, token: None, state: Some(state), implicit }
    }

    pub fn bare(frame: usize, kind: EventKind) -> Self {
        Self { frame, kind, token: None, state: None, implicit: false }
    }
}

/// Time-ordered record of one session.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SessionTrace {
    pub events: Vec<TraceEvent>,
}

impl SessionTrace {
    pub fn push(&mut self, ev: TraceEvent) {
        debug_assert!(self.events.last().map_or(true, |l| l.frame <= ev.frame), "trace frames must not decrease");
        self.events.push(ev);
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn user_tokens(&self) -> Vec<TokenId> {
        self.events.iter().filter(|e| e.kind == EventKind::UserToken).filter_map(|e| e.token).collect()
    }

    pub fn agent_tokens(&self) -> Vec<TokenId> {
        self.events.iter().filter(|e| e.kind == EventKind::AgentToken).filter_map(|e| e.token).collect()
    }

    pub fn sot_frames(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::TurnToken && e.token == Some(SOT))
            .map(|e| e.frame)
            .collect()
    }

    /// Agent turn starts in seconds: every decoded `<SOT>` plus implicit
    /// onsets.
    pub fn agent_turn_starts(&self, grid: &FrameGrid) -> Vec<f64> {
        let mut frames: Vec<usize> = self
            .events
            .iter()
            .filter(|e| {
                (e.kind == EventKind::TurnToken && e.token == Some(SOT)) || (e.kind == EventKind::StateChange && e.implicit)
            })
            .map(|e| e.frame)
            .collect();
        frames.sort_unstable();
        frames.into_iter().map(|f| grid.frame_time(f)).collect()
    }

    /// Agent responses, one token list per SPEAKING span.
    pub fn agent_turns(&self) -> Vec<Vec<TokenId>> {
        let mut out: Vec<Vec<TokenId>> = Vec::new();
        let mut open = false;
        for e in &self.events {
            match (e.kind, e.state) {
                (EventKind::StateChange, Some(DialogueState::Speaking)) => {
                    out.push(Vec::new());
                    open = true;
                }
                (EventKind::StateChange, Some(DialogueState::Listening)) => open = false,
                (EventKind::AgentToken, _) if open => out.last_mut().unwrap().extend(e.token),
                _ => {}
            }
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut trace = SessionTrace::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: TraceEvent = serde_json::from_str(&line)
                .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if trace.events.last().is_some_and(|l| l.frame > ev.frame) {
                return Err(Error::Data(format!("{}:{}: frame goes backwards", path.display(), i + 1)));
            }
            trace.events.push(ev);
        }
        Ok(trace)
    }
}

/// Checks the runtime's safety rules. Returns the first violation.
pub fn check_trace(trace: &SessionTrace) -> std::result::Result<(), String> {
    let mut state = DialogueState::Listening;
    let mut last_frame = 0;
    let mut sot_frame: Option<usize> = None;
    let mut onset: Option<(usize, bool)> = None;
    for (i, e) in trace.events.iter().enumerate() {
        if e.frame < last_frame {
            return Err(format!("event {i}: frame {} after {last_frame}", e.frame));
        }
        last_frame = e.frame;
        match e.kind {
            EventKind::TurnToken if e.token == Some(SOT) => sot_frame = Some(e.frame),
            EventKind::StateChange => match e.state {
                Some(DialogueState::Speaking) => {
                    if state == DialogueState::Speaking {
                        return Err(format!("event {i}: SPEAKING while already speaking"));
                    }
                    if !e.implicit && sot_frame != Some(e.frame) {
                        return Err(format!("event {i}: SPEAKING at frame {} without <SOT>", e.frame));
                    }
                    state = DialogueState::Speaking;
                    onset = Some((e.frame, e.implicit));
                }
                Some(DialogueState::Listening) => state = DialogueState::Listening,
                None => return Err(format!("event {i}: state change without a state")),
            },
            EventKind::AgentToken => {
                if state != DialogueState::Speaking {
                    return Err(format!("event {i}: agent token at frame {} while listening", e.frame));
                }
                match onset {
                    Some((f, false)) if e.frame <= f => {
                        return Err(format!("event {i}: agent token not after its <SOT> frame {f}"))
                    }
                    _ => {}
                }
            }
            EventKind::Yield if state != DialogueState::Speaking => {
                return Err(format!("event {i}: yield while listening"));
            }
            _ => {}
        }
    }
    Ok(())
}
