use std::fmt::Write;

use super::trace::{DialogueState, EventKind, SessionTrace, TraceEvent};
use crate::error::{Error, Result};
use crate::grid::{FrameGrid, TokenId, Vocabulary, SOT};

fn piece(vocab: &Vocabulary, t: TokenId) -> String {
    vocab.piece(t).map(str::to_string).unwrap_or_else(|| format!("?{}", t.0))
}

fn unpiece(vocab: &Vocabulary, s: &str) -> Result<TokenId> {
    if let Some(n) = s.strip_prefix('?') {
        return n.parse().map(TokenId).map_err(|_| Error::Data(format!("bad token '{s}'")));
    }
    vocab.id(s).ok_or_else(|| Error::Data(format!("unknown piece '{s}'")))
}

/// One line per utterance or control event, e.g.
///
/// ```text
///     1.20s  USER        red blue  # 30 36
///     3.00s  AGENT       green gold  # s75 p75 76 77
///     3.12s  LISTENING   # 78
/// ```
///
/// Text after `#` anchors every event to its frame so the view parses back.
pub fn render_transcript(trace: &SessionTrace, vocab: &Vocabulary, grid: &FrameGrid) -> String {
    let ev = &trace.events;
    let mut out = String::new();
    let mut i = 0;
    let mut line = |first: usize, label: &str, text: &[String], anchors: &[String]| {
        let _ = write!(out, "{:8.2}s  {label:<11}", grid.frame_time(first));
        for t in text {
            let _ = write!(out, " {t}");
        }
        let _ = writeln!(out, "  # {}", anchors.join(" "));
    };
    while i < ev.len() {
        let e = &ev[i];
        let mut text = Vec::new();
        let mut anchors = Vec::new();
        let label;
        let agent_tail = |j: &mut usize, text: &mut Vec<String>, anchors: &mut Vec<String>| {
            while *j < ev.len() && ev[*j].kind == EventKind::AgentToken {
                text.push(piece(vocab, ev[*j].token.unwrap_or(TokenId(u32::MAX))));
                anchors.push(ev[*j].frame.to_string());
                *j += 1;
            }
        };
        let mut j = i + 1;
        match e.kind {
            EventKind::UserToken => {
                label = "USER";
                j = i;
                while j < ev.len() && ev[j].kind == EventKind::UserToken {
                    text.push(piece(vocab, ev[j].token.unwrap_or(TokenId(u32::MAX))));
                    anchors.push(ev[j].frame.to_string());
                    j += 1;
                }
            }
            EventKind::TurnToken if e.token == Some(SOT) => {
                label = "AGENT";
                anchors.push(format!("s{}", e.frame));
                if j < ev.len() && is_onset(&ev[j], false) && ev[j].frame == e.frame {
                    anchors.push(format!("p{}", ev[j].frame));
                    j += 1;
                }
                agent_tail(&mut j, &mut text, &mut anchors);
            }
            EventKind::TurnToken => {
                label = "TURN";
                text.push(piece(vocab, e.token.unwrap_or(TokenId(u32::MAX))));
                anchors.push(e.frame.to_string());
            }
            EventKind::StateChange if e.state == Some(DialogueState::Speaking) => {
                label = "AGENT";
                anchors.push(format!("{}{}", if e.implicit { 'i' } else { 'p' }, e.frame));
                agent_tail(&mut j, &mut text, &mut anchors);
            }
            EventKind::StateChange => {
                label = "LISTENING";
                anchors.push(e.frame.to_string());
            }
            EventKind::AgentToken => {
                label = "AGENT";
                j = i;
                agent_tail(&mut j, &mut text, &mut anchors);
            }
            EventKind::Backchannel => {
                label = "BACKCHANNEL";
                text.push(piece(vocab, e.token.unwrap_or(TokenId(u32::MAX))));
                anchors.push(e.frame.to_string());
            }
            EventKind::Yield => {
                label = "YIELD";
                anchors.push(e.frame.to_string());
            }
        }
        line(e.frame, label, &text, &anchors);
        i = j;
    }
    out
}

fn is_onset(e: &TraceEvent, implicit: bool) -> bool {
    e.kind == EventKind::StateChange && e.state == Some(DialogueState::Speaking) && e.implicit == implicit
}

/// Inverse of [`render_transcript`].
pub fn parse_transcript(text: &str, vocab: &Vocabulary) -> Result<SessionTrace> {
    let mut trace = SessionTrace::default();
    for (ln, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Data(format!("transcript line {}: {what}", ln + 1));
        let (body, anchors) = raw.rsplit_once(" # ").ok_or_else(|| bad("missing frame anchors"))?;
        let mut words = body.split_whitespace();
        words.next().ok_or_else(|| bad("missing time"))?;
        let label = words.next().ok_or_else(|| bad("missing label"))?;
        let text: Vec<&str> = words.collect();
        let mut pieces = text.iter();
        let frame = |a: &str| a.parse::<usize>().map_err(|_| bad(&format!("bad anchor '{a}'")));
        for a in anchors.split_whitespace() {
            let ev = match (label, a.split_at(1)) {
                ("AGENT", ("s", f)) => TraceEvent::token(frame(f)?, EventKind::TurnToken, SOT),
                ("AGENT", ("p", f)) => TraceEvent::state(frame(f)?, DialogueState::Speaking, false),
                ("AGENT", ("i", f)) => TraceEvent::state(frame(f)?, DialogueState::Speaking, true),
                ("LISTENING", _) => TraceEvent::state(frame(a)?, DialogueState::Listening, false),
                ("YIELD", _) => TraceEvent::bare(frame(a)?, EventKind::Yield),
                (label, _) => {
                    let kind = match label {
                        "USER" => EventKind::UserToken,
                        "AGENT" => EventKind::AgentToken,
                        "TURN" => EventKind::TurnToken,
                        "BACKCHANNEL" => EventKind::Backchannel,
                        other => return Err(bad(&format!("unknown label '{other}'"))),
                    };
                    let p = pieces.next().ok_or_else(|| bad("fewer tokens than anchors"))?;
                    TraceEvent::token(frame(a)?, kind, unpiece(vocab, p)?)
                }
            };
            if trace.events.last().is_some_and(|l| l.frame > ev.frame) {
                return Err(bad("frames go backwards"));
            }
            trace.events.push(ev);
        }
        if pieces.next().is_some() {
            return Err(bad("more tokens than anchors"));
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Lexicon;
    use crate::grid::{BACKCHANNEL, EMP};
    use crate::orchestrator::{run_session, EchoBackbone, Mode, ScriptedModel, SessionConfig};
    use proptest::prelude::*;

    #[test]
    fn empty_trace_renders_empty() {
        let lx = Lexicon::default();
        assert_eq!(render_transcript(&SessionTrace::default(), lx.vocab(), &FrameGrid::default()), "");
        assert!(parse_transcript("", lx.vocab()).unwrap().is_empty());
    }

    #[test]
    fn agent_line_starts_at_the_sot_frame() {
        let lx = Lexicon::default();
        let mut tr = SessionTrace::default();
        tr.push(TraceEvent::token(75, EventKind::TurnToken, SOT));
        tr.push(TraceEvent::state(75, DialogueState::Speaking, false));
        for f in 76..79 {
            tr.push(TraceEvent::token(f, EventKind::AgentToken, TokenId(9 + f as u32 - 76)));
        }
        let s = render_transcript(&tr, lx.vocab(), &FrameGrid::default());
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].trim_start().starts_with("3.00s  AGENT"), "{}", lines[0]);
        assert_eq!(parse_transcript(&s, lx.vocab()).unwrap(), tr);
    }

    fn token() -> impl Strategy<Value = TokenId> {
        prop_oneof![4 => Just(EMP), 1 => Just(SOT), 1 => Just(BACKCHANNEL), 2 => (9u32..36).prop_map(TokenId)]
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(u in proptest::collection::vec(token(), 60), t in proptest::collection::vec(token(), 60), unified in any::<bool>()) {
            let lx = Lexicon::default();
            let a = crate::frontend::AcousticTokenGrid::null(60, 16, 64);
            let v = crate::frontend::VisualFeatureGrid::null(60, 16);
            let mut b = EchoBackbone::default();
            let (mut m, mode) = if unified { (ScriptedModel::unified(u), Mode::Unified) } else { (ScriptedModel::dual(u, t), Mode::Dual) };
            let cfg = SessionConfig { implicit_onset: unified, ..Default::default() };
            let tr = run_session(&a, &v, &mut m, &mut b, mode, &cfg, 0).unwrap();
            let s = render_transcript(&tr, lx.vocab(), &FrameGrid::default());
            prop_assert_eq!(parse_transcript(&s, lx.vocab()).unwrap(), tr);
        }
    }
}
