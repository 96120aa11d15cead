use log::debug;

use super::vocab::{TokenId, BACKCHANNEL, EMP, SOT};
use super::{FrameGrid, TurnAnnotation, TurnKind, WordTiming};
use crate::error::{Error, Result};

/// A frame-indexed token sequence plus placement diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedStream {
    pub tokens: Vec<TokenId>,
    /// Tokens that would have landed at or beyond the horizon.
    pub dropped: usize,
    /// Items moved later than their nominal frame to resolve a collision.
    pub shifted: usize,
}

impl AlignedStream {
    fn silent(horizon: usize) -> Self {
        Self {
            tokens: vec![EMP; horizon],
            dropped: 0,
            shifted: 0,
        }
    }
}

/// Places each word's first piece at `frame_ceil(t_start) + d` and the rest of
/// its pieces on the following frames. A word whose nominal frame is still
/// occupied starts at the first free frame after the previous word.
pub fn align_transcript(words: &[WordTiming], grid: &FrameGrid, horizon: usize) -> Result<AlignedStream> {
    let mut out = AlignedStream::silent(horizon);
    let mut next_free = 0usize;
    let mut prev_start = f64::NEG_INFINITY;
    for w in words {
        if w.t_start < prev_start {
            return Err(Error::Validation(format!(
                "words not sorted by t_start ({} after {})",
                w.t_start, prev_start
            )));
        }
        if !(w.t_start < w.t_end) {
            return Err(Error::Validation(format!(
                "word timing must satisfy t_start < t_end ({} .. {})",
                w.t_start, w.t_end
            )));
        }
        prev_start = w.t_start;
        let nominal = grid.frame_ceil(w.t_start)? + grid.recognition_delay;
        let start = nominal.max(next_free);
        if start > nominal {
            out.shifted += 1;
        }
        for (k, &piece) in w.pieces.iter().enumerate() {
            let f = start + k;
            if f < horizon {
                out.tokens[f] = piece;
            } else {
                out.dropped += 1;
            }
        }
        next_free = start + w.pieces.len();
    }
    if out.dropped > 0 {
        debug!("align_transcript: dropped {} tokens beyond horizon {horizon}", out.dropped);
    }
    if out.shifted > 0 {
        debug!("align_transcript: {} words spilled over", out.shifted);
    }
    Ok(out)
}

/// Token placed in the turn-event stream for an annotation.
pub(crate) fn turn_token(kind: TurnKind) -> TokenId {
    match kind {
        TurnKind::Normal | TurnKind::Overlapping => SOT,
        TurnKind::Backchannel => BACKCHANNEL,
    }
}

/// Places `<SOT>` (normal/overlapping) or `<BC>` at `frame_floor(t_turn)`.
/// No recognition delay applies. An event whose frame is taken moves to the
/// next free frame.
pub fn align_turn_events(
    events: &[TurnAnnotation],
    grid: &FrameGrid,
    horizon: usize,
) -> Result<AlignedStream> {
    let mut out = AlignedStream::silent(horizon);
    let mut next_free = 0usize;
    let mut prev = f64::NEG_INFINITY;
    for e in events {
        if e.t_turn < prev {
            return Err(Error::Validation(format!(
                "turn events not sorted ({} after {})",
                e.t_turn, prev
            )));
        }
        prev = e.t_turn;
        let nominal = grid.frame_floor(e.t_turn)?;
        let f = nominal.max(next_free);
        if f > nominal {
            out.shifted += 1;
            debug!("align_turn_events: event at {} s shifted from frame {nominal} to {f}", e.t_turn);
        }
        if f < horizon {
            out.tokens[f] = turn_token(e.kind);
        } else {
            out.dropped += 1;
        }
        next_free = f + 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(p: &[u32], s: f64) -> WordTiming {
        WordTiming {
            pieces: p.iter().map(|&i| TokenId(i)).collect(),
            t_start: s,
            t_end: s + 0.2,
        }
    }

    fn ev(kind: TurnKind, t: f64) -> TurnAnnotation {
        TurnAnnotation {
            kind,
            t_turn: t,
            speaker: 1,
        }
    }

    #[test]
    fn single_word_lands_after_delay() {
        let g = FrameGrid::new(25);
        let s = align_transcript(&[w(&[20], 1.0)], &g, 100).unwrap();
        for (n, t) in s.tokens.iter().enumerate() {
            assert_eq!(*t, if n == 50 { TokenId(20) } else { EMP });
        }
    }

    #[test]
    fn empty_words_give_silence() {
        let s = align_transcript(&[], &FrameGrid::default(), 10).unwrap();
        assert!(s.tokens.iter().all(|&t| t == EMP));
    }

    #[test]
    fn colliding_words_spill_over() {
        let g = FrameGrid::new(0);
        let s = align_transcript(&[w(&[20, 21], 0.0), w(&[22, 23], 0.04)], &g, 8).unwrap();
        assert_eq!(&s.tokens[..4], &[TokenId(20), TokenId(21), TokenId(22), TokenId(23)]);
        assert_eq!(s.shifted, 1);
    }

    #[test]
    fn overflow_is_truncated_and_counted() {
        let g = FrameGrid::new(0);
        let s = align_transcript(&[w(&[20, 21, 22], 0.32)], &g, 10).unwrap();
        assert_eq!(s.dropped, 1);
        assert_eq!(s.tokens[8], TokenId(20));
        assert_eq!(s.tokens[9], TokenId(21));
    }

    #[test]
    fn non_monotone_words_rejected() {
        let g = FrameGrid::new(0);
        assert!(matches!(
            align_transcript(&[w(&[20], 1.0), w(&[21], 0.5)], &g, 100),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn turn_events_use_floor_without_delay() {
        let g = FrameGrid::new(25);
        let s = align_turn_events(&[ev(TurnKind::Backchannel, 1.23), ev(TurnKind::Normal, 3.0)], &g, 100).unwrap();
        assert_eq!(s.tokens[30], BACKCHANNEL);
        assert_eq!(s.tokens[75], SOT);
        assert_eq!(s.tokens.iter().filter(|&&t| t != EMP).count(), 2);
        let none = align_turn_events(&[], &g, 5).unwrap();
        assert!(none.tokens.iter().all(|&t| t == EMP));
    }

    #[test]
    fn same_frame_events_shift_forward() {
        let g = FrameGrid::default();
        let s = align_turn_events(&[ev(TurnKind::Normal, 1.0), ev(TurnKind::Backchannel, 1.01)], &g, 60).unwrap();
        assert_eq!(s.tokens[25], SOT);
        assert_eq!(s.tokens[26], BACKCHANNEL);
        assert_eq!(s.shifted, 1);
    }

    proptest::proptest! {
        #[test]
        fn word_starts_round_trip(gaps in proptest::collection::vec((0u64..4000, 1usize..3), 0..12), d in 0usize..30) {
            // words at least 3 frames apart with at most 2 pieces never collide
            let g = FrameGrid::new(d);
            let mut t_ms = 0u64;
            let mut words = Vec::new();
            for (gap, n) in &gaps {
                t_ms += 120 + gap;
                let pieces: Vec<u32> = (0..*n as u32).map(|k| 30 + k).collect();
                words.push(w(&pieces, t_ms as f64 / 1000.0));
            }
            let horizon = g.frame_ceil(t_ms as f64 / 1000.0).unwrap() + d + 4;
            let s = align_transcript(&words, &g, horizon).unwrap();
            proptest::prop_assert_eq!(s.shifted, 0);
            let mut recovered = Vec::new();
            let mut n = 0;
            while n < s.tokens.len() {
                if s.tokens[n] == TokenId(30) {
                    recovered.push(n - d);
                }
                n += 1;
            }
            let expected: Vec<usize> = words.iter().map(|w| g.frame_ceil(w.t_start).unwrap()).collect();
            proptest::prop_assert_eq!(recovered, expected);
        }

        #[test]
        fn turn_events_shift_with_time(frames in proptest::collection::vec(0usize..200, 0..10), k in 0usize..50) {
            let g = FrameGrid::default();
            let mut fs = frames.clone();
            fs.sort();
            let mk = |off: usize| -> Vec<TurnAnnotation> {
                fs.iter().enumerate().map(|(i, &f)| ev(
                    if i % 3 == 2 { TurnKind::Backchannel } else { TurnKind::Normal },
                    (f + off) as f64 * 0.04 + 0.013,
                )).collect()
            };
            let a = align_turn_events(&mk(0), &g, 300).unwrap();
            let b = align_turn_events(&mk(k), &g, 300).unwrap();
            let pa: Vec<(usize, TokenId)> = a.tokens.iter().enumerate().filter(|(_, &t)| t != EMP).map(|(i, &t)| (i + k, t)).collect();
            let pb: Vec<(usize, TokenId)> = b.tokens.iter().enumerate().filter(|(_, &t)| t != EMP).map(|(i, &t)| (i, t)).collect();
            proptest::prop_assert_eq!(pa, pb);
        }
    }
}
