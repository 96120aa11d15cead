use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::{Lexicon, WordRole};
use super::{SideScript, SyntheticConversation};
use crate::error::{Error, Result};
use crate::grid::{TurnAnnotation, TurnKind, WordTiming, FRAME_SECONDS};

/// Offset distribution of non-overlapping floor transfers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FtoDistribution {
    Constant { seconds: f64 },
    /// Uniform over `width` seconds, placed so that the median of the whole
    /// corpus (overlaps included) equals `median`.
    Uniform { median: f64, width: f64 },
}

impl Default for FtoDistribution {
    fn default() -> Self {
        FtoDistribution::Uniform {
            median: 1.5,
            width: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConversationParams {
    pub n_turns: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that the listener backchannels during a turn.
    pub backchannel_rate: f64,
    /// Probability that a floor transfer overlaps the previous speaker.
    pub overlap_rate: f64,
    pub fto: FtoDistribution,
    /// Silence range between consecutive words of one turn, seconds.
    pub word_gap: (f64, f64),
    pub lead_in: f64,
    /// Width of the uniform delay added to `lead_in` before the first turn.
    pub lead_in_jitter: f64,
    pub tail: f64,
}

impl Default for ConversationParams {
    fn default() -> Self {
        Self {
            n_turns: 4,
            min_words: 2,
            max_words: 5,
            backchannel_rate: 0.15,
            overlap_rate: 0.1,
            fto: FtoDistribution::default(),
            word_gap: (0.04, 0.2),
            lead_in: 0.3,
            lead_in_jitter: 0.5,
            tail: 1.5,
        }
    }
}

impl ConversationParams {
    fn validate(&self) -> Result<()> {
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::Config("word count range is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.backchannel_rate) || !(0.0..0.5).contains(&self.overlap_rate) {
            return Err(Error::Config("rates out of range".into()));
        }
        if let FtoDistribution::Uniform { median, width } = self.fto {
            let (lo, _) = self.uniform_bounds(median, width);
            if lo < 0.0 {
                return Err(Error::Config("fto distribution would produce negative normal offsets".into()));
            }
        }
        Ok(())
    }

    fn uniform_bounds(&self, median: f64, width: f64) -> (f64, f64) {
        // overall median m sits at quantile q of the positive part
        let q = (0.5 - self.overlap_rate) / (1.0 - self.overlap_rate);
        let lo = median - q * width;
        (lo, lo + width)
    }

    fn sample_fto(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.fto {
            FtoDistribution::Constant { seconds } => seconds,
            FtoDistribution::Uniform { median, width } => {
                let (lo, hi) = self.uniform_bounds(median, width);
                rng.gen_range(lo..hi)
            }
        }
    }
}

fn ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// Nominal duration of a lexicon word: 4..8 frames, two more per extra piece.
pub(crate) fn word_duration(lexicon: &Lexicon, idx: usize) -> f64 {
    let h = (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 59;
    let frames = 4 + (h % 5) as usize + 2 * (lexicon.pieces(idx).len() - 1);
    frames as f64 * FRAME_SECONDS
}

fn place_words(
    lexicon: &Lexicon,
    words: &[usize],
    start: f64,
    params: &ConversationParams,
    rng: &mut ChaCha8Rng,
) -> Vec<WordTiming> {
    let mut t = start;
    let mut out = Vec::with_capacity(words.len());
    for (k, &w) in words.iter().enumerate() {
        if k > 0 {
            t = ms(t + rng.gen_range(params.word_gap.0..=params.word_gap.1));
        }
        let end = ms(t + word_duration(lexicon, w));
        out.push(WordTiming {
            pieces: lexicon.pieces(w).to_vec(),
            t_start: t,
            t_end: end,
        });
        t = end;
    }
    out
}

/// Alternating-floor dialogue. Side 0 opens; every side-1 turn is the
/// lexicon's deterministic reply to the user turn before it.
pub fn gen_conversation(seed: u64, params: &ConversationParams, lexicon: &Lexicon) -> Result<SyntheticConversation> {
    params.validate()?;
    let content = lexicon.with_role(WordRole::Content);
    if content.is_empty() {
        return Err(Error::Config("lexicon has no content words".into()));
    }
    let backchannels = lexicon.with_role(WordRole::Backchannel);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sides = [SideScript::default(), SideScript::default()];
    sides[0].voice_seed = rng.gen();
    sides[1].voice_seed = rng.gen();
    let mut fto_list = Vec::new();

    let mut last_user_turn: Vec<usize> = Vec::new();
    // (start, end, first-word end, last-word start) of the previous turn
    let mut prev: Option<(f64, f64, f64, f64)> = None;
    let mut turn_spans: Vec<(usize, f64, f64, f64)> = Vec::new();
    for k in 0..params.n_turns {
        let side = k % 2;
        let words: Vec<usize> = if side == 0 || last_user_turn.is_empty() {
            let n = rng.gen_range(params.min_words..=params.max_words);
            (0..n).map(|_| content[rng.gen_range(0..content.len())]).collect()
        } else {
            let r = lexicon.respond(&last_user_turn);
            if r.is_empty() {
                vec![content[0]]
            } else {
                r
            }
        };
        if side == 0 {
            last_user_turn = words.clone();
        }
        let own_end = sides[side].end_time();
        let (start, kind) = match prev {
            None => (ms(params.lead_in + rng.gen_range(0.0..params.lead_in_jitter.max(1e-9))), TurnKind::Normal),
            Some((p_start, p_end, _, p_last_start)) => {
                let overlap = rng.gen_bool(params.overlap_rate);
                let fto = if overlap {
                    -rng.gen_range(0.05..0.6)
                } else {
                    params.sample_fto(&mut rng)
                };
                // an overlap never begins before the other side's last word
                let earliest = p_last_start.max(p_start) + 0.04;
                let mut t = ms((p_end + fto).max(earliest)).max(ms(own_end + 0.04));
                if overlap && t >= p_end {
                    t = ms(p_end - 0.04).max(earliest);
                }
                let kind = if t < p_end { TurnKind::Overlapping } else { TurnKind::Normal };
                fto_list.push(t - p_end);
                (t, kind)
            }
        };
        let placed = place_words(lexicon, &words, start, params, &mut rng);
        let end = placed.last().map(|w| w.t_end).unwrap_or(start);
        let first_end = placed.first().map(|w| w.t_end).unwrap_or(start);
        let last_start = placed.last().map(|w| w.t_start).unwrap_or(start);
        sides[side].turns.push(TurnAnnotation {
            kind,
            t_turn: start,
            speaker: side as u8,
        });
        sides[side].words.extend(placed);
        turn_spans.push((side, start, first_end, last_start));
        prev = Some((start, end, first_end, last_start));
    }

    // listener backchannels fall strictly inside the speaker's turn
    if !backchannels.is_empty() {
        for &(side, _, first_end, last_start) in &turn_spans {
            if !rng.gen_bool(params.backchannel_rate) {
                continue;
            }
            let listener = 1 - side;
            let w = backchannels[rng.gen_range(0..backchannels.len())];
            let dur = word_duration(lexicon, w);
            let lo = first_end + 0.05;
            let hi = last_start - dur;
            if hi <= lo {
                continue;
            }
            let t = ms(rng.gen_range(lo..hi));
            let end = ms(t + dur);
            let clash = sides[listener]
                .words
                .iter()
                .any(|x| x.t_start < end + 0.04 && t < x.t_end + 0.04);
            if clash {
                continue;
            }
            sides[listener].words.push(WordTiming {
                pieces: lexicon.pieces(w).to_vec(),
                t_start: t,
                t_end: end,
            });
            sides[listener].turns.push(TurnAnnotation {
                kind: TurnKind::Backchannel,
                t_turn: t,
                speaker: listener as u8,
            });
        }
    }
    for s in sides.iter_mut() {
        s.words.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        s.turns.sort_by(|a, b| a.t_turn.total_cmp(&b.t_turn));
    }
    let end = sides.iter().map(SideScript::end_time).fold(0.0, f64::max);
    let duration = if params.n_turns == 0 { 0.0 } else { ms(end + params.tail) };
    Ok(SyntheticConversation {
        id: format!("conv-{seed:016x}"),
        sides,
        duration,
        fto_list,
    })
}

/// A single-speaker utterance for the monadic stage-1 tasks.
pub fn gen_utterance(seed: u64, n_words: (usize, usize), lexicon: &Lexicon) -> Result<SyntheticConversation> {
    let params = ConversationParams {
        n_turns: 1,
        min_words: n_words.0,
        max_words: n_words.1,
        backchannel_rate: 0.0,
        lead_in: 0.1,
        tail: 0.3,
        ..Default::default()
    };
    let mut c = gen_conversation(seed, &params, lexicon)?;
    c.id = format!("utt-{seed:016x}");
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_turns_is_empty() {
        let lx = Lexicon::default();
        let c = gen_conversation(7, &ConversationParams { n_turns: 0, ..Default::default() }, &lx).unwrap();
        assert!(c.sides.iter().all(|s| s.words.is_empty() && s.turns.is_empty()));
        assert!(c.fto_list.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let lx = Lexicon::default();
        let p = ConversationParams::default();
        assert_eq!(gen_conversation(42, &p, &lx).unwrap(), gen_conversation(42, &p, &lx).unwrap());
        assert_ne!(gen_conversation(42, &p, &lx).unwrap(), gen_conversation(43, &p, &lx).unwrap());
    }

    #[test]
    fn constant_fto_is_respected() {
        let lx = Lexicon::default();
        let p = ConversationParams {
            n_turns: 8,
            overlap_rate: 0.0,
            fto: FtoDistribution::Constant { seconds: 1.5 },
            ..Default::default()
        };
        for seed in 0..20 {
            let c = gen_conversation(seed, &p, &lx).unwrap();
            for opp in c.turn_opportunities(0).unwrap() {
                assert!((opp.fto - 1.5).abs() < 1.5e-3, "fto {}", opp.fto);
            }
            for f in &c.fto_list {
                assert!((f - 1.5).abs() < 1.5e-3);
            }
        }
    }

    #[test]
    fn turn_kinds_match_offset_sign() {
        let lx = Lexicon::default();
        let p = ConversationParams {
            n_turns: 10,
            overlap_rate: 0.3,
            ..Default::default()
        };
        for seed in 0..30 {
            let c = gen_conversation(seed, &p, &lx).unwrap();
            for side in 0..2 {
                let other = &c.sides[1 - side];
                for ev in c.sides[side].turns.iter().filter(|e| e.kind != TurnKind::Backchannel) {
                    let prev_end = other
                        .words
                        .iter()
                        .filter(|w| w.t_start < ev.t_turn)
                        .map(|w| w.t_end)
                        .fold(f64::NEG_INFINITY, f64::max);
                    if prev_end.is_finite() {
                        match ev.kind {
                            TurnKind::Normal => assert!(ev.t_turn >= prev_end - 1e-9),
                            TurnKind::Overlapping => assert!(ev.t_turn < prev_end),
                            TurnKind::Backchannel => unreachable!(),
                        }
                    }
                }
                let w = &c.sides[side].words;
                assert!(w.windows(2).all(|p| p[0].t_start <= p[1].t_start && p[0].t_end <= p[1].t_start));
            }
        }
    }

    #[test]
    fn replies_follow_the_pairing() {
        let lx = Lexicon::default();
        let p = ConversationParams {
            backchannel_rate: 0.0,
            ..Default::default()
        };
        let c = gen_conversation(5, &p, &lx).unwrap();
        let user = c.sides[0].turn_segments();
        let agent = c.sides[1].turn_segments();
        for (u, a) in user.iter().zip(&agent) {
            let up: Vec<_> = u.words.iter().flat_map(|w| w.pieces.clone()).collect();
            let ap: Vec<_> = a.words.iter().flat_map(|w| w.pieces.clone()).collect();
            assert_eq!(lx.respond_pieces(&up), ap);
        }
    }

    #[test]
    fn empty_lexicon_is_an_error() {
        let lx = Lexicon::from_words(vec![], 4).unwrap();
        assert!(gen_conversation(1, &ConversationParams::default(), &lx).is_err());
    }
}
