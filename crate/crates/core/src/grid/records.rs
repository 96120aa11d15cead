use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use super::{TurnAnnotation, TurnKind, WordTiming};
use crate::corpus::{SideScript, SyntheticConversation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRecord {
    /// Whitespace-separated word pieces, e.g. `"sun ##day"`.
    pub w: String,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub kind: TurnKind,
    pub t_turn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideRecord {
    pub words: Vec<WordRecord>,
    pub turns: Vec<TurnRecord>,
    #[serde(default)]
    pub voice_seed: u64,
}

/// One line of a conversation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub id: String,
    pub sides: Vec<SideRecord>,
    #[serde(default)]
    pub duration: f64,
    #[serde(default)]
    pub fto_list: Vec<f64>,
}

impl ConversationRecord {
    pub fn from_conversation(conv: &SyntheticConversation, vocab: &Vocabulary) -> Self {
        Self {
            id: conv.id.clone(),
            sides: conv
                .sides
                .iter()
                .map(|s| SideRecord {
                    words: s
                        .words
                        .iter()
                        .map(|w| WordRecord {
                            w: vocab.decode(&w.pieces),
                            t_start: w.t_start,
                            t_end: w.t_end,
                        })
                        .collect(),
                    turns: s
                        .turns
                        .iter()
                        .map(|t| TurnRecord {
                            kind: t.kind,
                            t_turn: t.t_turn,
                        })
                        .collect(),
                    voice_seed: s.voice_seed,
                })
                .collect(),
            duration: conv.duration,
            fto_list: conv.fto_list.clone(),
        }
    }

    pub fn to_conversation(&self, vocab: &Vocabulary) -> Result<SyntheticConversation> {
        if self.sides.len() != 2 {
            return Err(Error::Data(format!(
                "conversation {} has {} sides, expected 2",
                self.id,
                self.sides.len()
            )));
        }
        let mut sides = Vec::with_capacity(2);
        for (i, s) in self.sides.iter().enumerate() {
            let words = s
                .words
                .iter()
                .map(|w| {
                    Ok(WordTiming {
                        pieces: vocab.encode(&w.w)?,
                        t_start: w.t_start,
                        t_end: w.t_end,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let turns = s
                .turns
                .iter()
                .map(|t| TurnAnnotation {
                    kind: t.kind,
                    t_turn: t.t_turn,
                    speaker: i as u8,
                })
                .collect();
            sides.push(SideScript {
                words,
                turns,
                voice_seed: s.voice_seed,
            });
        }
        let duration = if self.duration > 0.0 {
            self.duration
        } else {
            sides
                .iter()
                .flat_map(|s| s.words.iter().map(|w| w.t_end))
                .fold(0.0, f64::max)
        };
        let [a, b]: [SideScript; 2] = sides.try_into().expect("two sides");
        Ok(SyntheticConversation {
            id: self.id.clone(),
            sides: [a, b],
            duration,
            fto_list: self.fto_list.clone(),
        })
    }
}

pub fn write_conversations<W: Write>(
    mut out: W,
    convs: &[SyntheticConversation],
    vocab: &Vocabulary,
) -> Result<()> {
    for c in convs {
        serde_json::to_writer(&mut out, &ConversationRecord::from_conversation(c, vocab))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_conversations<R: BufRead>(input: R, vocab: &Vocabulary) -> Result<Vec<SyntheticConversation>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ConversationRecord = serde_json::from_str(&line)?;
        out.push(rec.to_conversation(vocab)?);
    }
    Ok(out)
}

/// Vocabulary manifest written next to serialized token streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabManifest {
    pub hash: String,
    pub tokens: Vec<String>,
}

impl VocabManifest {
    pub fn of(vocab: &Vocabulary) -> Self {
        Self {
            hash: vocab.hash(),
            tokens: vocab.pieces().to_vec(),
        }
    }

    pub fn to_vocabulary(&self) -> Result<Vocabulary> {
        let n_special = super::Special::ALL.len();
        if self.tokens.len() < n_special {
            return Err(Error::Data("vocabulary manifest is truncated".into()));
        }
        for (i, s) in super::Special::ALL.iter().enumerate() {
            if self.tokens[i] != s.name() {
                return Err(Error::Data(format!("manifest token {i} is {:?}, expected {}", self.tokens[i], s.name())));
            }
        }
        let v = Vocabulary::new(self.tokens[n_special..].iter().cloned())?;
        if v.hash() != self.hash {
            return Err(Error::Data("vocabulary manifest hash mismatch".into()));
        }
        Ok(v)
    }
}
