use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Control tokens. Their ids are fixed and precede every text piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    /// Silence filler.
    Emp,
    /// Start of turn.
    Sot,
    /// Backchannel marker.
    Backchannel,
    /// Missing-modality placeholder, embeds to an exact zero vector.
    Null,
    Asr,
    Trans,
    Ac,
    Bos,
    Eos,
}

impl Special {
    pub const ALL: [Special; 9] = [
        Special::Emp,
        Special::Sot,
        Special::Backchannel,
        Special::Null,
        Special::Asr,
        Special::Trans,
        Special::Ac,
        Special::Bos,
        Special::Eos,
    ];

    pub const fn id(self) -> TokenId {
        TokenId(self as u32)
    }

    pub fn name(self) -> &'static str {
        match self {
            Special::Emp => "<EMP>",
            Special::Sot => "<SOT>",
            Special::Backchannel => "<BC>",
            Special::Null => "<NULL>",
            Special::Asr => "<ASR>",
            Special::Trans => "<TRANS>",
            Special::Ac => "<AC>",
            Special::Bos => "<BOS>",
            Special::Eos => "<EOS>",
        }
    }

    pub fn from_id(id: TokenId) -> Option<Special> {
        Special::ALL.get(id.index()).copied()
    }
}

pub const EMP: TokenId = Special::Emp.id();
pub const SOT: TokenId = Special::Sot.id();
pub const BACKCHANNEL: TokenId = Special::Backchannel.id();
pub const NULL: TokenId = Special::Null.id();
pub const BOS: TokenId = Special::Bos.id();
pub const EOS: TokenId = Special::Eos.id();

/// Prefix marking a word-piece that continues the previous piece.
pub const CONTINUATION: &str = "##";

/// Closed vocabulary: the special tokens followed by the text pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new<I, S>(text_pieces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut pieces: Vec<String> = Special::ALL.iter().map(|s| s.name().to_string()).collect();
        let mut index: HashMap<String, TokenId> = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), TokenId(i as u32)))
            .collect();
        for p in text_pieces {
            let p = p.into();
            if p.is_empty() || p.contains(char::is_whitespace) {
                return Err(Error::Validation(format!("invalid text piece {p:?}")));
            }
            if index.contains_key(&p) {
                return Err(Error::Validation(format!("duplicate piece {p:?}")));
            }
            index.insert(p.clone(), TokenId(pieces.len() as u32));
            pieces.push(p);
        }
        Ok(Self { pieces, index })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn n_text(&self) -> usize {
        self.pieces.len() - Special::ALL.len()
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id.index() < Special::ALL.len()
    }

    pub fn is_text(&self, id: TokenId) -> bool {
        !self.is_special(id) && id.index() < self.pieces.len()
    }

    pub fn text_ids(&self) -> impl Iterator<Item = TokenId> {
        (Special::ALL.len()..self.pieces.len()).map(|i| TokenId(i as u32))
    }

    pub fn piece(&self, id: TokenId) -> Option<&str> {
        self.pieces.get(id.index()).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<TokenId> {
        self.index.get(piece).copied()
    }

    pub fn check(&self, id: TokenId) -> Result<()> {
        if id.index() < self.pieces.len() {
            Ok(())
        } else {
            Err(Error::OutOfVocabulary {
                token: id.0,
                size: self.pieces.len(),
            })
        }
    }

    pub fn is_continuation(&self, id: TokenId) -> bool {
        self.is_text(id) && self.pieces[id.index()].starts_with(CONTINUATION)
    }

    /// Splits a whitespace-separated piece string (`"sun ##day"`) into ids.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|p| {
                self.id(p)
                    .ok_or_else(|| Error::Validation(format!("unknown piece {p:?}")))
            })
            .collect()
    }

    /// Joins ids back into the whitespace-separated piece form.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&i| self.piece(i).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Drops control tokens and merges continuation pieces into whole words.
    pub fn collapse_words(&self, ids: &[TokenId]) -> Vec<String> {
        let mut words: Vec<String> = Vec::new();
        for &id in ids {
            if !self.is_text(id) {
                continue;
            }
            let p = &self.pieces[id.index()];
            match p.strip_prefix(CONTINUATION) {
                Some(rest) if !words.is_empty() => words.last_mut().unwrap().push_str(rest),
                Some(rest) => words.push(rest.to_string()),
                None => words.push(p.clone()),
            }
        }
        words
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.pieces {
            h.update(p.as_bytes());
            h.update([0u8]);
        }
        hex::encode(&h.finalize()[..8])
    }
}
