use crate::error::Result;
use crate::grid::{TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordRole {
    /// Spoken in turns.
    Content,
    /// Short acknowledgement spoken over the other side.
    Backchannel,
    /// Used only in audio-caption targets.
    Caption,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconWord {
    pub pieces: Vec<String>,
    pub role: WordRole,
    /// Lip-shape class; several words share each class.
    pub viseme: u8,
}

/// Closed word inventory of the synthetic world.
#[derive(Debug, Clone)]
pub struct Lexicon {
    words: Vec<LexiconWord>,
    vocab: Vocabulary,
    word_pieces: Vec<Vec<TokenId>>,
    n_visemes: u8,
}

const CONTENT: &[&str] = &[
    "red", "blue", "green", "gold", "cat", "dog", "fish", "bird", "run", "jump", "swim", "fly",
    "sun ##day", "to ##day", "hap ##py", "yel ##low",
];
const BACKCHANNEL: &[&str] = &["yeah", "mm ##hmm"];
const CAPTION: &[&str] = &["white", "pink", "brown", "babble", "noise"];

impl Default for Lexicon {
    fn default() -> Self {
        Self::standard(4)
    }
}

impl Lexicon {
    /// The built-in 16-word world with `n_visemes` lip classes.
    pub fn standard(n_visemes: u8) -> Self {
        let mut words = Vec::new();
        for (i, w) in CONTENT.iter().enumerate() {
            words.push(LexiconWord {
                pieces: w.split(' ').map(String::from).collect(),
                role: WordRole::Content,
                viseme: (i % n_visemes as usize) as u8,
            });
        }
        for (i, w) in BACKCHANNEL.iter().enumerate() {
            words.push(LexiconWord {
                pieces: w.split(' ').map(String::from).collect(),
                role: WordRole::Backchannel,
                viseme: (i % n_visemes as usize) as u8,
            });
        }
        for w in CAPTION {
            words.push(LexiconWord {
                pieces: vec![w.to_string()],
                role: WordRole::Caption,
                viseme: 0,
            });
        }
        Self::from_words(words, n_visemes).expect("built-in lexicon is valid")
    }

    pub fn from_words(words: Vec<LexiconWord>, n_visemes: u8) -> Result<Self> {
        // words may share pieces ("sun ##day", "to ##day")
        let mut pieces: Vec<String> = Vec::new();
        for p in words.iter().flat_map(|w| w.pieces.iter()) {
            if !pieces.contains(p) {
                pieces.push(p.clone());
            }
        }
        let vocab = Vocabulary::new(pieces)?;
        let word_pieces = words
            .iter()
            .map(|w| w.pieces.iter().map(|p| vocab.id(p).expect("piece registered")).collect())
            .collect();
        Ok(Self {
            words,
            vocab,
            word_pieces,
            n_visemes,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, idx: usize) -> &LexiconWord {
        &self.words[idx]
    }

    pub fn pieces(&self, idx: usize) -> &[TokenId] {
        &self.word_pieces[idx]
    }

    pub fn n_visemes(&self) -> u8 {
        self.n_visemes
    }

    pub fn with_role(&self, role: WordRole) -> Vec<usize> {
        (0..self.words.len()).filter(|&i| self.words[i].role == role).collect()
    }

    /// Word index whose piece sequence is exactly `pieces`.
    pub fn lookup(&self, pieces: &[TokenId]) -> Option<usize> {
        self.word_pieces.iter().position(|p| p.as_slice() == pieces)
    }

    pub fn surface(&self, idx: usize) -> String {
        self.words[idx].pieces.join(" ")
    }

    /// Deterministic reply to a user turn: the first three words, each mapped
    /// through a fixed permutation of the content words.
    pub fn respond(&self, user_words: &[usize]) -> Vec<usize> {
        let content = self.with_role(WordRole::Content);
        let n = content.len();
        user_words
            .iter()
            .filter_map(|w| content.iter().position(|c| c == w))
            .take(3)
            .map(|pos| content[(pos * 5 + 3) % n])
            .collect()
    }

    /// [`Lexicon::respond`] over piece ids.
    pub fn respond_pieces(&self, user_pieces: &[TokenId]) -> Vec<TokenId> {
        let words = self.segment(user_pieces);
        self.respond(&words)
            .into_iter()
            .flat_map(|w| self.pieces(w).to_vec())
            .collect()
    }

    /// Greedy segmentation of a piece stream into lexicon words; unknown or
    /// orphaned pieces are skipped.
    pub fn segment(&self, pieces: &[TokenId]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < pieces.len() {
            let mut best: Option<(usize, usize)> = None;
            for (w, wp) in self.word_pieces.iter().enumerate() {
                if pieces[i..].starts_with(wp) && best.map_or(true, |(_, l)| wp.len() > l) {
                    best = Some((w, wp.len()));
                }
            }
            match best {
                Some((w, l)) => {
                    out.push(w);
                    i += l;
                }
                None => i += 1,
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_lexicon_shape() {
        let lx = Lexicon::default();
        assert_eq!(lx.with_role(WordRole::Content).len(), 16);
        assert_eq!(lx.vocab().n_text(), 27);
        let sunday = lx.lookup(&lx.vocab().encode("sun ##day").unwrap()).unwrap();
        assert_eq!(lx.surface(sunday), "sun ##day");
    }

    #[test]
    fn response_is_a_permutation_image() {
        let lx = Lexicon::default();
        let content = lx.with_role(WordRole::Content);
        let mut images: Vec<usize> = content.iter().map(|&c| lx.respond(&[c])[0]).collect();
        images.sort();
        assert_eq!(images, content);
        assert_eq!(lx.respond(&content[..5]).len(), 3);
        assert!(lx.respond(&[]).is_empty());
    }

    #[test]
    fn respond_pieces_matches_word_form() {
        let lx = Lexicon::default();
        let words = vec![12, 0, 13];
        let pieces: Vec<TokenId> = words.iter().flat_map(|&w| lx.pieces(w).to_vec()).collect();
        let expect: Vec<TokenId> = lx.respond(&words).into_iter().flat_map(|w| lx.pieces(w).to_vec()).collect();
        assert_eq!(lx.respond_pieces(&pieces), expect);
    }
}
