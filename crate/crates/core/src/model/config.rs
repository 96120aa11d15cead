use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{StreamKind, TokenId, BACKCHANNEL, EMP, SOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Text head `U` plus turn-event head `T`.
    Dual,
    /// One interleaved head `R`.
    Unified,
    /// Unified, trained without start-of-turn tokens.
    UnifiedNoSot,
}

impl Variant {
    pub fn is_unified(self) -> bool {
        !matches!(self, Variant::Dual)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(Variant::Dual),
            "unified" => Ok(Variant::Unified),
            "unified-no-sot" | "unified_no_sot" => Ok(Variant::UnifiedNoSot),
            _ => Err(Error::Validation(format!("unknown variant '{s}'"))),
        }
    }
}

/// One output head: a name, the stream kind its loss weights follow, and the
/// vocabulary ids it predicts (class `c` = `classes[c]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub stream: StreamKind,
    pub classes: Vec<TokenId>,
}

impl HeadSpec {
    pub fn full(name: &str, stream: StreamKind, vocab_size: usize) -> Self {
        Self {
            name: name.into(),
            stream,
            classes: (0..vocab_size as u32).map(TokenId).collect(),
        }
    }

    pub fn turn() -> Self {
        Self {
            name: "t".into(),
            stream: StreamKind::Turn,
            classes: vec![EMP, SOT, BACKCHANNEL],
        }
    }

    pub fn class_of(&self, token: TokenId) -> Option<usize> {
        // full heads are the identity map
        if self.classes.get(token.index()) == Some(&token) {
            return Some(token.index());
        }
        self.classes.iter().position(|&c| c == token)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Text pieces plus special tokens.
    pub vocab_size: usize,
    pub n_codebooks: usize,
    pub codebook_size: usize,
    pub visual_dims: usize,
    /// Attention window in frames.
    pub max_context: usize,
    pub variant: Variant,
    pub init_std: f64,
    pub rope_base: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_ff: 512,
            vocab_size: 36,
            n_codebooks: 16,
            codebook_size: 64,
            visual_dims: 16,
            max_context: 1500,
            variant: Variant::Dual,
            init_std: 0.02,
            rope_base: 10_000.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if (self.d_model / self.n_heads) % 2 != 0 {
            return bad("head dimension must be even for rotary embeddings".into());
        }
        if self.vocab_size <= SOT.index().max(BACKCHANNEL.index()) {
            return bad(format!("vocab_size {} too small", self.vocab_size));
        }
        if self.n_codebooks == 0 || self.codebook_size == 0 || self.max_context == 0 || self.d_ff == 0 {
            return bad("sizes must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn heads(&self) -> Vec<HeadSpec> {
        match self.variant {
            Variant::Dual => vec![HeadSpec::full("u", StreamKind::Avsr, self.vocab_size), HeadSpec::turn()],
            Variant::Unified | Variant::UnifiedNoSot => {
                vec![HeadSpec::full("r", StreamKind::Unified, self.vocab_size)]
            }
        }
    }

    /// A config dimensioned for a token vocabulary of `vocab_size`.
    pub fn small(vocab_size: usize, d_model: usize, n_layers: usize, n_heads: usize) -> Self {
        Self {
            d_model,
            n_layers,
            n_heads,
            d_ff: 4 * d_model,
            vocab_size,
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_layouts() {
        let c = ModelConfig::default();
        let h = c.heads();
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].classes.len(), 36);
        assert_eq!(h[1].class_of(SOT), Some(1));
        assert_eq!(h[1].class_of(TokenId(12)), None);
        let u = ModelConfig { variant: Variant::Unified, ..c };
        assert_eq!(u.heads().len(), 1);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig { n_heads: 3, ..Default::default() }.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }
}
