use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::frontend::{AcousticTokenGrid, VisualFeatureGrid, AUDIO_NULL};
use crate::grid::{TokenId, BOS, NULL};

/// Everything the model reads at one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    pub audio: &'a [u16],
    /// `None` when the visual frame is absent.
    pub visual: Option<&'a [f32]>,
    pub u_prev: TokenId,
    pub t_prev: TokenId,
}

/// A teacher-forced input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub audio: AcousticTokenGrid,
    pub visual: VisualFeatureGrid,
    pub u_prev: Vec<TokenId>,
    pub t_prev: Vec<TokenId>,
}

/// One target stream per output head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Targets {
    pub streams: Vec<Vec<TokenId>>,
}

/// History input for a target stream: `<BOS>` then the targets delayed one
/// frame.
pub fn shift_history(targets: &[TokenId]) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(targets.len());
    if !targets.is_empty() {
        out.push(BOS);
        out.extend_from_slice(&targets[..targets.len() - 1]);
    }
    out
}

impl Sequence {
    pub fn frames(&self) -> usize {
        self.u_prev.len()
    }

    pub fn frame(&self, n: usize) -> FrameInput<'_> {
        FrameInput {
            audio: self.audio.frame(n),
            visual: self.visual.is_present(n).then(|| self.visual.frame(n)),
            u_prev: self.u_prev[n],
            t_prev: self.t_prev[n],
        }
    }

    /// Inputs for a dual model from its two target streams.
    pub fn teacher_forced(audio: AcousticTokenGrid, visual: VisualFeatureGrid, u: &[TokenId], t: Option<&[TokenId]>) -> Self {
        let u_prev = shift_history(u);
        let t_prev = match t {
            Some(t) => shift_history(t),
            None => vec![NULL; u.len()],
        };
        Self { audio, visual, u_prev, t_prev }
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let n = self.frames();
        for (what, len) in [("audio", self.audio.frames()), ("visual", self.visual.frames()), ("t_prev", self.t_prev.len())] {
            if len != n {
                return Err(Error::LengthMismatch { what, left: n, right: len });
            }
        }
        if self.audio.codebooks() != cfg.n_codebooks {
            return Err(Error::Validation(format!(
                "audio has {} codebooks, model expects {}",
                self.audio.codebooks(),
                cfg.n_codebooks
            )));
        }
        if self.visual.dims() != cfg.visual_dims {
            return Err(Error::Validation(format!(
                "visual has {} dims, model expects {}",
                self.visual.dims(),
                cfg.visual_dims
            )));
        }
        if let Some(&bad) = self.audio.tokens().iter().find(|&&a| a != AUDIO_NULL && a as usize >= cfg.codebook_size) {
            return Err(Error::OutOfVocabulary { token: bad as u32, size: cfg.codebook_size });
        }
        for &t in self.u_prev.iter().chain(&self.t_prev) {
            if t.index() >= cfg.vocab_size {
                return Err(Error::OutOfVocabulary { token: t.0, size: cfg.vocab_size });
            }
        }
        Ok(())
    }
}

impl FrameInput<'_> {
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.audio.len() != cfg.n_codebooks {
            return Err(Error::Validation(format!("frame has {} codebooks", self.audio.len())));
        }
        if let Some(&a) = self.audio.iter().find(|&&a| a != AUDIO_NULL && a as usize >= cfg.codebook_size) {
            return Err(Error::OutOfVocabulary { token: a as u32, size: cfg.codebook_size });
        }
        if let Some(v) = self.visual {
            if v.len() != cfg.visual_dims {
                return Err(Error::Validation(format!("frame has {} visual dims", v.len())));
            }
        }
        for t in [self.u_prev, self.t_prev] {
            if t.index() >= cfg.vocab_size {
                return Err(Error::OutOfVocabulary { token: t.0, size: cfg.vocab_size });
            }
        }
        Ok(())
    }
}

impl Targets {
    pub fn validate(&self, cfg: &ModelConfig, frames: usize) -> Result<()> {
        let heads = cfg.heads();
        if self.streams.len() != heads.len() {
            return Err(Error::Validation(format!(
                "{} target streams for {} heads",
                self.streams.len(),
                heads.len()
            )));
        }
        for (s, h) in self.streams.iter().zip(&heads) {
            if s.len() != frames {
                return Err(Error::LengthMismatch { what: "target stream", left: frames, right: s.len() });
            }
            if let Some(&bad) = s.iter().find(|&&t| t != NULL && h.class_of(t).is_none()) {
                return Err(Error::OutOfVocabulary { token: bad.0, size: h.classes.len() });
            }
        }
        Ok(())
    }
}
