use crate::corpus::Lexicon;
use crate::error::Result;
use crate::frontend::AUDIO_NULL;
use crate::grid::{Special, TokenId, BOS, EMP, EOS, NULL};
use crate::model::{decode_greedy, step_with_cache, DecodeCache, FrameInput, Params};

/// Response generator driven by the orchestrator. All calls come from the
/// session loop, one at a time.
pub trait Backbone {
    /// Streams one recognized user token.
    fn ingest_user_token(&mut self, token: TokenId);
    /// Response for the current turn. The orchestrator emits it one token
    /// per frame and drops the rest if the user takes the floor.
    fn on_turn(&mut self) -> Vec<TokenId>;
    fn reset(&mut self);
}

/// Repeats what the user said in the current turn.
#[derive(Debug, Default, Clone)]
pub struct EchoBackbone {
    heard: Vec<TokenId>,
}

impl Backbone for EchoBackbone {
    fn ingest_user_token(&mut self, token: TokenId) {
        self.heard.push(token);
    }

    fn on_turn(&mut self) -> Vec<TokenId> {
        std::mem::take(&mut self.heard)
    }

    fn reset(&mut self) {
        self.heard.clear();
    }
}

/// Emits the synthetic world's deterministic reply to what was heard.
#[derive(Debug, Clone)]
pub struct ScriptedBackbone {
    lexicon: Lexicon,
    heard: Vec<TokenId>,
}

impl ScriptedBackbone {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon, heard: Vec::new() }
    }
}

impl Backbone for ScriptedBackbone {
    fn ingest_user_token(&mut self, token: TokenId) {
        self.heard.push(token);
    }

    fn on_turn(&mut self) -> Vec<TokenId> {
        let reply = self.lexicon.respond_pieces(&self.heard);
        self.heard.clear();
        reply
    }

    fn reset(&mut self) {
        self.heard.clear();
    }
}

/// Text-only continuation with a small model of this crate: the heard turn
/// is fed as history and the reply decoded greedily until `<EOS>`.
#[derive(Debug, Clone)]
pub struct TinyLmBackbone {
    params: Params<f32>,
    heard: Vec<TokenId>,
    max_tokens: usize,
}

impl TinyLmBackbone {
    pub fn new(params: Params<f32>, max_tokens: usize) -> Self {
        Self { params, heard: Vec::new(), max_tokens }
    }

    fn continue_text(&self) -> Result<Vec<TokenId>> {
        let cfg = &self.params.config;
        let audio = vec![AUDIO_NULL; cfg.n_codebooks];
        let head = &self.params.heads[0];
        let mut cache = DecodeCache::new(&self.params);
        let mut prev = BOS;
        let mut next = EMP;
        for &t in self.heard.iter() {
            step(&mut cache, &audio, prev, &self.params)?;
            prev = t;
        }
        let mut out = Vec::new();
        while out.len() < self.max_tokens {
            let logits = step(&mut cache, &audio, prev, &self.params)?;
            next = head.classes[decode_greedy(&logits)];
            if next == EOS || next == EMP || Special::from_id(next).is_some() {
                break;
            }
            out.push(next);
            prev = next;
        }
        log::trace!("tinylm reply {out:?} (stopped on {next:?})");
        Ok(out)
    }
}

fn step(cache: &mut DecodeCache<f32>, audio: &[u16], prev: TokenId, p: &Params<f32>) -> Result<Vec<f32>> {
    let inp = FrameInput { audio, visual: None, u_prev: prev, t_prev: NULL };
    Ok(step_with_cache(cache, &inp, p)?.logits.swap_remove(0))
}

impl Backbone for TinyLmBackbone {
    fn ingest_user_token(&mut self, token: TokenId) {
        self.heard.push(token);
    }

    fn on_turn(&mut self) -> Vec<TokenId> {
        let reply = self.continue_text().unwrap_or_else(|e| {
            log::warn!("tinylm backbone failed: {e}");
            Vec::new()
        });
        self.heard.clear();
        reply
    }

    fn reset(&mut self) {
        self.heard.clear();
    }
}
