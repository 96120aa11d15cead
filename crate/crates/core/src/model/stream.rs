use super::forward::{embed_row, head_rows, qkv_row, tail_row, RowBufs, TailOut};
use super::kernels::Rope;
use super::params::Params;
use super::real::Real;
use super::sequence::FrameInput;
use crate::error::Result;

/// Activations of one streamed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StepActivation<R> {
    /// Fused input embedding `e_n`.
    pub e: Vec<R>,
    /// Normalized top-layer output `z_n`.
    pub z: Vec<R>,
    /// One logit vector per head.
    pub logits: Vec<Vec<R>>,
}

/// Per-layer keys and values of the frames still inside the attention
/// window. Belongs to one session.
#[derive(Debug, Clone)]
pub struct DecodeCache<R> {
    pos: usize,
    /// Rows currently held per layer.
    rows: usize,
    keys: Vec<Vec<R>>,
    values: Vec<Vec<R>>,
    rope: Rope,
    d: usize,
    window: usize,
}

impl<R: Real> DecodeCache<R> {
    pub fn new(p: &Params<R>) -> Self {
        let cfg = &p.config;
        let cap = 2 * cfg.max_context.min(4096) * cfg.d_model;
        Self {
            pos: 0,
            rows: 0,
            keys: (0..cfg.n_layers).map(|_| Vec::with_capacity(cap)).collect(),
            values: (0..cfg.n_layers).map(|_| Vec::with_capacity(cap)).collect(),
            rope: Rope::new(cfg.head_dim(), cfg.rope_base),
            d: cfg.d_model,
            window: cfg.max_context,
        }
    }

    /// Index of the next frame.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn cached_rows(&self) -> usize {
        self.rows.min(self.window)
    }

    pub fn reset(&mut self) {
        self.pos = 0;
        self.rows = 0;
        self.keys.iter_mut().for_each(Vec::clear);
        self.values.iter_mut().for_each(Vec::clear);
    }

    fn compact(&mut self) {
        // keep the buffers bounded: drop rows that fell out of the window
        if self.rows >= 2 * self.window {
            let drop = (self.rows - self.window) * self.d;
            for buf in self.keys.iter_mut().chain(self.values.iter_mut()) {
                buf.drain(..drop);
            }
            self.rows = self.window;
        }
    }
}

/// `e_n` for a single frame.
pub fn embed_step<R: Real>(p: &Params<R>, inp: &FrameInput<'_>) -> Result<Vec<R>> {
    inp.validate(&p.config)?;
    let d = p.config.d_model;
    let mut bufs = RowBufs::new(p);
    let mut sum = vec![R::zero(); d];
    let mut e = vec![R::zero(); d];
    embed_row(p, inp, &mut bufs, &mut sum, &mut e);
    Ok(e)
}

/// Advances the session by one frame. Performs the same arithmetic as
/// [`forward_sequence`](super::forward_sequence) at that position.
pub fn step_with_cache<R: Real>(
    cache: &mut DecodeCache<R>,
    inp: &FrameInput<'_>,
    p: &Params<R>,
) -> Result<StepActivation<R>> {
    inp.validate(&p.config)?;
    let cfg = &p.config;
    let (d, f) = (cfg.d_model, cfg.d_ff);
    cache.compact();
    let t = cache.pos;
    let mut bufs = RowBufs::new(p);
    let mut sum = vec![R::zero(); d];
    let mut e = vec![R::zero(); d];
    embed_row(p, inp, &mut bufs, &mut sum, &mut e);
    let mut x = e.clone();
    let mut y = vec![R::zero(); d];
    let (mut n1, mut q, mut k, mut v) = (vec![R::zero(); d], vec![R::zero(); d], vec![R::zero(); d], vec![R::zero(); d]);
    let (mut att, mut h, mut n2) = (vec![R::zero(); d], vec![R::zero(); d], vec![R::zero(); d]);
    let (mut a1, mut g1) = (vec![R::zero(); f], vec![R::zero(); f]);
    let rows_after = cache.rows + 1;
    let visible = rows_after.min(cache.window);
    let mut probs = vec![R::zero(); cfg.n_heads * visible];
    for (l, ix) in p.layout.layers.iter().enumerate() {
        qkv_row(p, ix, &cache.rope, t, &x, &mut n1, &mut q, &mut k, &mut v);
        cache.keys[l].extend_from_slice(&k);
        cache.values[l].extend_from_slice(&v);
        let from = (rows_after - visible) * d;
        tail_row(
            p,
            ix,
            &x,
            &q,
            &cache.keys[l][from..],
            &cache.values[l][from..],
            visible,
            TailOut { probs: &mut probs, att: &mut att, h: &mut h, n2: &mut n2, a1: &mut a1, g1: &mut g1, out: &mut y },
        );
        std::mem::swap(&mut x, &mut y);
    }
    cache.rows = rows_after;
    cache.pos += 1;
    let mut z = vec![R::zero(); d];
    let mut logits: Vec<Vec<R>> = p.heads.iter().map(|hd| vec![R::zero(); hd.classes.len()]).collect();
    {
        let mut outs: Vec<&mut [R]> = logits.iter_mut().map(|l| l.as_mut_slice()).collect();
        head_rows(p, &x, &mut z, &mut outs);
    }
    Ok(StepActivation { e, z, logits })
}
