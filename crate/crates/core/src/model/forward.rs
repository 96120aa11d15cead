use super::kernels::{attend_row, attend_row_back, axpy, gelu, gelu_grad, matvec, matvec_back, rmsnorm, rmsnorm_back, Rope};
use super::params::{LayerIx, Params};
use super::real::Real;
use super::sequence::{FrameInput, Sequence};
use crate::error::Result;
use crate::frontend::AUDIO_NULL;
use crate::grid::NULL;

/// Per-frame logits of one head, `frames × classes`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<R> {
    pub classes: usize,
    pub data: Vec<R>,
}

impl<R: Real> Logits<R> {
    pub fn frames(&self) -> usize {
        self.data.len() / self.classes.max(1)
    }

    pub fn row(&self, t: usize) -> &[R] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }
}

/// Scratch rows for one block evaluation.
#[derive(Debug, Clone)]
pub(super) struct RowBufs<R> {
    pub vis: Vec<R>,
    pub tmp: Vec<R>,
}

impl<R: Real> RowBufs<R> {
    pub fn new(p: &Params<R>) -> Self {
        Self {
            vis: vec![R::zero(); p.config.visual_dims],
            tmp: vec![R::zero(); p.config.d_model],
        }
    }
}

/// `e_n`: summed codebook embeddings through `L_A`, visual through `L_V`,
/// plus the shared token embedding of both history tokens. NULL inputs add
/// nothing. Writes the pre-projection audio sum to `audio_sum`; returns
/// whether any codebook was present.
pub(super) fn embed_row<R: Real>(
    p: &Params<R>,
    inp: &FrameInput<'_>,
    bufs: &mut RowBufs<R>,
    audio_sum: &mut [R],
    out: &mut [R],
) -> bool {
    let d = p.config.d_model;
    let lay = &p.layout;
    out.fill(R::zero());
    audio_sum.fill(R::zero());
    let mut any = false;
    for (i, &a) in inp.audio.iter().enumerate() {
        if a != AUDIO_NULL {
            let a = a as usize;
            axpy(R::one(), &p.t(lay.audio_emb[i])[a * d..(a + 1) * d], audio_sum);
            any = true;
        }
    }
    if any {
        matvec(p.t(lay.l_a), None, audio_sum, &mut bufs.tmp);
        axpy(R::one(), &bufs.tmp, out);
    }
    if let Some(v) = inp.visual {
        for (b, &x) in bufs.vis.iter_mut().zip(v) {
            *b = R::of(x as f64);
        }
        matvec(p.t(lay.l_v), None, &bufs.vis, &mut bufs.tmp);
        axpy(R::one(), &bufs.tmp, out);
    }
    for tok in [inp.u_prev, inp.t_prev] {
        if tok != NULL {
            let k = tok.index();
            axpy(R::one(), &p.t(lay.tok_emb)[k * d..(k + 1) * d], out);
        }
    }
    any
}

/// Pre-norm and rotated query/key/value rows for one block.
#[allow(clippy::too_many_arguments)]
pub(super) fn qkv_row<R: Real>(
    p: &Params<R>,
    ix: &LayerIx,
    rope: &Rope,
    pos: usize,
    x: &[R],
    n1: &mut [R],
    q: &mut [R],
    k: &mut [R],
    v: &mut [R],
) -> R {
    let r1 = rmsnorm(x, p.t(ix.norm1), n1);
    matvec(p.t(ix.wq), None, n1, q);
    matvec(p.t(ix.wk), None, n1, k);
    matvec(p.t(ix.wv), None, n1, v);
    let dh = p.config.head_dim();
    rope.apply(q, dh, pos, false);
    rope.apply(k, dh, pos, false);
    r1
}

/// Outputs of the second half of a block row.
pub(super) struct TailOut<'a, R> {
    pub probs: &'a mut [R],
    pub att: &'a mut [R],
    pub h: &'a mut [R],
    pub n2: &'a mut [R],
    pub a1: &'a mut [R],
    pub g1: &'a mut [R],
    pub out: &'a mut [R],
}

/// Attention over `rows` cached keys/values, output projection, residual,
/// then the MLP. Returns the inverse RMS of the second norm.
#[allow(clippy::too_many_arguments)]
pub(super) fn tail_row<R: Real>(
    p: &Params<R>,
    ix: &LayerIx,
    x: &[R],
    q: &[R],
    keys: &[R],
    values: &[R],
    rows: usize,
    o: TailOut<'_, R>,
) -> R {
    attend_row(q, keys, values, rows, p.config.n_heads, o.probs, o.att);
    matvec(p.t(ix.wo), None, o.att, o.h);
    for (h, &xi) in o.h.iter_mut().zip(x) {
        *h += xi;
    }
    let r2 = rmsnorm(o.h, p.t(ix.norm2), o.n2);
    matvec(p.t(ix.w1), Some(p.t(ix.b1)), o.n2, o.a1);
    for (g, &a) in o.g1.iter_mut().zip(o.a1.iter()) {
        *g = gelu(a);
    }
    matvec(p.t(ix.w2), Some(p.t(ix.b2)), o.g1, o.out);
    for (y, &h) in o.out.iter_mut().zip(o.h.iter()) {
        *y += h;
    }
    r2
}

/// Final norm and every head's logits for one row.
pub(super) fn head_rows<R: Real>(p: &Params<R>, x: &[R], nf: &mut [R], logits: &mut [&mut [R]]) -> R {
    let rf = rmsnorm(x, p.t(p.layout.norm_f), nf);
    for (h, out) in logits.iter_mut().enumerate() {
        let (w, b) = p.layout.heads[h];
        matvec(p.t(w), Some(p.t(b)), nf, out);
    }
    rf
}

#[derive(Debug, Clone)]
struct LayerTape<R> {
    x_in: Vec<R>,
    n1: Vec<R>,
    r1: Vec<R>,
    q: Vec<R>,
    k: Vec<R>,
    v: Vec<R>,
    probs: Vec<Vec<R>>,
    att: Vec<R>,
    h: Vec<R>,
    n2: Vec<R>,
    r2: Vec<R>,
    a1: Vec<R>,
    g1: Vec<R>,
}

/// Teacher-forced pass over a whole sequence, with the activations needed
/// by [`backward`].
#[derive(Debug, Clone)]
pub struct Forward<R> {
    pub frames: usize,
    pub logits: Vec<Logits<R>>,
    /// Fused input embeddings `e_n`, `frames × d`.
    pub embeddings: Vec<R>,
    /// Top-layer outputs `z_n` after the final norm, `frames × d`.
    pub top: Vec<R>,
    audio_sum: Vec<R>,
    audio_present: Vec<bool>,
    layers: Vec<LayerTape<R>>,
    x_top: Vec<R>,
    rf: Vec<R>,
}

/// First key row visible from frame `t`.
pub(super) fn window_start(t: usize, max_context: usize) -> usize {
    (t + 1).saturating_sub(max_context)
}

/// Causal forward pass. Logits at frame `n` depend only on frames `≤ n`.
pub fn forward_sequence<R: Real>(p: &Params<R>, seq: &Sequence) -> Result<Forward<R>> {
    seq.validate(&p.config)?;
    let cfg = &p.config;
    let (n, d, f) = (seq.frames(), cfg.d_model, cfg.d_ff);
    let rope = Rope::new(cfg.head_dim(), cfg.rope_base);
    let z = || vec![R::zero(); n * d];
    let mut bufs = RowBufs::new(p);
    let mut embeddings = z();
    let mut audio_sum = z();
    let mut audio_present = vec![false; n];
    let mut layers: Vec<LayerTape<R>> = (0..cfg.n_layers)
        .map(|_| LayerTape {
            x_in: z(),
            n1: z(),
            r1: vec![R::zero(); n],
            q: z(),
            k: z(),
            v: z(),
            probs: Vec::with_capacity(n),
            att: z(),
            h: z(),
            n2: z(),
            r2: vec![R::zero(); n],
            a1: vec![R::zero(); n * f],
            g1: vec![R::zero(); n * f],
        })
        .collect();
    let mut x_top = z();
    let mut top = z();
    let mut rf = vec![R::zero(); n];
    let mut logits: Vec<Logits<R>> = p
        .heads
        .iter()
        .map(|h| Logits { classes: h.classes.len(), data: vec![R::zero(); n * h.classes.len()] })
        .collect();
    let mut x = vec![R::zero(); d];
    let mut y = vec![R::zero(); d];
    for t in 0..n {
        let row = t * d..(t + 1) * d;
        audio_present[t] = embed_row(p, &seq.frame(t), &mut bufs, &mut audio_sum[row.clone()], &mut embeddings[row.clone()]);
        x.copy_from_slice(&embeddings[row.clone()]);
        let start = window_start(t, cfg.max_context);
        for (l, ix) in p.layout.layers.iter().enumerate() {
            let tp = &mut layers[l];
            tp.x_in[row.clone()].copy_from_slice(&x);
            tp.r1[t] = qkv_row(
                p,
                ix,
                &rope,
                t,
                &x,
                &mut tp.n1[row.clone()],
                &mut tp.q[row.clone()],
                &mut tp.k[row.clone()],
                &mut tp.v[row.clone()],
            );
            let rows = t + 1 - start;
            let mut probs = vec![R::zero(); cfg.n_heads * rows];
            tp.r2[t] = tail_row(
                p,
                ix,
                &x,
                &tp.q[row.clone()],
                &tp.k[start * d..(t + 1) * d],
                &tp.v[start * d..(t + 1) * d],
                rows,
                TailOut {
                    probs: &mut probs,
                    att: &mut tp.att[row.clone()],
                    h: &mut tp.h[row.clone()],
                    n2: &mut tp.n2[row.clone()],
                    a1: &mut tp.a1[t * f..(t + 1) * f],
                    g1: &mut tp.g1[t * f..(t + 1) * f],
                    out: &mut y,
                },
            );
            tp.probs.push(probs);
            std::mem::swap(&mut x, &mut y);
        }
        x_top[row.clone()].copy_from_slice(&x);
        let mut outs: Vec<&mut [R]> = logits
            .iter_mut()
            .map(|lg| {
                let c = lg.classes;
                &mut lg.data[t * c..(t + 1) * c]
            })
            .collect();
        rf[t] = head_rows(p, &x, &mut top[row.clone()], &mut outs);
    }
    Ok(Forward { frames: n, logits, embeddings, top, audio_sum, audio_present, layers, x_top, rf })
}

/// Exact gradients of a scalar loss given `dlogits` (one `frames × classes`
/// buffer per head). Accumulates into `grads`.
pub fn backward<R: Real>(p: &Params<R>, seq: &Sequence, fwd: &Forward<R>, dlogits: &[Vec<R>], grads: &mut Params<R>) {
    let cfg = &p.config;
    let (n, d, f, nh) = (fwd.frames, cfg.d_model, cfg.d_ff, cfg.n_heads);
    let lay = &p.layout;
    let rope = Rope::new(cfg.head_dim(), cfg.rope_base);
    let mut dx = vec![R::zero(); n * d];
    {
        let mut dnf = vec![R::zero(); d];
        for t in 0..n {
            let row = t * d..(t + 1) * d;
            dnf.fill(R::zero());
            let mut any = false;
            for (h, dl) in dlogits.iter().enumerate() {
                let c = fwd.logits[h].classes;
                let g = &dl[t * c..(t + 1) * c];
                if g.iter().all(|&v| v == R::zero()) {
                    continue;
                }
                any = true;
                let (w, b) = lay.heads[h];
                let (dw, db) = two_mut(&mut grads.tensors, w, b);
                matvec_back(p.t(w), &fwd.top[row.clone()], g, dw, Some(db), Some(&mut dnf));
            }
            if any {
                rmsnorm_back(
                    &fwd.x_top[row.clone()],
                    p.t(lay.norm_f),
                    fwd.rf[t],
                    &dnf,
                    &mut dx[row.clone()],
                    &mut grads.tensors[lay.norm_f].data,
                );
            }
        }
    }
    let mut dh = vec![R::zero(); n * d];
    let mut datt = vec![R::zero(); n * d];
    let mut dq = vec![R::zero(); n * d];
    let mut dk = vec![R::zero(); n * d];
    let mut dv = vec![R::zero(); n * d];
    let mut dn = vec![R::zero(); d];
    let mut dg1 = vec![R::zero(); f];
    let mut scratch = Vec::new();
    for (l, ix) in lay.layers.iter().enumerate().rev() {
        let tp = &fwd.layers[l];
        dh.copy_from_slice(&dx);
        datt.fill(R::zero());
        dq.fill(R::zero());
        dk.fill(R::zero());
        dv.fill(R::zero());
        for t in 0..n {
            let row = t * d..(t + 1) * d;
            let fr = t * f..(t + 1) * f;
            // MLP
            dg1.fill(R::zero());
            {
                let (dw2, db2) = two_mut(&mut grads.tensors, ix.w2, ix.b2);
                matvec_back(p.t(ix.w2), &tp.g1[fr.clone()], &dx[row.clone()], dw2, Some(db2), Some(&mut dg1));
            }
            for (g, &a) in dg1.iter_mut().zip(&tp.a1[fr.clone()]) {
                *g *= gelu_grad(a);
            }
            dn.fill(R::zero());
            {
                let (dw1, db1) = two_mut(&mut grads.tensors, ix.w1, ix.b1);
                matvec_back(p.t(ix.w1), &tp.n2[row.clone()], &dg1, dw1, Some(db1), Some(&mut dn));
            }
            rmsnorm_back(
                &tp.h[row.clone()],
                p.t(ix.norm2),
                tp.r2[t],
                &dn,
                &mut dh[row.clone()],
                &mut grads.tensors[ix.norm2].data,
            );
            matvec_back(
                p.t(ix.wo),
                &tp.att[row.clone()],
                &dh[row.clone()],
                &mut grads.tensors[ix.wo].data,
                None,
                Some(&mut datt[row.clone()]),
            );
        }
        for t in 0..n {
            let row = t * d..(t + 1) * d;
            let start = window_start(t, cfg.max_context);
            let rows = t + 1 - start;
            attend_row_back(
                &tp.q[row.clone()],
                &tp.k[start * d..(t + 1) * d],
                &tp.v[start * d..(t + 1) * d],
                rows,
                nh,
                &tp.probs[t],
                &datt[row.clone()],
                &mut dq[row.clone()],
                &mut dk[start * d..(t + 1) * d],
                &mut dv[start * d..(t + 1) * d],
                &mut scratch,
            );
        }
        // through q/k/v into the first norm; dh then holds the block-input gradient
        for t in 0..n {
            let row = t * d..(t + 1) * d;
            rope_dh(&rope, cfg.head_dim(), t, &mut dq[row.clone()], &mut dk[row.clone()]);
            dn.fill(R::zero());
            matvec_back(p.t(ix.wq), &tp.n1[row.clone()], &dq[row.clone()], &mut grads.tensors[ix.wq].data, None, Some(&mut dn));
            matvec_back(p.t(ix.wk), &tp.n1[row.clone()], &dk[row.clone()], &mut grads.tensors[ix.wk].data, None, Some(&mut dn));
            matvec_back(p.t(ix.wv), &tp.n1[row.clone()], &dv[row.clone()], &mut grads.tensors[ix.wv].data, None, Some(&mut dn));
            rmsnorm_back(
                &tp.x_in[row.clone()],
                p.t(ix.norm1),
                tp.r1[t],
                &dn,
                &mut dh[row.clone()],
                &mut grads.tensors[ix.norm1].data,
            );
        }
        std::mem::swap(&mut dx, &mut dh);
    }
    // embeddings
    let mut ds = vec![R::zero(); d];
    let mut vis = vec![R::zero(); cfg.visual_dims];
    for t in 0..n {
        let row = t * d..(t + 1) * d;
        let de = &dx[row.clone()];
        let inp = seq.frame(t);
        if fwd.audio_present[t] {
            ds.fill(R::zero());
            matvec_back(p.t(lay.l_a), &fwd.audio_sum[row.clone()], de, &mut grads.tensors[lay.l_a].data, None, Some(&mut ds));
            for (i, &a) in inp.audio.iter().enumerate() {
                if a != AUDIO_NULL {
                    let a = a as usize;
                    axpy(R::one(), &ds, &mut grads.tensors[lay.audio_emb[i]].data[a * d..(a + 1) * d]);
                }
            }
        }
        if let Some(v) = inp.visual {
            for (b, &x) in vis.iter_mut().zip(v) {
                *b = R::of(x as f64);
            }
            matvec_back(p.t(lay.l_v), &vis, de, &mut grads.tensors[lay.l_v].data, None, None);
        }
        for tok in [inp.u_prev, inp.t_prev] {
            if tok != NULL {
                let k = tok.index();
                axpy(R::one(), de, &mut grads.tensors[lay.tok_emb].data[k * d..(k + 1) * d]);
            }
        }
    }
}

fn rope_dh<R: Real>(rope: &Rope, head_dim: usize, pos: usize, dq: &mut [R], dk: &mut [R]) {
    rope.apply(dq, head_dim, pos, true);
    rope.apply(dk, head_dim, pos, true);
}

fn two_mut<R>(ts: &mut [super::params::Tensor<R>], a: usize, b: usize) -> (&mut [R], &mut [R]) {
    assert!(a < b);
    let (lo, hi) = ts.split_at_mut(b);
    (&mut lo[a].data, &mut hi[0].data)
}
