//! Row kernels shared by the batch forward pass and the cached step, so both
//! perform identical arithmetic.

use super::real::Real;

const NORM_EPS: f64 = 1e-6;

/// Dot product with eight independent accumulators.
#[inline]
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [R::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = R::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += a·x`.
#[inline]
pub fn axpy<R: Real>(a: R, x: &[R], y: &mut [R]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out[j] = W[j]·x (+ b[j])` with `W` stored `out × in`.
pub fn matvec<R: Real>(w: &[R], b: Option<&[R]>, x: &[R], out: &mut [R]) {
    let n_in = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        let v = dot(&w[j * n_in..(j + 1) * n_in], x);
        *o = match b {
            Some(b) => v + b[j],
            None => v,
        };
    }
}

/// Backward of [`matvec`]: accumulates `dW += dy ⊗ x`, `db += dy`, `dx += Wᵀ dy`.
pub fn matvec_back<R: Real>(
    w: &[R],
    x: &[R],
    dy: &[R],
    dw: &mut [R],
    db: Option<&mut [R]>,
    dx: Option<&mut [R]>,
) {
    let n_in = x.len();
    for (j, &g) in dy.iter().enumerate() {
        if g != R::zero() {
            axpy(g, x, &mut dw[j * n_in..(j + 1) * n_in]);
        }
    }
    if let Some(db) = db {
        for (b, &g) in db.iter_mut().zip(dy) {
            *b += g;
        }
    }
    if let Some(dx) = dx {
        for (j, &g) in dy.iter().enumerate() {
            if g != R::zero() {
                axpy(g, &w[j * n_in..(j + 1) * n_in], dx);
            }
        }
    }
}

/// RMS normalization with gain. Returns the inverse RMS.
pub fn rmsnorm<R: Real>(x: &[R], g: &[R], out: &mut [R]) -> R {
    let ms = dot(x, x) / R::of(x.len() as f64);
    let r = R::one() / (ms + R::of(NORM_EPS)).sqrt();
    for ((o, &xi), &gi) in out.iter_mut().zip(x).zip(g) {
        *o = xi * r * gi;
    }
    r
}

pub fn rmsnorm_back<R: Real>(x: &[R], g: &[R], r: R, dy: &[R], dx: &mut [R], dg: &mut [R]) {
    let n = R::of(x.len() as f64);
    let mut s = R::zero();
    for i in 0..x.len() {
        s += g[i] * dy[i] * x[i];
        dg[i] += dy[i] * x[i] * r;
    }
    let c = r * r * r * s / n;
    for i in 0..x.len() {
        dx[i] += r * g[i] * dy[i] - c * x[i];
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

#[inline]
pub fn gelu<R: Real>(x: R) -> R {
    let inner = R::of(GELU_K) * (x + R::of(0.044715) * x * x * x);
    R::of(0.5) * x * (R::one() + inner.tanh())
}

#[inline]
pub fn gelu_grad<R: Real>(x: R) -> R {
    let k = R::of(GELU_K);
    let c = R::of(0.044715);
    let inner = k * (x + c * x * x * x);
    let t = inner.tanh();
    R::of(0.5) * (R::one() + t) + R::of(0.5) * x * (R::one() - t * t) * k * (R::one() + R::of(3.0) * c * x * x)
}

/// Per-pair rotation tables for rotary embeddings.
#[derive(Debug, Clone)]
pub struct Rope {
    inv_freq: Vec<f64>,
}

impl Rope {
    pub fn new(head_dim: usize, base: f64) -> Self {
        let half = head_dim / 2;
        Self {
            inv_freq: (0..half).map(|i| base.powf(-(2.0 * i as f64) / head_dim as f64)).collect(),
        }
    }

    /// Rotates every head of `x` (concatenated heads) to position `pos`.
    /// `inverse` applies the transpose rotation (used by backward).
    pub fn apply<R: Real>(&self, x: &mut [R], head_dim: usize, pos: usize, inverse: bool) {
        for head in x.chunks_mut(head_dim) {
            for (i, &f) in self.inv_freq.iter().enumerate() {
                let theta = pos as f64 * f;
                let (s, c) = theta.sin_cos();
                let (s, c) = (R::of(if inverse { -s } else { s }), R::of(c));
                let (a, b) = (head[2 * i], head[2 * i + 1]);
                head[2 * i] = a * c - b * s;
                head[2 * i + 1] = a * s + b * c;
            }
        }
    }
}

/// In-place softmax, returns nothing; max-subtracted.
pub fn softmax_in_place<R: Real>(x: &mut [R]) {
    let m = x.iter().copied().fold(R::neg_infinity(), R::max);
    let mut z = R::zero();
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in x.iter_mut() {
        *v /= z;
    }
}

/// One causal attention row for all heads.
///
/// `keys`/`values` hold `rows` consecutive rows of width `d`; the query
/// attends to all of them. Probabilities are written to `probs`
/// (`n_heads × rows`), the output to `out` (`d`).
pub fn attend_row<R: Real>(
    q: &[R],
    keys: &[R],
    values: &[R],
    rows: usize,
    n_heads: usize,
    probs: &mut [R],
    out: &mut [R],
) {
    let d = q.len();
    let dh = d / n_heads;
    let scale = R::one() / R::of(dh as f64).sqrt();
    out.fill(R::zero());
    for h in 0..n_heads {
        let qh = &q[h * dh..(h + 1) * dh];
        let p = &mut probs[h * rows..(h + 1) * rows];
        for j in 0..rows {
            p[j] = dot(qh, &keys[j * d + h * dh..j * d + (h + 1) * dh]) * scale;
        }
        softmax_in_place(p);
        let oh = &mut out[h * dh..(h + 1) * dh];
        for j in 0..rows {
            axpy(p[j], &values[j * d + h * dh..j * d + (h + 1) * dh], oh);
        }
    }
}

/// Backward of [`attend_row`] given its probabilities.
#[allow(clippy::too_many_arguments)]
pub fn attend_row_back<R: Real>(
    q: &[R],
    keys: &[R],
    values: &[R],
    rows: usize,
    n_heads: usize,
    probs: &[R],
    dout: &[R],
    dq: &mut [R],
    dkeys: &mut [R],
    dvalues: &mut [R],
    scratch: &mut Vec<R>,
) {
    let d = q.len();
    let dh = d / n_heads;
    let scale = R::one() / R::of(dh as f64).sqrt();
    scratch.resize(rows, R::zero());
    for h in 0..n_heads {
        let p = &probs[h * rows..(h + 1) * rows];
        let doh = &dout[h * dh..(h + 1) * dh];
        let mut s = R::zero();
        for j in 0..rows {
            let dp = dot(doh, &values[j * d + h * dh..j * d + (h + 1) * dh]);
            scratch[j] = dp;
            s += p[j] * dp;
            axpy(p[j], doh, &mut dvalues[j * d + h * dh..j * d + (h + 1) * dh]);
        }
        let qh = &q[h * dh..(h + 1) * dh];
        for j in 0..rows {
            let ds = p[j] * (scratch[j] - s) * scale;
            if ds != R::zero() {
                axpy(ds, &keys[j * d + h * dh..j * d + (h + 1) * dh], &mut dq[h * dh..(h + 1) * dh]);
                axpy(ds, qh, &mut dkeys[j * d + h * dh..j * d + (h + 1) * dh]);
            }
        }
    }
}
