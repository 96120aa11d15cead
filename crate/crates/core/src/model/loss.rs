use super::config::HeadSpec;
use super::forward::Logits;
use super::real::Real;
use super::sequence::Targets;
use crate::error::{Error, Result};
use crate::grid::{LossWeights, NULL};

#[derive(Debug, Clone)]
pub struct LossOutput<R> {
    pub loss: f64,
    /// Per-head weighted mean, `None` when the stream had no targets.
    pub per_stream: Vec<Option<f64>>,
    /// `∂loss/∂logits`, one `frames × classes` buffer per head.
    pub dlogits: Vec<Vec<R>>,
}

/// Weighted cross-entropy. Each stream's loss is `Σ w·CE` over its non-NULL
/// targets divided by their count; streams without targets drop out and
/// the rest are averaged.
pub fn weighted_ce_loss<R: Real>(
    heads: &[HeadSpec],
    logits: &[Logits<R>],
    targets: &Targets,
    weights: &LossWeights,
) -> Result<LossOutput<R>> {
    if heads.len() != logits.len() || heads.len() != targets.streams.len() {
        return Err(Error::Validation("heads, logits and targets disagree in count".into()));
    }
    let mut per_stream = Vec::with_capacity(heads.len());
    let mut dlogits = Vec::with_capacity(heads.len());
    let mut probs = Vec::new();
    for ((h, lg), tg) in heads.iter().zip(logits).zip(&targets.streams) {
        let c = lg.classes;
        let mut dl = vec![R::zero(); lg.data.len()];
        if tg.len() != lg.frames() {
            return Err(Error::LengthMismatch { what: "targets vs logits", left: tg.len(), right: lg.frames() });
        }
        let count = tg.iter().filter(|&&t| t != NULL).count();
        if count == 0 {
            per_stream.push(None);
            dlogits.push(dl);
            continue;
        }
        let inv_n = 1.0 / count as f64;
        let mut total = 0.0;
        for (t, &tok) in tg.iter().enumerate() {
            if tok == NULL {
                continue;
            }
            let cls = h.class_of(tok).ok_or(Error::OutOfVocabulary { token: tok.0, size: c })?;
            let w = weights.weight(tok, h.stream);
            let row = lg.row(t);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x.f64()));
            probs.clear();
            probs.extend(row.iter().map(|&x| (x.f64() - m).exp()));
            let z: f64 = probs.iter().sum();
            let ce = z.ln() + m - row[cls].f64();
            total += w * ce;
            if w != 0.0 {
                let g = &mut dl[t * c..(t + 1) * c];
                for (k, gk) in g.iter_mut().enumerate() {
                    let onehot = if k == cls { 1.0 } else { 0.0 };
                    *gk = R::of(w * inv_n * (probs[k] / z - onehot));
                }
            }
        }
        per_stream.push(Some(total * inv_n));
        dlogits.push(dl);
    }
    let active = per_stream.iter().flatten().count();
    let loss = if active == 0 { 0.0 } else { per_stream.iter().flatten().sum::<f64>() / active as f64 };
    if active > 1 {
        let s = R::of(1.0 / active as f64);
        dlogits.iter_mut().flatten().for_each(|g| *g *= s);
    }
    Ok(LossOutput { loss, per_stream, dlogits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{StreamKind, EMP, SOT};

    fn uniform(frames: usize, classes: usize) -> Logits<f64> {
        Logits { classes, data: vec![0.0; frames * classes] }
    }

    #[test]
    fn all_null_is_zero() {
        let heads = vec![HeadSpec::turn()];
        let out = weighted_ce_loss(&heads, &[uniform(3, 3)], &Targets { streams: vec![vec![NULL; 3]] }, &LossWeights::default()).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.dlogits[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn uniform_logits_give_log_v() {
        let heads = vec![HeadSpec::full("u", StreamKind::Avsr, 36)];
        let tg = Targets { streams: vec![vec![crate::grid::TokenId(20)]] };
        let out = weighted_ce_loss(&heads, &[uniform(1, 36)], &tg, &LossWeights::default()).unwrap();
        assert!((out.loss - 36f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sot_weighs_25_times_emp() {
        let heads = vec![HeadSpec::turn()];
        let w = LossWeights::default();
        let one = |tok| weighted_ce_loss(&heads, &[uniform(1, 3)], &Targets { streams: vec![vec![tok]] }, &w).unwrap().loss;
        assert!((one(SOT) / one(EMP) - 25.0).abs() < 1e-9);
    }
}
