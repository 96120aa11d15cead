use crate::error::{Error, Result};
use crate::grid::{TokenId, EMP, NULL};
use crate::model::{forward_sequence, softmax, Params, Sequence};

/// `exp` of the mean negative log-likelihood.
pub fn perplexity_from_nll(nll: &[f64]) -> f64 {
    if nll.is_empty() {
        return f64::NAN;
    }
    (nll.iter().sum::<f64>() / nll.len() as f64).exp()
}

/// Teacher-forced perplexity of `targets` under head `head`, over the
/// frames whose target is neither `<EMP>` nor `<NULL>`.
pub fn perplexity(params: &Params<f32>, seq: &Sequence, targets: &[TokenId], head: usize) -> Result<f64> {
    if targets.len() != seq.frames() {
        return Err(Error::LengthMismatch { what: "perplexity targets", left: seq.frames(), right: targets.len() });
    }
    let spec = params.heads.get(head).ok_or_else(|| Error::Validation(format!("no head {head}")))?;
    let fwd = forward_sequence(params, seq)?;
    let mut nll = Vec::new();
    for (n, &t) in targets.iter().enumerate() {
        if t == EMP || t == NULL {
            continue;
        }
        let c = spec
            .class_of(t)
            .ok_or(Error::OutOfVocabulary { token: t.0, size: spec.classes.len() })?;
        nll.push(-softmax(fwd.logits[head].row(n))[c].ln());
    }
    Ok(perplexity_from_nll(&nll))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{AcousticTokenGrid, VisualFeatureGrid};
    use crate::model::{shift_history, ModelConfig, Variant};

    fn uniform_model() -> Params<f32> {
        let mut c = ModelConfig::small(36, 16, 1, 2);
        c.variant = Variant::Unified;
        Params::zeros(&c).unwrap()
    }

    fn seq_for(p: &Params<f32>, r: &[TokenId]) -> Sequence {
        let c = &p.config;
        Sequence {
            audio: AcousticTokenGrid::null(r.len(), c.n_codebooks, c.codebook_size),
            visual: VisualFeatureGrid::null(r.len(), c.visual_dims),
            u_prev: shift_history(r),
            t_prev: vec![NULL; r.len()],
        }
    }

    #[test]
    fn uniform_model_has_vocab_perplexity_regardless_of_fillers() {
        let p = uniform_model();
        let r = vec![TokenId(9), TokenId(14), TokenId(20)];
        let a = perplexity(&p, &seq_for(&p, &r), &r, 0).unwrap();
        assert!((a - 36.0).abs() < 1e-4, "{a}");
        let padded = vec![EMP, TokenId(9), EMP, EMP, TokenId(14), TokenId(20), EMP];
        let b = perplexity(&p, &seq_for(&p, &padded), &padded, 0).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn certain_predictions_give_one() {
        assert_eq!(perplexity_from_nll(&[0.0, 0.0, 0.0]), 1.0);
        assert!(perplexity_from_nll(&[]).is_nan());
    }
}
