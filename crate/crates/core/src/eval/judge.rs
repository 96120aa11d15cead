use std::collections::HashMap;

use crate::grid::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preference {
    Model,
    GroundTruth,
    Tie,
}

/// Compares a model response with the ground-truth one.
pub trait Judge {
    fn judge(&self, gt_response: &[TokenId], model_response: &[TokenId]) -> Preference;
}

/// Desk-scale stand-in: token-overlap F1 against the world's scripted reply.
/// It is not a language-model judge and does not measure fluency.
#[derive(Debug, Clone)]
pub struct LexicalOverlapJudge {
    pub reference: Vec<TokenId>,
}

fn overlap_f1(a: &[TokenId], b: &[TokenId]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<TokenId, usize> = HashMap::new();
    for &t in b {
        *counts.entry(t).or_default() += 1;
    }
    let mut hit = 0usize;
    for t in a {
        if let Some(c) = counts.get_mut(t).filter(|c| **c > 0) {
            *c -= 1;
            hit += 1;
        }
    }
    let (p, r) = (hit as f64 / a.len() as f64, hit as f64 / b.len() as f64);
    if hit == 0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Judge for LexicalOverlapJudge {
    fn judge(&self, gt_response: &[TokenId], model_response: &[TokenId]) -> Preference {
        if gt_response == model_response {
            return Preference::Tie;
        }
        if model_response.is_empty() {
            return Preference::GroundTruth;
        }
        let m = overlap_f1(model_response, &self.reference);
        let g = overlap_f1(gt_response, &self.reference);
        if m > g {
            Preference::Model
        } else if g > m {
            Preference::GroundTruth
        } else {
            Preference::Tie
        }
    }
}

/// Fraction of pairs where the model wins; ties count half.
pub fn pickup_ratio(judge: &dyn Judge, pairs: &[(Vec<TokenId>, Vec<TokenId>)]) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    let score: f64 = pairs
        .iter()
        .map(|(g, m)| match judge.judge(g, m) {
            Preference::Model => 1.0,
            Preference::Tie => 0.5,
            Preference::GroundTruth => 0.0,
        })
        .sum();
    score / pairs.len() as f64
}
