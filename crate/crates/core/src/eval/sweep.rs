use serde::{Deserialize, Serialize};

use super::turns::{extract_ftos, turn_metrics, FtoRecord, GtTurn, TurnMetrics};
use super::wer::{edit_counts, transcript_words, EditCounts};
use crate::corpus::Condition;
use crate::error::Result;
use crate::grid::TokenId;
use crate::model::{Modality, Params};
use crate::orchestrator::{run_session, Backbone, Mode, ScriptedBackbone, SessionConfig, SessionTrace, TransformerModel};
use crate::pipeline::{RenderedSide, World};

/// A trained model together with how it is run.
#[derive(Debug, Clone)]
pub struct ModelUnderTest<'a> {
    pub name: String,
    pub params: &'a Params<f32>,
    pub modality: Modality,
    pub session: SessionConfig,
}

impl ModelUnderTest<'_> {
    pub fn mode(&self) -> Mode {
        if self.params.config.variant.is_unified() {
            Mode::Unified
        } else {
            Mode::Dual
        }
    }
}

#[derive(Debug, Clone)]
pub struct SideResult {
    pub trace: SessionTrace,
    /// Edits over word pieces.
    pub tokens: EditCounts,
    /// Edits over whole words.
    pub words: EditCounts,
    pub records: Vec<FtoRecord>,
}

pub fn evaluate_side(
    world: &World,
    m: &ModelUnderTest<'_>,
    side: &RenderedSide,
    backbone: &mut dyn Backbone,
    seed: u64,
) -> Result<SideResult> {
    let (audio, visual) = m.modality.mask(&side.audio, &side.visual);
    let mut model = TransformerModel::new(m.params, m.session.decoding);
    let trace = run_session(&audio, &visual, &mut model, backbone, m.mode(), &m.session, seed)?;
    let reference: Vec<TokenId> = side.reference_words().concat();
    let hyp = trace.user_tokens();
    let vocab = world.lexicon.vocab();
    let (tokens, words) = if m.mode() == Mode::Dual {
        (
            edit_counts(&reference, &hyp),
            edit_counts(&transcript_words(vocab, &reference), &transcript_words(vocab, &hyp)),
        )
    } else {
        (EditCounts::default(), EditCounts::default())
    };
    let (ends, ftos) = side.turn_ends()?;
    let gt: Vec<GtTurn> = ends.iter().zip(&ftos).map(|(&end, &fto)| GtTurn { end, fto }).collect();
    let records = extract_ftos(&trace, &gt, &world.grid);
    Ok(SideResult { trace, tokens, words, records })
}

#[derive(Debug, Clone)]
pub struct SetResult {
    pub tokens: EditCounts,
    pub words: EditCounts,
    pub records: Vec<FtoRecord>,
    pub turns: TurnMetrics,
    pub n: usize,
    pub sides: Vec<SideResult>,
}

impl SetResult {
    /// Word-piece error rate, pooled over the set; NaN for unified models.
    pub fn token_wer(&self) -> f64 {
        if self.tokens.reference_len == 0 {
            f64::NAN
        } else {
            self.tokens.rate()
        }
    }

    pub fn wer(&self) -> f64 {
        if self.words.reference_len == 0 {
            f64::NAN
        } else {
            self.words.rate()
        }
    }
}

/// Runs every side with the world's scripted backbone and pools the counts.
pub fn evaluate_set(world: &World, m: &ModelUnderTest<'_>, sides: &[RenderedSide], seed: u64) -> Result<SetResult> {
    let mut backbone = ScriptedBackbone::new(world.lexicon.clone());
    let mut tokens = EditCounts::default();
    let mut words = EditCounts::default();
    let mut records = Vec::new();
    let mut out = Vec::with_capacity(sides.len());
    for (i, s) in sides.iter().enumerate() {
        let r = evaluate_side(world, m, s, &mut backbone, seed.wrapping_add(i as u64))?;
        tokens.add(&r.tokens);
        words.add(&r.words);
        records.extend_from_slice(&r.records);
        out.push(r);
    }
    Ok(SetResult { tokens, words, turns: turn_metrics(&records), records, n: sides.len(), sides: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub condition: Condition,
    /// Infinite for the clean condition.
    pub snr: f64,
    pub wer: f64,
    pub token_wer: f64,
    pub response_ratio: f64,
    pub fto_mae: f64,
    pub median_fto: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub condition: Condition,
    pub snr_bins: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub config_hash: String,
    pub seed: u64,
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.6}")
    }
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,condition,snr,wer,response_ratio,fto_mae,median_fto,n,token_wer,config_hash,seed\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.model,
                r.condition.name(),
                num(r.snr),
                num(r.wer),
                num(r.response_ratio),
                num(r.fto_mae),
                num(r.median_fto),
                r.n,
                num(r.token_wer),
                self.config_hash,
                self.seed
            ));
        }
        s
    }
}

/// Evenly spaced SNR points from `lo` to `hi` inclusive.
pub fn snr_bins(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

/// Every model on the same `n` conversations, re-mixed at each SNR point.
/// The clean condition has a single infinite bin.
pub fn sweep_snr(
    world: &World,
    models: &[ModelUnderTest<'_>],
    condition: Condition,
    snrs: &[f64],
    n: usize,
    seed: u64,
    config_hash: &str,
) -> Result<SweepReport> {
    let base = world.eval_set(Condition::Clean, (0.0, 0.0), n, seed)?;
    let bins: Vec<f64> = if condition == Condition::Clean { vec![f64::INFINITY] } else { snrs.to_vec() };
    let mut rows = Vec::new();
    for (b, &snr) in bins.iter().enumerate() {
        let sides = if condition == Condition::Clean {
            base.clone()
        } else {
            world.remix(&base, condition, (snr, snr), seed ^ (b as u64 + 1).wrapping_mul(0x9E37))?
        };
        for m in models {
            let r = evaluate_set(world, m, &sides, seed)?;
            log::info!("sweep {} {} {snr} dB: wer {:.3} rr {:.3}", m.name, condition.name(), r.wer(), r.turns.response_ratio);
            rows.push(SweepRow {
                model: m.name.clone(),
                condition,
                snr,
                wer: r.wer(),
                token_wer: r.token_wer(),
                response_ratio: r.turns.response_ratio,
                fto_mae: r.turns.fto_mae,
                median_fto: r.turns.median_fto,
                n: r.n,
            });
        }
    }
    Ok(SweepReport { condition, snr_bins: bins, rows, config_hash: config_hash.to_string(), seed })
}
