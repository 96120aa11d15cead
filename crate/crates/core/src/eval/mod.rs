//! Recognition and turn-taking metrics, perplexity, the response judge and
//! SNR sweeps.

mod judge;
mod ppl;
mod sweep;
mod turns;
mod wer;

pub use judge::{pickup_ratio, Judge, LexicalOverlapJudge, Preference};
pub use ppl::{perplexity, perplexity_from_nll};
pub use sweep::{
    evaluate_side, evaluate_set, sweep_snr, snr_bins, ModelUnderTest, SetResult, SideResult, SweepReport, SweepRow,
};
pub use turns::{
    extract_ftos, fto_histogram, pair_ftos, turn_metrics, FtoHistogram, FtoRecord, GtTurn, TurnMetrics, WINDOW_AFTER,
    WINDOW_BEFORE,
};
pub use wer::{edit_counts, token_error_rate, transcript_words, wer, EditCounts};
