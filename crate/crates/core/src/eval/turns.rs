use serde::{Deserialize, Serialize};

use crate::grid::FrameGrid;
use crate::orchestrator::SessionTrace;

/// Lower edge of the pairing window and of the human-typical range.
pub const WINDOW_BEFORE: f64 = 2.0;
/// Upper edge of the human-typical range.
pub const WINDOW_AFTER: f64 = 3.0;

/// A ground-truth user turn end and the true offset of the reply to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtTurn {
    pub end: f64,
    pub fto: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtoRecord {
    pub gt_turn_end: f64,
    pub gt_fto: f64,
    /// `None` when the agent did not respond.
    pub agent_sot: Option<f64>,
    pub fto: Option<f64>,
}

/// Pairs each turn end with the earliest unused agent start in
/// `[end - 2 s, next end)`. `gt` must be sorted by end time.
pub fn pair_ftos(agent_starts: &[f64], gt: &[GtTurn]) -> Vec<FtoRecord> {
    debug_assert!(gt.windows(2).all(|w| w[0].end <= w[1].end), "gt turns must be sorted");
    let mut starts: Vec<f64> = agent_starts.to_vec();
    starts.sort_by(f64::total_cmp);
    let mut used = vec![false; starts.len()];
    gt.iter()
        .enumerate()
        .map(|(k, g)| {
            let hi = gt.get(k + 1).map_or(f64::INFINITY, |n| n.end);
            let lo = g.end - WINDOW_BEFORE;
            let hit = starts.iter().enumerate().find(|&(i, &s)| !used[i] && s >= lo - 1e-9 && s < hi);
            match hit {
                Some((i, &s)) => {
                    used[i] = true;
                    FtoRecord { gt_turn_end: g.end, gt_fto: g.fto, agent_sot: Some(s), fto: Some(s - g.end) }
                }
                None => FtoRecord { gt_turn_end: g.end, gt_fto: g.fto, agent_sot: None, fto: None },
            }
        })
        .collect()
}

pub fn extract_ftos(trace: &SessionTrace, gt: &[GtTurn], grid: &FrameGrid) -> Vec<FtoRecord> {
    pair_ftos(&trace.agent_turn_starts(grid), gt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnMetrics {
    pub response_ratio: f64,
    /// NaN when nothing was answered.
    pub fto_mae: f64,
    pub median_fto: f64,
    pub n_no_response: usize,
    pub n: usize,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Response ratio counts answers inside `[-2, 3]` s over all turns; MAE and
/// median use every answered turn.
pub fn turn_metrics(records: &[FtoRecord]) -> TurnMetrics {
    let answered: Vec<&FtoRecord> = records.iter().filter(|r| r.fto.is_some()).collect();
    let in_range = answered
        .iter()
        .filter(|r| (-WINDOW_BEFORE..=WINDOW_AFTER).contains(&r.fto.unwrap()))
        .count();
    let mut ftos: Vec<f64> = answered.iter().map(|r| r.fto.unwrap()).collect();
    let mae = if answered.is_empty() {
        f64::NAN
    } else {
        answered.iter().map(|r| (r.fto.unwrap() - r.gt_fto).abs()).sum::<f64>() / answered.len() as f64
    };
    TurnMetrics {
        response_ratio: if records.is_empty() { 0.0 } else { in_range as f64 / records.len() as f64 },
        fto_mae: mae,
        median_fto: median(&mut ftos),
        n_no_response: records.len() - answered.len(),
        n: records.len(),
    }
}

/// Offsets binned at 0.5 s from -2 s to 10 s, plus under- and overflow. The
/// overflow bucket also holds turns without a response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtoHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow_or_none: usize,
}

pub fn fto_histogram(records: &[FtoRecord]) -> FtoHistogram {
    let edges: Vec<f64> = (0..=24).map(|i| -2.0 + 0.5 * i as f64).collect();
    let mut h = FtoHistogram { counts: vec![0; edges.len() - 1], edges, underflow: 0, overflow_or_none: 0 };
    for r in records {
        match r.fto {
            None => h.overflow_or_none += 1,
            Some(f) if f < -2.0 => h.underflow += 1,
            Some(f) if f > 10.0 => h.overflow_or_none += 1,
            Some(f) => {
                let i = (((f + 2.0) / 0.5).floor() as usize).min(h.counts.len() - 1);
                h.counts[i] += 1;
            }
        }
    }
    h
}

impl FtoHistogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,count\n");
        s.push_str(&format!("<-2.0,{}\n", self.underflow));
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("[{:.1};{:.1}),{c}\n", self.edges[i], self.edges[i + 1]));
        }
        s.push_str(&format!(">10 / no-response,{}\n", self.overflow_or_none));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SOT;
    use crate::orchestrator::{DialogueState, EventKind, TraceEvent};
    use proptest::prelude::*;

    fn rec(fto: Option<f64>) -> FtoRecord {
        FtoRecord { gt_turn_end: 5.0, gt_fto: 1.0, agent_sot: fto.map(|f| 5.0 + f), fto }
    }

    #[test]
    fn fto_from_a_trace() {
        let mut tr = SessionTrace::default();
        tr.push(TraceEvent::token(287, EventKind::TurnToken, SOT));
        tr.push(TraceEvent::state(287, DialogueState::Speaking, false));
        let r = extract_ftos(&tr, &[GtTurn { end: 10.0, fto: 1.5 }], &FrameGrid::default());
        assert!((r[0].fto.unwrap() - 1.48).abs() < 1e-9);
        let r = extract_ftos(&SessionTrace::default(), &[GtTurn { end: 10.0, fto: 1.5 }, GtTurn { end: 20.0, fto: 1.0 }], &FrameGrid::default());
        assert!(r.iter().all(|r| r.fto.is_none()));
    }

    #[test]
    fn early_start_is_an_overlap() {
        let r = pair_ftos(&[9.5], &[GtTurn { end: 10.0, fto: -0.5 }]);
        assert!((r[0].fto.unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn each_start_is_used_once() {
        let gt = [GtTurn { end: 1.0, fto: 0.5 }, GtTurn { end: 1.5, fto: 0.5 }];
        let r = pair_ftos(&[1.2], &gt);
        assert!(r[0].fto.is_some() && r[1].fto.is_none());
    }

    #[test]
    fn ratio_counts_the_window_only() {
        let m = turn_metrics(&[rec(Some(-3.0)), rec(Some(0.5)), rec(Some(2.9)), rec(Some(4.0))]);
        assert_eq!(m.response_ratio, 0.5);
        let m = turn_metrics(&[rec(None), rec(None)]);
        assert_eq!(m.response_ratio, 0.0);
        assert!(m.median_fto.is_nan() && m.fto_mae.is_nan());
        assert_eq!(m.n_no_response, 2);
    }

    #[test]
    fn ground_truth_against_itself_has_zero_error() {
        let gt = [GtTurn { end: 2.0, fto: 1.2 }, GtTurn { end: 7.0, fto: -0.3 }, GtTurn { end: 12.0, fto: 2.0 }];
        let starts: Vec<f64> = gt.iter().map(|g| g.end + g.fto).collect();
        let m = turn_metrics(&pair_ftos(&starts, &gt));
        assert!(m.fto_mae < 1e-12);
        assert_eq!(m.response_ratio, 1.0);
    }

    #[test]
    fn histogram_buckets() {
        let h = fto_histogram(&[rec(Some(-2.5)), rec(Some(0.2)), rec(Some(0.7)), rec(Some(11.0)), rec(None)]);
        assert_eq!(h.underflow, 1);
        assert_eq!(h.overflow_or_none, 2);
        assert_eq!(h.counts[4], 1);
        assert_eq!(h.counts[5], 1);
        assert!(h.to_csv().contains(">10 / no-response,2"));
    }

    proptest! {
        #[test]
        fn ratio_is_shift_invariant(ends in proptest::collection::vec(0.0f64..50.0, 1..8), offs in proptest::collection::vec(-2.5f64..4.0, 8), shift in -5.0f64..5.0) {
            let mut ends = ends;
            ends.sort_by(f64::total_cmp);
            let gt: Vec<GtTurn> = ends.iter().map(|&e| GtTurn { end: e, fto: 1.0 }).collect();
            let starts: Vec<f64> = ends.iter().zip(&offs).map(|(e, o)| e + o).collect();
            let a = turn_metrics(&pair_ftos(&starts, &gt));
            let gt2: Vec<GtTurn> = gt.iter().map(|g| GtTurn { end: g.end + shift, ..*g }).collect();
            let s2: Vec<f64> = starts.iter().map(|s| s + shift).collect();
            let b = turn_metrics(&pair_ftos(&s2, &gt2));
            // shifting by an inexact float can move a value across an edge
            prop_assert!((a.response_ratio - b.response_ratio).abs() <= 1.0 / gt.len() as f64 + 1e-12);
        }
    }
}
