use crate::corpus::{AnnotatedExample, Task};
use crate::faithfulness::{ScoreMap, SortedRationale};
use crate::plausibility::PredictedRationale;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Rationale length ratio, a fraction in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Rlr(f64);

impl Rlr {
    pub fn new(value: f64) -> Result<Self, String> {
        if value > 0.0 && value <= 1.0 {
            Ok(Rlr(value))
        } else {
            Err(format!("rlr must lie in (0, 1], got {value}"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Whether pair-task instances get one budget per segment or one overall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TopkScope {
    #[default]
    Segment,
    Global,
}

impl TopkScope {
    pub fn as_str(self) -> &'static str {
        match self {
            TopkScope::Segment => "segment",
            TopkScope::Global => "global",
        }
    }
}

/// `max(1, round(len · rlr))`, capped at `len`. Rounds half away from zero.
pub fn topk_count(len: usize, rlr: Rlr) -> usize {
    if len == 0 {
        return 0;
    }
    ((len as f64 * rlr.0).round() as usize).clamp(1, len)
}

/// Position ranges eligible for selection. MRC rationales live in the
/// passage, so the question is excluded there.
pub fn selection_ranges(ex: &AnnotatedExample) -> Vec<Range<usize>> {
    let mut ranges = ex.segment_ranges();
    if ex.task == Task::Mrc {
        ranges.drain(..ranges.len() - 1);
    }
    ranges
}

/// Top-k over every position of the map.
#[allow(clippy::single_range_in_vec_init)]
pub fn select_topk(scores: &ScoreMap, rlr: Rlr) -> (SortedRationale, PredictedRationale) {
    select_topk_scoped(scores, &[0..scores.len()], rlr, TopkScope::Global)
}

/// Top-k restricted to `ranges`: one budget per range, or one budget over
/// their union. The result is sorted by descending score.
pub fn select_topk_scoped(
    scores: &ScoreMap,
    ranges: &[Range<usize>],
    rlr: Rlr,
    scope: TopkScope,
) -> (SortedRationale, PredictedRationale) {
    let s = &scores.scores;
    let chosen: Vec<usize> = match scope {
        TopkScope::Global => {
            let all = SortedRationale::from_positions(s, ranges.iter().cloned().flatten());
            let k = topk_count(all.len(), rlr);
            all.positions[..k].to_vec()
        }
        TopkScope::Segment => ranges
            .iter()
            .flat_map(|r| {
                let seg = SortedRationale::from_positions(s, r.clone());
                let k = topk_count(seg.len(), rlr);
                seg.positions.into_iter().take(k)
            })
            .collect(),
    };
    let sorted = SortedRationale::from_positions(s, chosen.iter().copied());
    let predicted = PredictedRationale::new(scores.instance_id.clone(), chosen);
    (sorted, predicted)
}
