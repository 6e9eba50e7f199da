//! Annotation quality control: confidence averages against fixed thresholds
//! and the revise-or-discard loop.
//!
//! Each rationale set is rated for sufficiency (1–3) and compactness (1–4),
//! and the whole input for comprehensiveness (1–3). An example qualifies when
//! every set averages at least 3.0 and 3.6 and the input averages at least
//! 2.6. Unqualified examples go back for revision; one still failing on the
//! third revision is discarded.

use crate::corpus::Dataset;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Thresholds in tenths, so comparisons are exact: `10 · Σ ≥ t · n`.
const SUFFICIENCY_TENTHS: u32 = 30;
const COMPACTNESS_TENTHS: u32 = 36;
const COMPREHENSIVENESS_TENTHS: u32 = 26;

pub const SUFFICIENCY_THRESHOLD: f64 = 3.0;
pub const COMPACTNESS_THRESHOLD: f64 = 3.6;
pub const COMPREHENSIVENESS_THRESHOLD: f64 = 2.6;

/// Revision loops before an unqualified example is discarded.
pub const MAX_LOOPS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "suf")]
    Sufficiency,
    #[serde(rename = "compact")]
    Compactness,
    #[serde(rename = "comprehensive")]
    Comprehensiveness,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Sufficiency => "suf",
            Dimension::Compactness => "compact",
            Dimension::Comprehensiveness => "comprehensive",
        }
    }

    fn scale_max(self) -> u8 {
        match self {
            Dimension::Compactness => 4,
            _ => 3,
        }
    }

    fn tenths(self) -> u32 {
        match self {
            Dimension::Sufficiency => SUFFICIENCY_TENTHS,
            Dimension::Compactness => COMPACTNESS_TENTHS,
            Dimension::Comprehensiveness => COMPREHENSIVENESS_TENTHS,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One annotator's sufficiency and compactness confidence for one set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfidenceRating {
    pub annotator_id: String,
    pub sufficiency: u8,
    pub compactness: u8,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComprehensivenessRating {
    pub annotator_id: String,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "dimension", rename_all = "lowercase")]
pub enum FailingProperty {
    Sufficiency { set: usize },
    Compactness { set: usize },
    Comprehensiveness,
}

impl fmt::Display for FailingProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailingProperty::Sufficiency { set } => write!(f, "sufficiency(set {set})"),
            FailingProperty::Compactness { set } => write!(f, "compactness(set {set})"),
            FailingProperty::Comprehensiveness => f.write_str("comprehensiveness"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "failing", rename_all = "snake_case")]
pub enum QcStatus {
    Qualified,
    NeedsRevision(Vec<FailingProperty>),
    Discarded(Vec<FailingProperty>),
}

impl QcStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QcStatus::Qualified => "qualified",
            QcStatus::NeedsRevision(_) => "needs_revision",
            QcStatus::Discarded(_) => "discarded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetAverages {
    pub set: usize,
    pub sufficiency: f64,
    pub compactness: f64,
    pub raters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcVerdict {
    pub sets: Vec<SetAverages>,
    pub comprehensiveness: f64,
    /// Distinct annotators across all dimensions.
    pub annotators: usize,
    #[serde(flatten)]
    pub status: QcStatus,
    pub loop_count: u8,
}

impl QcVerdict {
    pub fn is_qualified(&self) -> bool {
        self.status == QcStatus::Qualified
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QcError {
    #[error("no {0} ratings")]
    EmptyRatings(String),
    #[error("{dimension} rating {value} from {annotator:?} is outside 1..={max}")]
    OutOfScaleRating {
        dimension: Dimension,
        value: u8,
        max: u8,
        annotator: String,
    },
    #[error("rating targets set {set}, example has {sets}")]
    UnknownSet { set: usize, sets: usize },
    #[error("cannot advance a qualified example")]
    AdvanceOnQualified,
    #[error("cannot advance a discarded example")]
    AdvanceOnDiscarded,
}

fn check_scale(dimension: Dimension, value: u8, annotator: &str) -> Result<(), QcError> {
    let max = dimension.scale_max();
    if !(1..=max).contains(&value) {
        return Err(QcError::OutOfScaleRating {
            dimension,
            value,
            max,
            annotator: annotator.to_string(),
        });
    }
    Ok(())
}

fn passes(dimension: Dimension, values: &[u8]) -> bool {
    let sum: u32 = values.iter().map(|&v| u32::from(v)).sum();
    10 * sum >= dimension.tenths() * values.len() as u32
}

fn mean(values: &[u8]) -> f64 {
    values.iter().map(|&v| f64::from(v)).sum::<f64>() / values.len() as f64
}

/// Score one round of ratings for an example with `n_sets` rationale sets.
/// The verdict starts at loop 0.
pub fn score_example(
    confidence: &[ConfidenceRating],
    comprehensiveness: &[ComprehensivenessRating],
    n_sets: usize,
) -> Result<QcVerdict, QcError> {
    if n_sets == 0 || confidence.is_empty() {
        return Err(QcError::EmptyRatings("sufficiency/compactness".into()));
    }
    if comprehensiveness.is_empty() {
        return Err(QcError::EmptyRatings("comprehensiveness".into()));
    }
    let mut per_set: Vec<(Vec<u8>, Vec<u8>)> = vec![(Vec::new(), Vec::new()); n_sets];
    let mut annotators = BTreeSet::new();
    for r in confidence {
        check_scale(Dimension::Sufficiency, r.sufficiency, &r.annotator_id)?;
        check_scale(Dimension::Compactness, r.compactness, &r.annotator_id)?;
        let slot = per_set.get_mut(r.target).ok_or(QcError::UnknownSet {
            set: r.target,
            sets: n_sets,
        })?;
        slot.0.push(r.sufficiency);
        slot.1.push(r.compactness);
        annotators.insert(r.annotator_id.as_str());
    }
    let comp: Vec<u8> = comprehensiveness
        .iter()
        .map(|r| {
            check_scale(Dimension::Comprehensiveness, r.value, &r.annotator_id)?;
            annotators.insert(r.annotator_id.as_str());
            Ok(r.value)
        })
        .collect::<Result<_, QcError>>()?;

    let mut failing = Vec::new();
    let mut sets = Vec::with_capacity(n_sets);
    for (set, (suf, compact)) in per_set.iter().enumerate() {
        if suf.is_empty() {
            return Err(QcError::EmptyRatings(format!("set {set}")));
        }
        if !passes(Dimension::Sufficiency, suf) {
            failing.push(FailingProperty::Sufficiency { set });
        }
        if !passes(Dimension::Compactness, compact) {
            failing.push(FailingProperty::Compactness { set });
        }
        sets.push(SetAverages {
            set,
            sufficiency: mean(suf),
            compactness: mean(compact),
            raters: suf.len(),
        });
    }
    if !passes(Dimension::Comprehensiveness, &comp) {
        failing.push(FailingProperty::Comprehensiveness);
    }
    Ok(QcVerdict {
        sets,
        comprehensiveness: mean(&comp),
        annotators: annotators.len(),
        status: if failing.is_empty() {
            QcStatus::Qualified
        } else {
            QcStatus::NeedsRevision(failing)
        },
        loop_count: 0,
    })
}

/// Move a `NeedsRevision` verdict to the next loop. `rescored` is the
/// verdict on the revised annotation, if one was produced; without it the
/// previous failures carry over. Failing at loop [`MAX_LOOPS`] discards.
pub fn advance_loop(
    verdict: &QcVerdict,
    rescored: Option<QcVerdict>,
) -> Result<QcVerdict, QcError> {
    match verdict.status {
        QcStatus::Qualified => return Err(QcError::AdvanceOnQualified),
        QcStatus::Discarded(_) => return Err(QcError::AdvanceOnDiscarded),
        QcStatus::NeedsRevision(_) => {}
    }
    let loop_count = verdict.loop_count + 1;
    let mut next = rescored.unwrap_or_else(|| verdict.clone());
    next.loop_count = loop_count;
    if let QcStatus::NeedsRevision(failing) = &next.status {
        if loop_count >= MAX_LOOPS {
            next.status = QcStatus::Discarded(failing.clone());
        }
    }
    Ok(next)
}

/// One line of a ratings file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub id: String,
    pub set: Option<usize>,
    pub annotator: String,
    pub dimension: Dimension,
    pub value: u8,
    /// Revision loop the rating belongs to; 0 for the first annotation.
    #[serde(rename = "loop", default)]
    pub loop_index: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RatingsError {
    #[error("rating for unknown example {0:?}")]
    UnknownId(String),
    #[error("{id:?}: {dimension} rating must {expectation}")]
    SetField {
        id: String,
        dimension: Dimension,
        expectation: &'static str,
    },
    #[error("{id:?}: annotator {annotator:?} gave {dimension} for set {set} but not {missing}")]
    IncompleteRating {
        id: String,
        annotator: String,
        set: usize,
        dimension: Dimension,
        missing: Dimension,
    },
    #[error("{id:?}: duplicate {dimension} rating from {annotator:?} in loop {loop_index}")]
    DuplicateRating {
        id: String,
        annotator: String,
        dimension: Dimension,
        loop_index: u8,
    },
    #[error("{id:?}: loop {loop_index} has no ratings but a later loop does")]
    MissingLoop { id: String, loop_index: u8 },
    #[error("{id:?}: loop {loop_index} exceeds the maximum of {MAX_LOOPS}")]
    LoopOutOfRange { id: String, loop_index: u8 },
    #[error("ratings for {id:?}")]
    Qc { id: String, source: QcError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleQc {
    pub id: String,
    #[serde(flatten)]
    pub verdict: QcVerdict,
}

type RoundKey = (String, u8);

fn round_ratings(
    id: &str,
    records: &[&RatingRecord],
) -> Result<(Vec<ConfidenceRating>, Vec<ComprehensivenessRating>), RatingsError> {
    let mut set_dims: BTreeMap<(String, usize), (Option<u8>, Option<u8>)> = BTreeMap::new();
    let mut comprehensive = BTreeMap::new();
    let dup = |r: &RatingRecord| RatingsError::DuplicateRating {
        id: id.to_string(),
        annotator: r.annotator.clone(),
        dimension: r.dimension,
        loop_index: r.loop_index,
    };
    for r in records {
        match (r.dimension, r.set) {
            (Dimension::Comprehensiveness, None) => {
                if comprehensive.insert(r.annotator.clone(), r.value).is_some() {
                    return Err(dup(r));
                }
            }
            (Dimension::Comprehensiveness, Some(_)) => {
                return Err(RatingsError::SetField {
                    id: id.to_string(),
                    dimension: r.dimension,
                    expectation: "have a null set",
                })
            }
            (_, None) => {
                return Err(RatingsError::SetField {
                    id: id.to_string(),
                    dimension: r.dimension,
                    expectation: "name a rationale set",
                })
            }
            (dim, Some(set)) => {
                let slot = set_dims.entry((r.annotator.clone(), set)).or_default();
                let field = if dim == Dimension::Sufficiency {
                    &mut slot.0
                } else {
                    &mut slot.1
                };
                if field.replace(r.value).is_some() {
                    return Err(dup(r));
                }
            }
        }
    }
    let mut confidence = Vec::with_capacity(set_dims.len());
    for ((annotator, set), pair) in set_dims {
        let incomplete = |dimension, missing| RatingsError::IncompleteRating {
            id: id.to_string(),
            annotator: annotator.clone(),
            set,
            dimension,
            missing,
        };
        match pair {
            (Some(sufficiency), Some(compactness)) => confidence.push(ConfidenceRating {
                annotator_id: annotator.clone(),
                sufficiency,
                compactness,
                target: set,
            }),
            (Some(_), None) => {
                return Err(incomplete(Dimension::Sufficiency, Dimension::Compactness))
            }
            (None, Some(_)) => {
                return Err(incomplete(Dimension::Compactness, Dimension::Sufficiency))
            }
            (None, None) => unreachable!("entries are created with one field set"),
        }
    }
    let comprehensiveness = comprehensive
        .into_iter()
        .map(|(annotator_id, value)| ComprehensivenessRating {
            annotator_id,
            value,
        })
        .collect();
    Ok((confidence, comprehensiveness))
}

/// Replay every loop in a ratings file. Loops of an example must be
/// contiguous from 0; each later loop re-scores the revised annotation.
/// Results are sorted by example id.
pub fn evaluate_ratings(
    records: &[RatingRecord],
    ds: &Dataset,
) -> Result<Vec<ExampleQc>, RatingsError> {
    let mut rounds: BTreeMap<RoundKey, Vec<&RatingRecord>> = BTreeMap::new();
    for r in records {
        if ds.get(&r.id).is_none() {
            return Err(RatingsError::UnknownId(r.id.clone()));
        }
        if r.loop_index > MAX_LOOPS {
            return Err(RatingsError::LoopOutOfRange {
                id: r.id.clone(),
                loop_index: r.loop_index,
            });
        }
        rounds
            .entry((r.id.clone(), r.loop_index))
            .or_default()
            .push(r);
    }
    let mut by_id: BTreeMap<&str, Vec<(u8, &Vec<&RatingRecord>)>> = BTreeMap::new();
    for ((id, l), recs) in &rounds {
        by_id.entry(id.as_str()).or_default().push((*l, recs));
    }
    let mut out = Vec::with_capacity(by_id.len());
    for (id, loops) in by_id {
        let n_sets = ds.get(id).map_or(0, |ex| ex.rationale_sets.len());
        let qc_err = |source| RatingsError::Qc {
            id: id.to_string(),
            source,
        };
        let mut verdict: Option<QcVerdict> = None;
        for (expected, (l, recs)) in loops.into_iter().enumerate() {
            if usize::from(l) != expected {
                return Err(RatingsError::MissingLoop {
                    id: id.to_string(),
                    loop_index: expected as u8,
                });
            }
            let (conf, comp) = round_ratings(id, recs)?;
            let scored = score_example(&conf, &comp, n_sets).map_err(qc_err)?;
            verdict = Some(match verdict {
                None => scored,
                Some(prev) => advance_loop(&prev, Some(scored)).map_err(qc_err)?,
            });
        }
        out.push(ExampleQc {
            id: id.to_string(),
            verdict: verdict.expect("at least one loop per id"),
        });
    }
    Ok(out)
}
