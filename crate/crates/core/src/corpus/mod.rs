//! Dataset schema, validation, statistics and input variants.
//!
//! An instance is a list of segments (one for SA, two for STS and MRC).
//! Token positions and rationale indices address the concatenation of all
//! segments, so set arithmetic stays one-dimensional. Segment boundaries are
//! kept on the example so variants can be rebuilt per segment.

mod io;
mod stats;
mod validate;
mod variant;

pub use io::{
    parse_dataset, parse_dataset_str, serialize_dataset, CorpusError, LineIssue, ParseMode,
    ParseOutcome,
};
pub use stats::{dataset_stats, StatsError, StatsReport, RLR_MODE};
pub use validate::{validate_example, Violation};
pub use variant::{build_variant, filter_positions, SetSelector, Variant, VariantError};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Position in the instance (concatenated over segments).
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sa,
    Sts,
    Mrc,
}

impl Task {
    pub fn segment_count(self) -> usize {
        match self {
            Task::Sa => 1,
            Task::Sts | Task::Mrc => 2,
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Mrc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sa => "sa",
            Task::Sts => "sts",
            Task::Mrc => "mrc",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbationType {
    #[serde(rename = "dispensable")]
    DispensableWordAlteration,
    #[serde(rename = "important")]
    ImportantWordAlteration,
    #[serde(rename = "syntax")]
    SyntaxTransformation,
}

impl PerturbationType {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationType::DispensableWordAlteration => "dispensable",
            PerturbationType::ImportantWordAlteration => "important",
            PerturbationType::SyntaxTransformation => "syntax",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Original,
    PerturbedFrom {
        original_id: String,
        kind: PerturbationType,
    },
}

/// Gold label. MRC spans are token offsets into the passage segment with an
/// inclusive end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    Class(String),
    Span { start: usize, end: usize },
    Unanswerable,
}

impl Label {
    pub fn class_name(&self) -> Option<&str> {
        match self {
            Label::Class(c) => Some(c),
            _ => None,
        }
    }
}

/// Token positions claimed sufficient and compact for the prediction.
///
/// Construction keeps the indices exactly as given; [`validate_example`]
/// reports ordering and duplicate problems.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RationaleSet(Vec<usize>);

impl RationaleSet {
    pub fn new(indices: Vec<usize>) -> Self {
        RationaleSet(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_set(&self) -> BTreeSet<usize> {
        self.0.iter().copied().collect()
    }
}

impl FromIterator<usize> for RationaleSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let set: BTreeSet<usize> = iter.into_iter().collect();
        RationaleSet(set.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedExample {
    pub id: String,
    pub task: Task,
    pub language: String,
    pub segments: Vec<Vec<Token>>,
    pub label: Label,
    pub rationale_sets: Vec<RationaleSet>,
    pub origin: Origin,
}

impl AnnotatedExample {
    /// Build an example from plain token strings, assigning concatenated
    /// positions.
    pub fn from_texts(
        id: impl Into<String>,
        task: Task,
        segments: Vec<Vec<String>>,
        label: Label,
        rationale_sets: Vec<RationaleSet>,
    ) -> Self {
        let mut next = 0;
        let segments = segments
            .into_iter()
            .map(|seg| {
                seg.into_iter()
                    .map(|text| {
                        let tok = Token { text, index: next };
                        next += 1;
                        tok
                    })
                    .collect()
            })
            .collect();
        AnnotatedExample {
            id: id.into(),
            task,
            language: "en".to_string(),
            segments,
            label,
            rationale_sets,
            origin: Origin::Original,
        }
    }

    /// [`from_texts`](Self::from_texts) with each segment split on whitespace.
    pub fn from_whitespace(
        id: impl Into<String>,
        task: Task,
        segments: &[&str],
        label: Label,
        rationale_sets: Vec<RationaleSet>,
    ) -> Self {
        let segments = segments
            .iter()
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .collect();
        Self::from_texts(id, task, segments, label, rationale_sets)
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.segments.iter().flatten()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens().map(|t| t.text.as_str()).collect()
    }

    /// Position ranges of each segment in the concatenated index space.
    pub fn segment_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.segments
            .iter()
            .map(|s| {
                let r = start..start + s.len();
                start = r.end;
                r
            })
            .collect()
    }

    pub fn is_annotated(&self) -> bool {
        !self.rationale_sets.is_empty()
    }

    pub fn is_original(&self) -> bool {
        matches!(self.origin, Origin::Original)
    }

    /// Union of all rationale sets.
    pub fn rationale_union(&self) -> BTreeSet<usize> {
        self.rationale_sets
            .iter()
            .flat_map(|s| s.indices().iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub original_id: String,
    pub perturbed_id: String,
    pub kind: PerturbationType,
}

/// Immutable, id-indexed collection of examples in file order.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    examples: Vec<AnnotatedExample>,
    by_id: HashMap<String, usize>,
    pairs: Vec<Pair>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.examples == other.examples && self.pairs == other.pairs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("perturbed example references missing original {0:?}")]
    DanglingPerturbationLink(String),
    #[error("example {id:?} is perturbed from {target:?}, which is itself perturbed")]
    ChainedPerturbation { id: String, target: String },
}

impl Dataset {
    /// Assemble a dataset, deriving pairs from each example's origin.
    pub fn new(examples: Vec<AnnotatedExample>) -> Result<Self, DatasetError> {
        let mut by_id = HashMap::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            if by_id.insert(ex.id.clone(), i).is_some() {
                return Err(DatasetError::DuplicateId(ex.id.clone()));
            }
        }
        let mut pairs = Vec::new();
        for ex in &examples {
            if let Origin::PerturbedFrom { original_id, kind } = &ex.origin {
                let target = by_id
                    .get(original_id)
                    .map(|&i| &examples[i])
                    .ok_or_else(|| DatasetError::DanglingPerturbationLink(original_id.clone()))?;
                if !target.is_original() {
                    return Err(DatasetError::ChainedPerturbation {
                        id: ex.id.clone(),
                        target: original_id.clone(),
                    });
                }
                pairs.push(Pair {
                    original_id: original_id.clone(),
                    perturbed_id: ex.id.clone(),
                    kind: *kind,
                });
            }
        }
        Ok(Dataset {
            examples,
            by_id,
            pairs,
        })
    }

    pub fn examples(&self) -> &[AnnotatedExample] {
        &self.examples
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedExample> {
        self.by_id.get(id).map(|&i| &self.examples[i])
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}
