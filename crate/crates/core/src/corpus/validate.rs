use super::{AnnotatedExample, Label, Task};
use std::fmt;

/// A broken schema rule on a single example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    SegmentCount {
        task: Task,
        expected: usize,
        found: usize,
    },
    EmptySegment {
        segment: usize,
    },
    EmptyToken {
        position: usize,
    },
    TokenIndex {
        position: usize,
        found: usize,
    },
    EmptyRationaleSet {
        set: usize,
    },
    RationaleIndexOutOfRange {
        set: usize,
        index: usize,
        len: usize,
    },
    DuplicateRationaleIndex {
        set: usize,
        index: usize,
    },
    UnsortedRationaleSet {
        set: usize,
    },
    LabelKind {
        task: Task,
    },
    EmptyLabel,
    AnswerSpanOutOfRange {
        start: usize,
        end: usize,
        passage_len: usize,
    },
}

impl Violation {
    pub fn field(&self) -> &'static str {
        match self {
            Violation::EmptyId => "id",
            Violation::SegmentCount { .. } | Violation::EmptySegment { .. } => "segments",
            Violation::EmptyToken { .. } | Violation::TokenIndex { .. } => "segments",
            Violation::EmptyRationaleSet { .. }
            | Violation::RationaleIndexOutOfRange { .. }
            | Violation::DuplicateRationaleIndex { .. }
            | Violation::UnsortedRationaleSet { .. } => "rationale_sets",
            Violation::LabelKind { .. }
            | Violation::EmptyLabel
            | Violation::AnswerSpanOutOfRange { .. } => "label",
        }
    }

    pub fn rule(&self) -> &'static str {
        match self {
            Violation::EmptyId => "EmptyId",
            Violation::SegmentCount { .. } => "SegmentCount",
            Violation::EmptySegment { .. } => "EmptySegment",
            Violation::EmptyToken { .. } => "EmptyToken",
            Violation::TokenIndex { .. } => "TokenIndex",
            Violation::EmptyRationaleSet { .. } => "EmptyRationaleSet",
            Violation::RationaleIndexOutOfRange { .. } => "RationaleIndexOutOfRange",
            Violation::DuplicateRationaleIndex { .. } => "DuplicateRationaleIndex",
            Violation::UnsortedRationaleSet { .. } => "UnsortedRationaleSet",
            Violation::LabelKind { .. } => "LabelKind",
            Violation::EmptyLabel => "EmptyLabel",
            Violation::AnswerSpanOutOfRange { .. } => "AnswerSpanOutOfRange",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field(), self.rule())?;
        match self {
            Violation::SegmentCount {
                task,
                expected,
                found,
            } => {
                write!(f, " ({task} needs {expected} segments, found {found})")
            }
            Violation::EmptySegment { segment } => write!(f, " (segment {segment})"),
            Violation::EmptyToken { position } => write!(f, " (position {position})"),
            Violation::TokenIndex { position, found } => {
                write!(f, " (position {position} carries index {found})")
            }
            Violation::EmptyRationaleSet { set } | Violation::UnsortedRationaleSet { set } => {
                write!(f, " (set {set})")
            }
            Violation::RationaleIndexOutOfRange { set, index, len } => {
                write!(f, " (set {set}: index {index} >= length {len})")
            }
            Violation::DuplicateRationaleIndex { set, index } => {
                write!(f, " (set {set}: index {index} repeated)")
            }
            Violation::LabelKind { task } => write!(f, " (wrong label kind for {task})"),
            Violation::AnswerSpanOutOfRange {
                start,
                end,
                passage_len,
            } => write!(
                f,
                " (span {start}..={end} outside passage of {passage_len})"
            ),
            Violation::EmptyId | Violation::EmptyLabel => Ok(()),
        }
    }
}

/// Check every per-example schema rule; an empty result means the example is
/// well formed.
pub fn validate_example(ex: &AnnotatedExample) -> Vec<Violation> {
    let mut out = Vec::new();
    if ex.id.is_empty() {
        out.push(Violation::EmptyId);
    }

    let expected = ex.task.segment_count();
    if ex.segments.len() != expected {
        out.push(Violation::SegmentCount {
            task: ex.task,
            expected,
            found: ex.segments.len(),
        });
    }
    for (s, seg) in ex.segments.iter().enumerate() {
        if seg.is_empty() {
            out.push(Violation::EmptySegment { segment: s });
        }
    }
    for (position, tok) in ex.tokens().enumerate() {
        if tok.text.is_empty() {
            out.push(Violation::EmptyToken { position });
        }
        if tok.index != position {
            out.push(Violation::TokenIndex {
                position,
                found: tok.index,
            });
        }
    }

    let len = ex.len();
    for (set, rs) in ex.rationale_sets.iter().enumerate() {
        if rs.is_empty() {
            out.push(Violation::EmptyRationaleSet { set });
            continue;
        }
        let mut unsorted = false;
        for (k, &index) in rs.indices().iter().enumerate() {
            if index >= len {
                out.push(Violation::RationaleIndexOutOfRange { set, index, len });
            }
            if rs.indices()[..k].contains(&index) {
                out.push(Violation::DuplicateRationaleIndex { set, index });
            } else if k > 0 && rs.indices()[k - 1] > index {
                unsorted = true;
            }
        }
        if unsorted {
            out.push(Violation::UnsortedRationaleSet { set });
        }
    }

    match (&ex.label, ex.task) {
        (Label::Class(c), Task::Sa | Task::Sts) => {
            if c.is_empty() {
                out.push(Violation::EmptyLabel);
            }
        }
        (Label::Span { start, end }, Task::Mrc) => {
            let passage_len = ex.segments.get(1).map_or(0, Vec::len);
            if start > end || *end >= passage_len {
                out.push(Violation::AnswerSpanOutOfRange {
                    start: *start,
                    end: *end,
                    passage_len,
                });
            }
        }
        (Label::Unanswerable, Task::Mrc) => {}
        (_, task) => out.push(Violation::LabelKind { task }),
    }
    out
}
