//! Small reference classifiers with analytic input gradients.
//!
//! Two differentiable models are provided: a mean-pooled bag-of-words
//! softmax ([`BowSoftmaxModel`]) and a gated recurrent encoder with an
//! attention-pooled head ([`AttnRefModel`]). [`RationaleOracle`] is a
//! non-differentiable predictor whose output depends only on trigger tokens,
//! which gives sufficiency/comprehensiveness a known ground truth.
//! [`LinearProbe`] has a constant gradient and makes integrated gradients
//! exact.
//!
//! Parameters are either seeded or loaded from a JSON checkpoint; there is no
//! training loop.

mod attn;
mod bow;
mod checkpoint;
mod embedding;
mod gradcheck;
mod linear;
mod oracle;

pub use attn::{AttnHidden, AttnRefModel};
pub use bow::BowSoftmaxModel;
pub use checkpoint::{Checkpoint, ModelKind, RefModel};
pub use embedding::EmbeddingTable;
pub use gradcheck::{
    grad_wrt_embeddings, max_relative_error, numeric_gradient, relative_error, GRADCHECK_FLOOR,
};
pub use linear::LinearProbe;
pub use oracle::{make_rationale_oracle, RationaleOracle};

use crate::corpus::Token;
use crate::linalg::Matrix;

/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 16;

/// Embedded input: one row per token of the concatenated segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub rows: Matrix,
    pub segment_lens: Vec<usize>,
}

impl Embedded {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// The same shape scaled by `alpha`; `alpha = 0` is the all-zero baseline.
    pub fn scaled(&self, alpha: f64) -> Embedded {
        Embedded {
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|v| v * alpha).collect())
                .collect(),
            segment_lens: self.segment_lens.clone(),
        }
    }

    /// Row ranges of each segment.
    pub fn segment_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.segment_lens
            .iter()
            .map(|&n| {
                let r = start..start + n;
                start += n;
                r
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("input has no tokens")]
    EmptyInput,
    #[error("model expects {expected} segments, input has {found}")]
    SegmentMismatch { expected: usize, found: usize },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

/// A classifier exposing its input embeddings and the gradient of a class
/// score with respect to them.
pub trait DifferentiableModel: Sync {
    fn classes(&self) -> &[String];

    fn embed(&self, segments: &[Vec<Token>]) -> Embedded;

    /// `F_j` at the given embeddings.
    fn class_score(&self, input: &Embedded, class: usize) -> Result<f64, ModelError>;

    /// `∂F_j / ∂input`, same shape as `input.rows`.
    fn class_gradient(&self, input: &Embedded, class: usize) -> Result<Matrix, ModelError>;

    /// Class scores for every class.
    fn scores(&self, input: &Embedded) -> Result<Vec<f64>, ModelError> {
        (0..self.classes().len())
            .map(|j| self.class_score(input, j))
            .collect()
    }
}

pub(crate) fn check_class(class: usize, classes: usize) -> Result<(), ModelError> {
    if class >= classes {
        Err(ModelError::ClassOutOfRange { class, classes })
    } else {
        Ok(())
    }
}

pub(crate) fn embed_with(table: &EmbeddingTable, segments: &[Vec<Token>]) -> Embedded {
    Embedded {
        rows: segments
            .iter()
            .flatten()
            .map(|t| table.lookup(&t.text).to_vec())
            .collect(),
        segment_lens: segments.iter().map(Vec::len).collect(),
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::corpus::Token;

    pub fn segs(parts: &[&str]) -> Vec<Vec<Token>> {
        let mut next = 0;
        parts
            .iter()
            .map(|p| {
                p.split_whitespace()
                    .map(|w| {
                        next += 1;
                        Token {
                            text: w.to_string(),
                            index: next - 1,
                        }
                    })
                    .collect()
            })
            .collect()
    }
}
