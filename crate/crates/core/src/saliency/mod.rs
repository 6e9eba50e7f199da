//! Score maps: top-k rationale selection, integrated gradients, LIME and
//! attention weights.

mod attention;
mod ig;
mod lime;
mod topk;

pub use attention::{
    aggregate_attention, attention_scores_ref, mrc_attention_ref, mrc_attention_scores,
    normalize_dot_scores, AttentionTensor, DEGENERATE_TOLERANCE,
};
pub use ig::{integrated_gradients, IgConfig};
pub use lime::{lime_explain, LimeConfig, LIME_RIDGE};
pub use topk::{select_topk, select_topk_scoped, selection_ranges, topk_count, Rlr, TopkScope};

use crate::faithfulness::PredictorError;
use crate::refmodels::ModelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SaliencyError {
    #[error("method needs input gradients but the model does not expose them")]
    NonDifferentiableModel,
    #[error("{method} does not support task {task}")]
    UnsupportedTask { method: &'static str, task: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("instance {0:?} has no tokens")]
    EmptyInput(String),
    #[error("normalizer {value:e} is too close to zero")]
    DegenerateDenominator { value: f64 },
    #[error("bad wordpiece map: {0}")]
    BadWordpieceMap(String),
    #[error("weighted least squares is singular even with ridge {0}")]
    SingularDesign(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}
