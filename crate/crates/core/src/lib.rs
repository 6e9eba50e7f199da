//! Interpretability evaluation for token-level rationales.
//!
//! The crate is organised around the evaluation pipeline:
//!
//! - [`corpus`]: annotated datasets with perturbation pairs, validation,
//!   statistics and input variants (full / rationale / non-rationale).
//! - [`plausibility`]: agreement with human rationales (Token-F1, IOU-F1).
//! - [`faithfulness`]: rationale consistency under perturbation (MAP) and
//!   sufficiency / comprehensiveness scores.
//! - [`saliency`]: score maps from integrated gradients, LIME and attention,
//!   plus top-k rationale selection.
//! - [`refmodels`]: small differentiable classifiers with hand-derived
//!   gradients, used to drive the saliency methods at desk scale.
//! - [`qc`]: annotation quality control with the iterative revision loop.
//! - [`report`] and [`cli`]: canonical reports and the command-line pipeline.

pub mod cli;
pub mod corpus;
pub mod faithfulness;
pub mod jsonl;
pub mod linalg;
pub mod plausibility;
pub mod qc;
pub mod refmodels;
pub mod report;
pub mod saliency;
pub mod seed;

pub use corpus::{AnnotatedExample, Dataset, RationaleSet, Task, Token, Variant};
pub use faithfulness::{Predictor, ScoreMap, SortedRationale};
pub use plausibility::PredictedRationale;
