use super::predictor::{
    argmax, checked_predict, PredictRequest, Predictor, PredictorError, VariantKind,
};
use crate::corpus::{
    build_variant, filter_positions, AnnotatedExample, Dataset, Task, Variant, VariantError,
};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SufComError {
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Variant(#[from] VariantError),
    #[error("{task} is not a classification task")]
    UnsupportedTask { task: Task },
    #[error("example {id:?} has label {label:?}, not one of the predictor classes")]
    UnknownLabel { id: String, label: String },
    #[error("no rationale for instance {0:?}")]
    MissingRationale(String),
    #[error("rationale for {id:?} has index {index} outside length {len}")]
    BadRationale {
        id: String,
        index: usize,
        len: usize,
    },
    #[error("dataset has no examples")]
    EmptyDataset,
}

/// Probabilities of the predicted class on each variant, and the derived
/// scores `suf = full - rationale` and `com = full - nonrationale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SufCom {
    /// Argmax class on the full input.
    pub class: usize,
    pub full: f64,
    pub rationale: f64,
    pub nonrationale: f64,
    pub suf: f64,
    pub com: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceSufCom {
    pub id: String,
    #[serde(flatten)]
    pub scores: SufCom,
}

pub fn suf_com_instance(
    pred: &dyn Predictor,
    ex: &AnnotatedExample,
    rationale: &BTreeSet<usize>,
) -> Result<SufCom, SufComError> {
    if !ex.task.is_classification() {
        return Err(SufComError::UnsupportedTask { task: ex.task });
    }
    if let Some(&index) = rationale.iter().find(|&&i| i >= ex.len()) {
        return Err(SufComError::BadRationale {
            id: ex.id.clone(),
            index,
            len: ex.len(),
        });
    }
    let call = |variant, segments: &[Vec<crate::corpus::Token>]| {
        checked_predict(
            pred,
            &PredictRequest {
                instance_id: &ex.id,
                variant,
                segments,
            },
        )
    };
    let full_probs = call(VariantKind::Full, &ex.segments)?;
    let class = argmax(&full_probs);
    let full = full_probs[class];
    let rationale_p = call(
        VariantKind::Rationale,
        &filter_positions(ex, rationale, true),
    )?[class];
    let nonrationale_p = call(
        VariantKind::NonRationale,
        &filter_positions(ex, rationale, false),
    )?[class];
    Ok(SufCom {
        class,
        full,
        rationale: rationale_p,
        nonrationale: nonrationale_p,
        suf: full - rationale_p,
        com: full - nonrationale_p,
    })
}

/// Suf/Com for every classification example, sorted by id. Runs in the
/// ambient rayon pool unless the predictor asks for serial calls.
pub fn suf_com_corpus(
    pred: &dyn Predictor,
    ds: &Dataset,
    rationales: &BTreeMap<String, BTreeSet<usize>>,
) -> Result<Vec<InstanceSufCom>, SufComError> {
    let mut examples: Vec<&AnnotatedExample> = ds.examples().iter().collect();
    examples.sort_by(|a, b| a.id.cmp(&b.id));
    let one = |ex: &&AnnotatedExample| {
        let r = rationales
            .get(&ex.id)
            .ok_or_else(|| SufComError::MissingRationale(ex.id.clone()))?;
        Ok(InstanceSufCom {
            id: ex.id.clone(),
            scores: suf_com_instance(pred, ex, r)?,
        })
    };
    if pred.supports_concurrency() {
        examples.par_iter().map(one).collect()
    } else {
        examples.iter().map(one).collect()
    }
}

/// Accuracy of the predictor's argmax class against gold labels with every
/// input built as `v`.
pub fn variant_performance(
    pred: &dyn Predictor,
    ds: &Dataset,
    v: Variant,
) -> Result<f64, SufComError> {
    if ds.is_empty() {
        return Err(SufComError::EmptyDataset);
    }
    if let Some(ex) = ds.examples().iter().find(|ex| !ex.task.is_classification()) {
        return Err(SufComError::UnsupportedTask { task: ex.task });
    }
    let kind = match v {
        Variant::Full => VariantKind::Full,
        Variant::RationaleOnly(_) => VariantKind::Rationale,
        Variant::NonRationale(_) => VariantKind::NonRationale,
    };
    let one = |ex: &AnnotatedExample| -> Result<bool, SufComError> {
        let label = ex.label.class_name().unwrap_or_default();
        let gold = pred
            .class_names()
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| SufComError::UnknownLabel {
                id: ex.id.clone(),
                label: label.to_string(),
            })?;
        let segments = build_variant(ex, v)?;
        let probs = checked_predict(
            pred,
            &PredictRequest {
                instance_id: &ex.id,
                variant: kind,
                segments: &segments,
            },
        )?;
        Ok(argmax(&probs) == gold)
    };
    let hits: Vec<bool> = if pred.supports_concurrency() {
        ds.examples()
            .par_iter()
            .map(one)
            .collect::<Result<_, _>>()?
    } else {
        ds.examples().iter().map(one).collect::<Result<_, _>>()?
    };
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}
