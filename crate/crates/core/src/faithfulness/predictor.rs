use crate::corpus::Token;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Tolerance on the probability simplex for predictor outputs.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Full,
    Rationale,
    #[serde(rename = "nonrationale")]
    NonRationale,
    /// A sampled perturbation (LIME); never present in probability files.
    Sample,
}

impl VariantKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Full => "full",
            VariantKind::Rationale => "rationale",
            VariantKind::NonRationale => "nonrationale",
            VariantKind::Sample => "sample",
        }
    }
}

/// One prediction request. In-process models only look at `segments`;
/// offline predictors answer by `(instance_id, variant)`.
#[derive(Debug, Clone, Copy)]
pub struct PredictRequest<'a> {
    pub instance_id: &'a str,
    pub variant: VariantKind,
    pub segments: &'a [Vec<Token>],
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictorError {
    #[error("predictor failed on {id:?}: {reason}")]
    Failure { id: String, reason: String },
}

impl PredictorError {
    pub fn failure(id: &str, reason: impl Into<String>) -> Self {
        PredictorError::Failure {
            id: id.to_string(),
            reason: reason.into(),
        }
    }
}

/// Black-box classifier: token segments to class probabilities.
pub trait Predictor: Send + Sync {
    fn class_names(&self) -> &[String];

    fn predict(&self, req: &PredictRequest<'_>) -> Result<Vec<f64>, PredictorError>;

    /// `false` when calls must not overlap; callers then evaluate serially.
    fn supports_concurrency(&self) -> bool {
        true
    }
}

/// Call `pred` and check the output is a distribution over its classes.
pub fn checked_predict(
    pred: &dyn Predictor,
    req: &PredictRequest<'_>,
) -> Result<Vec<f64>, PredictorError> {
    let probs = pred.predict(req)?;
    let classes = pred.class_names().len();
    if probs.len() != classes {
        return Err(PredictorError::failure(
            req.instance_id,
            format!("{} probabilities for {} classes", probs.len(), classes),
        ));
    }
    if probs
        .iter()
        .any(|p| !p.is_finite() || *p < -SIMPLEX_TOLERANCE)
    {
        return Err(PredictorError::failure(
            req.instance_id,
            "probabilities must be finite and non-negative",
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(PredictorError::failure(
            req.instance_id,
            format!("probabilities sum to {total}"),
        ));
    }
    Ok(probs)
}

/// Index of the largest value; first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// A line of the offline probability file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRecord {
    pub id: String,
    pub variant: VariantKind,
    pub probs: Vec<f64>,
}

/// Predictor backed by precomputed probabilities.
#[derive(Debug, Clone)]
pub struct OfflinePredictor {
    classes: Vec<String>,
    table: HashMap<(String, VariantKind), Vec<f64>>,
}

impl OfflinePredictor {
    /// Without explicit class names, classes are named by index.
    pub fn from_records(
        records: Vec<ProbabilityRecord>,
        classes: Option<Vec<String>>,
    ) -> Result<Self, PredictorError> {
        let width = records.first().map_or(0, |r| r.probs.len());
        let classes = classes.unwrap_or_else(|| (0..width).map(|i| i.to_string()).collect());
        let mut table = HashMap::with_capacity(records.len());
        for rec in records {
            if rec.variant == VariantKind::Sample {
                return Err(PredictorError::failure(
                    &rec.id,
                    "probability files cannot hold sample rows",
                ));
            }
            let key = (rec.id.clone(), rec.variant);
            if table.insert(key, rec.probs).is_some() {
                return Err(PredictorError::failure(
                    &rec.id,
                    format!("duplicate {} row", rec.variant.as_str()),
                ));
            }
        }
        Ok(OfflinePredictor { classes, table })
    }
}

impl Predictor for OfflinePredictor {
    fn class_names(&self) -> &[String] {
        &self.classes
    }

    fn predict(&self, req: &PredictRequest<'_>) -> Result<Vec<f64>, PredictorError> {
        self.table
            .get(&(req.instance_id.to_string(), req.variant))
            .cloned()
            .ok_or_else(|| {
                PredictorError::failure(
                    req.instance_id,
                    format!("no {} probabilities", req.variant.as_str()),
                )
            })
    }
}
