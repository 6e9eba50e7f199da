use super::Dataset;
use serde::Serialize;

/// How an example's rationale length is measured when it carries several
/// sets. Emitted alongside the statistics.
pub const RLR_MODE: &str = "union";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    /// Number of original/perturbed pairs.
    pub size: usize,
    pub examples: usize,
    /// Mean over examples of |union of rationale sets| / instance length.
    pub rlr: f64,
    /// Mean number of rationale sets per example.
    pub rsn: f64,
    pub rlr_mode: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("example {0:?} has no rationale sets")]
    NotAnnotated(String),
}

pub fn dataset_stats(ds: &Dataset) -> Result<StatsReport, StatsError> {
    if ds.is_empty() {
        return Err(StatsError::EmptyDataset);
    }
    let mut ratio_sum = 0.0;
    let mut set_count = 0usize;
    for ex in ds.examples() {
        if !ex.is_annotated() {
            return Err(StatsError::NotAnnotated(ex.id.clone()));
        }
        ratio_sum += ex.rationale_union().len() as f64 / ex.len() as f64;
        set_count += ex.rationale_sets.len();
    }
    let n = ds.len() as f64;
    Ok(StatsReport {
        size: ds.pairs().len(),
        examples: ds.len(),
        rlr: ratio_sum / n,
        rsn: set_count as f64 / n,
        rlr_mode: RLR_MODE,
    })
}
