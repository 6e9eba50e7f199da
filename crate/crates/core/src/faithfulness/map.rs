use super::{ScoreMap, ScoreMapError, SortedRationale};
use crate::corpus::{AnnotatedExample, Dataset};
use crate::saliency::{select_topk_scoped, selection_ranges, Rlr, TopkScope};
use serde::Serialize;
use std::collections::HashMap;
use std::hash::Hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum MapScope {
    /// Compare the top-k rationales of each side.
    #[default]
    #[value(name = "topk")]
    TopK,
    /// Compare the complete importance-sorted token lists.
    Full,
}

impl MapScope {
    pub fn as_str(self) -> &'static str {
        match self {
            MapScope::TopK => "topk",
            MapScope::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("sorted rationale is empty")]
    EmptyRationale,
    #[error("no score map for instance {0:?}")]
    MissingScores(String),
    #[error(transparent)]
    ScoreMap(#[from] ScoreMapError),
}

/// MAP between the original's and the perturbed input's sorted rationale
/// token lists.
///
/// At prefix length `i` the numerator counts the tokens of the perturbed
/// prefix found in the original's top `min(i, |orig|)` tokens, matching with
/// multiset semantics: each occurrence on the original side can be consumed
/// once.
pub fn map_pair<T: Eq + Hash>(orig: &[T], pert: &[T]) -> Result<f64, MapError> {
    if orig.is_empty() || pert.is_empty() {
        return Err(MapError::EmptyRationale);
    }
    let mut pert_counts: HashMap<&T, usize> = HashMap::new();
    let mut orig_counts: HashMap<&T, usize> = HashMap::new();
    // Size of the multiset intersection of the two current prefixes.
    let mut common = 0usize;
    let mut total = 0.0;
    for (i, p) in pert.iter().enumerate() {
        let seen_p = pert_counts.entry(p).or_insert(0);
        if *seen_p < orig_counts.get(p).copied().unwrap_or(0) {
            common += 1;
        }
        *seen_p += 1;

        if let Some(o) = orig.get(i) {
            let seen_o = orig_counts.entry(o).or_insert(0);
            if *seen_o < pert_counts.get(o).copied().unwrap_or(0) {
                common += 1;
            }
            *seen_o += 1;
        }
        total += common as f64 / (i + 1) as f64;
    }
    Ok(total / pert.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMap {
    pub original_id: String,
    pub perturbed_id: String,
    pub perturbation: &'static str,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    pub map: f64,
    pub per_pair: Vec<PairMap>,
}

fn sorted_texts<'a>(
    ex: &'a AnnotatedExample,
    scores: &ScoreMap,
    rlr: Rlr,
    map_scope: MapScope,
    topk_scope: TopkScope,
) -> Result<Vec<&'a str>, MapError> {
    scores.check(ex.len())?;
    let ranges = selection_ranges(ex);
    let sorted = match map_scope {
        MapScope::Full => {
            SortedRationale::from_positions(&scores.scores, ranges.into_iter().flatten())
        }
        MapScope::TopK => select_topk_scoped(scores, &ranges, rlr, topk_scope).0,
    };
    let texts = ex.texts();
    Ok(sorted.positions.iter().map(|&p| texts[p]).collect())
}

/// Mean MAP over every pair of the dataset, in pair order.
pub fn map_corpus(
    scores: &HashMap<String, ScoreMap>,
    ds: &Dataset,
    rlr: Rlr,
    map_scope: MapScope,
    topk_scope: TopkScope,
) -> Result<MapReport, MapError> {
    let lookup = |id: &str| {
        let ex = ds
            .get(id)
            .ok_or_else(|| MapError::MissingScores(id.to_string()))?;
        let sm = scores
            .get(id)
            .ok_or_else(|| MapError::MissingScores(id.to_string()))?;
        Ok::<_, MapError>((ex, sm))
    };
    let mut per_pair = Vec::with_capacity(ds.pairs().len());
    for pair in ds.pairs() {
        let (oex, osm) = lookup(&pair.original_id)?;
        let (pex, psm) = lookup(&pair.perturbed_id)?;
        let orig = sorted_texts(oex, osm, rlr, map_scope, topk_scope)?;
        let pert = sorted_texts(pex, psm, rlr, map_scope, topk_scope)?;
        per_pair.push(PairMap {
            original_id: pair.original_id.clone(),
            perturbed_id: pair.perturbed_id.clone(),
            perturbation: pair.kind.as_str(),
            map: map_pair(&orig, &pert)?,
        });
    }
    let n = per_pair.len().max(1) as f64;
    let map = per_pair.iter().map(|p| p.map).sum::<f64>() / n;
    Ok(MapReport { map, per_pair })
}
