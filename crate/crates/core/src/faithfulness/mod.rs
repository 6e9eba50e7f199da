//! Faithfulness: MAP consistency across perturbation pairs, sufficiency and
//! comprehensiveness, and model accuracy on input variants.

mod map;
mod predictor;
mod sufcom;

pub use map::{map_corpus, map_pair, MapError, MapReport, MapScope, PairMap};
pub use predictor::{
    argmax, checked_predict, OfflinePredictor, PredictRequest, Predictor, PredictorError,
    ProbabilityRecord, VariantKind,
};
pub use sufcom::{
    suf_com_corpus, suf_com_instance, variant_performance, InstanceSufCom, SufCom, SufComError,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Ig,
    Att,
    Lime,
    External(String),
}

impl Method {
    pub fn as_str(&self) -> &str {
        match self {
            Method::Ig => "ig",
            Method::Att => "att",
            Method::Lime => "lime",
            Method::External(name) => name,
        }
    }

    pub fn parse(s: &str) -> Method {
        match s {
            "ig" => Method::Ig,
            "att" => Method::Att,
            "lime" => Method::Lime,
            other => Method::External(other.to_string()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Method::parse(&s))
    }
}

/// Per-token importance scores for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    #[serde(rename = "id")]
    pub instance_id: String,
    pub scores: Vec<f64>,
    pub method: Method,
    #[serde(rename = "model")]
    pub model_tag: String,
    /// Method-specific notes, e.g. whether a regularized solve was needed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreMapError {
    #[error("score map for {id:?} has {found} scores, instance has {expected} tokens")]
    LengthMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("score map for {id:?} has a non-finite score at position {position}")]
    NonFinite { id: String, position: usize },
}

impl ScoreMap {
    pub fn new(
        instance_id: impl Into<String>,
        scores: Vec<f64>,
        method: Method,
        model_tag: impl Into<String>,
    ) -> Self {
        ScoreMap {
            instance_id: instance_id.into(),
            scores,
            method,
            model_tag: model_tag.into(),
            meta: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn check(&self, instance_len: usize) -> Result<(), ScoreMapError> {
        if self.scores.len() != instance_len {
            return Err(ScoreMapError::LengthMismatch {
                id: self.instance_id.clone(),
                expected: instance_len,
                found: self.scores.len(),
            });
        }
        if let Some(position) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(ScoreMapError::NonFinite {
                id: self.instance_id.clone(),
                position,
            });
        }
        Ok(())
    }
}

/// Token positions in descending importance; ties by ascending position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedRationale {
    pub positions: Vec<usize>,
}

impl SortedRationale {
    /// Order `positions` by descending score.
    pub fn from_positions(scores: &[f64], positions: impl IntoIterator<Item = usize>) -> Self {
        let mut positions: Vec<usize> = positions.into_iter().collect();
        positions.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        positions.dedup();
        SortedRationale { positions }
    }

    /// Every position of the score map, sorted.
    pub fn full(scores: &[f64]) -> Self {
        Self::from_positions(scores, 0..scores.len())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Corpus-level faithfulness. Suf/Com are absent for tasks without class
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaithfulnessReport {
    pub map: f64,
    pub suf: Option<f64>,
    pub com: Option<f64>,
    pub per_pair: Vec<PairMap>,
    pub per_instance: Vec<InstanceSufCom>,
}

impl FaithfulnessReport {
    pub fn new(map: MapReport, sufcom: Option<Vec<InstanceSufCom>>) -> Self {
        let (suf, com, per_instance) = match sufcom {
            Some(rows) => {
                let n = rows.len().max(1) as f64;
                let suf = rows.iter().map(|r| r.scores.suf).sum::<f64>() / n;
                let com = rows.iter().map(|r| r.scores.com).sum::<f64>() / n;
                (Some(suf), Some(com), rows)
            }
            None => (None, None, Vec::new()),
        };
        FaithfulnessReport {
            map: map.map,
            suf,
            com,
            per_pair: map.per_pair,
            per_instance,
        }
    }
}
