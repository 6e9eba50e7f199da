//! Agreement between predicted and human rationales.
//!
//! Tokens are compared by position, so repeated words are distinct. Each
//! instance may carry several gold sets: Token-F1 scores against the best
//! matching set (smallest index on ties), and IOU takes its own maximum over
//! the sets independently of the Token-F1 choice.

use crate::corpus::{Dataset, RationaleSet};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// IOU at or above this value counts as a match.
pub const IOU_MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedRationale {
    #[serde(rename = "id")]
    pub instance_id: String,
    pub indices: BTreeSet<usize>,
}

impl PredictedRationale {
    pub fn new(instance_id: impl Into<String>, indices: impl IntoIterator<Item = usize>) -> Self {
        PredictedRationale {
            instance_id: instance_id.into(),
            indices: indices.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlausibilityError {
    #[error("instance {0:?} has no gold rationale sets")]
    EmptyGold(String),
    #[error("no prediction for instance {0:?}")]
    MissingPrediction(String),
    #[error("prediction for unknown instance {0:?}")]
    UnknownId(String),
    #[error("more than one prediction for instance {0:?}")]
    DuplicatePrediction(String),
    #[error("prediction for {id:?} has index {index} outside length {len}")]
    IndexOutOfRange {
        id: String,
        index: usize,
        len: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstancePlausibility {
    pub id: String,
    pub chosen_gold_set: usize,
    pub token_f1: f64,
    pub iou: f64,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlausibilityReport {
    pub token_f1: f64,
    pub iou_f1: f64,
    /// Sorted by instance id.
    pub per_instance: Vec<InstancePlausibility>,
}

fn overlap(pred: &BTreeSet<usize>, gold: &RationaleSet) -> usize {
    gold.indices().iter().filter(|i| pred.contains(i)).count()
}

/// F1 of one predicted set against one gold set; 0 when either side has no
/// overlap or the prediction is empty.
pub fn token_f1_single(pred: &BTreeSet<usize>, gold: &RationaleSet) -> f64 {
    let inter = overlap(pred, gold) as f64;
    let precision = if pred.is_empty() {
        0.0
    } else {
        inter / pred.len() as f64
    };
    let recall = if gold.is_empty() {
        0.0
    } else {
        inter / gold.len() as f64
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn iou_single(pred: &BTreeSet<usize>, gold: &RationaleSet) -> f64 {
    let inter = overlap(pred, gold);
    let union = pred.len() + gold.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Best Token-F1 over the gold sets and the index of the set attaining it.
pub fn token_f1_instance(
    pred: &PredictedRationale,
    gold: &[RationaleSet],
) -> Result<(f64, usize), PlausibilityError> {
    if gold.is_empty() {
        return Err(PlausibilityError::EmptyGold(pred.instance_id.clone()));
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, g) in gold.iter().enumerate() {
        let f1 = token_f1_single(&pred.indices, g);
        if f1 > best.0 {
            best = (f1, i);
        }
    }
    Ok(best)
}

/// Best IOU over the gold sets and whether it reaches the match threshold.
pub fn iou_instance(
    pred: &PredictedRationale,
    gold: &[RationaleSet],
) -> Result<(f64, bool), PlausibilityError> {
    if gold.is_empty() {
        return Err(PlausibilityError::EmptyGold(pred.instance_id.clone()));
    }
    let iou = gold
        .iter()
        .map(|g| iou_single(&pred.indices, g))
        .fold(0.0, f64::max);
    Ok((iou, iou >= IOU_MATCH_THRESHOLD))
}

/// Score every annotated example of `ds` against its prediction.
pub fn plausibility_corpus(
    preds: &[PredictedRationale],
    ds: &Dataset,
) -> Result<PlausibilityReport, PlausibilityError> {
    let mut by_id: BTreeMap<&str, &PredictedRationale> = BTreeMap::new();
    for p in preds {
        let ex = ds
            .get(&p.instance_id)
            .filter(|ex| ex.is_annotated())
            .ok_or_else(|| PlausibilityError::UnknownId(p.instance_id.clone()))?;
        if let Some(&index) = p.indices.iter().find(|&&i| i >= ex.len()) {
            return Err(PlausibilityError::IndexOutOfRange {
                id: p.instance_id.clone(),
                index,
                len: ex.len(),
            });
        }
        if by_id.insert(p.instance_id.as_str(), p).is_some() {
            return Err(PlausibilityError::DuplicatePrediction(
                p.instance_id.clone(),
            ));
        }
    }

    let mut ids: Vec<&str> = ds
        .examples()
        .iter()
        .filter(|ex| ex.is_annotated())
        .map(|ex| ex.id.as_str())
        .collect();
    ids.sort_unstable();

    let mut per_instance = Vec::with_capacity(ids.len());
    for id in ids {
        let pred = by_id
            .get(id)
            .ok_or_else(|| PlausibilityError::MissingPrediction(id.to_string()))?;
        let gold = &ds.get(id).expect("id from dataset").rationale_sets;
        let (token_f1, chosen_gold_set) = token_f1_instance(pred, gold)?;
        let (iou, matched) = iou_instance(pred, gold)?;
        per_instance.push(InstancePlausibility {
            id: id.to_string(),
            chosen_gold_set,
            token_f1,
            iou,
            matched,
        });
    }

    let n = per_instance.len().max(1) as f64;
    let token_f1 = per_instance.iter().map(|r| r.token_f1).sum::<f64>() / n;
    let iou_f1 = per_instance.iter().filter(|r| r.matched).count() as f64 / n;
    Ok(PlausibilityReport {
        token_f1,
        iou_f1,
        per_instance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotatedExample, Label, Task};
    use proptest::prelude::*;

    fn sets(v: &[&[usize]]) -> Vec<RationaleSet> {
        v.iter().map(|s| RationaleSet::new(s.to_vec())).collect()
    }

    // a=0 b=1 c=2 d=3
    #[test]
    fn best_gold_set_wins() {
        let pred = PredictedRationale::new("x", [0, 1, 2]);
        let (f1, chosen) = token_f1_instance(&pred, &sets(&[&[0, 1], &[1, 2, 3]])).unwrap();
        assert!((f1 - 0.8).abs() < 1e-12);
        assert_eq!(chosen, 0);
        let second = token_f1_single(&pred.indices, &RationaleSet::new(vec![1, 2, 3]));
        assert!((second - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_disjoint() {
        let gold = sets(&[&[1, 2]]);
        assert_eq!(
            token_f1_instance(&PredictedRationale::new("x", [1, 2]), &gold).unwrap(),
            (1.0, 0)
        );
        assert_eq!(
            token_f1_instance(&PredictedRationale::new("x", [0, 3]), &gold).unwrap(),
            (0.0, 0)
        );
        assert_eq!(
            iou_instance(&PredictedRationale::new("x", [1, 2]), &gold).unwrap(),
            (1.0, true)
        );
        assert_eq!(
            iou_instance(&PredictedRationale::new("x", [0]), &gold).unwrap(),
            (0.0, false)
        );
    }

    #[test]
    fn iou_boundary_is_inclusive() {
        let pred = PredictedRationale::new("x", [0, 1, 2, 3]);
        assert_eq!(iou_instance(&pred, &sets(&[&[0, 1]])).unwrap(), (0.5, true));
        let pred = PredictedRationale::new("x", [0, 1, 2, 3, 4]);
        assert_eq!(
            iou_instance(&pred, &sets(&[&[0, 1]])).unwrap(),
            (0.4, false)
        );
    }

    #[test]
    fn ties_pick_smallest_index() {
        let pred = PredictedRationale::new("x", [0, 1]);
        let (_, chosen) = token_f1_instance(&pred, &sets(&[&[0], &[1]])).unwrap();
        assert_eq!(chosen, 0);
    }

    #[test]
    fn empty_gold_and_empty_prediction() {
        let pred = PredictedRationale::new("x", []);
        assert!(matches!(
            token_f1_instance(&pred, &[]),
            Err(PlausibilityError::EmptyGold(_))
        ));
        assert!(matches!(
            iou_instance(&pred, &[]),
            Err(PlausibilityError::EmptyGold(_))
        ));
        assert_eq!(token_f1_instance(&pred, &sets(&[&[0]])).unwrap(), (0.0, 0));
        assert_eq!(iou_instance(&pred, &sets(&[&[0]])).unwrap(), (0.0, false));
    }

    fn two_instance_dataset() -> Dataset {
        let ex = |id: &str, gold: Vec<usize>| {
            AnnotatedExample::from_texts(
                id,
                Task::Sa,
                vec![(0..5).map(|i| format!("w{i}")).collect()],
                Label::Class("pos".into()),
                vec![RationaleSet::new(gold)],
            )
        };
        Dataset::new(vec![ex("a", vec![0, 1]), ex("b", vec![0, 1, 2, 3, 4])]).unwrap()
    }

    #[test]
    fn corpus_means() {
        let ds = two_instance_dataset();
        // a: exact match. b: pred {0,1} vs 5 gold → P=1, R=0.4, F1=4/7, iou 0.4.
        let preds = vec![
            PredictedRationale::new("b", [0, 1]),
            PredictedRationale::new("a", [0, 1]),
        ];
        let rep = plausibility_corpus(&preds, &ds).unwrap();
        assert_eq!(rep.per_instance[0].id, "a");
        assert!((rep.token_f1 - (1.0 + 4.0 / 7.0) / 2.0).abs() < 1e-12);
        assert_eq!(rep.iou_f1, 0.5);
    }

    #[test]
    fn corpus_errors() {
        let ds = two_instance_dataset();
        let only_a = vec![PredictedRationale::new("a", [0])];
        assert_eq!(
            plausibility_corpus(&only_a, &ds),
            Err(PlausibilityError::MissingPrediction("b".into()))
        );
        let unknown = vec![PredictedRationale::new("zz", [0])];
        assert_eq!(
            plausibility_corpus(&unknown, &ds),
            Err(PlausibilityError::UnknownId("zz".into()))
        );
        let oob = vec![PredictedRationale::new("a", [7])];
        assert!(matches!(
            plausibility_corpus(&oob, &ds),
            Err(PlausibilityError::IndexOutOfRange { index: 7, .. })
        ));
    }

    proptest! {
        #[test]
        fn max_over_sets_dominates_each_set(
            pred in proptest::collection::btree_set(0usize..8, 0..8),
            gold in proptest::collection::vec(proptest::collection::btree_set(0usize..8, 1..8), 1..4),
        ) {
            let gold: Vec<RationaleSet> = gold.into_iter().map(|s| s.into_iter().collect()).collect();
            let p = PredictedRationale { instance_id: "x".into(), indices: pred.clone() };
            let (best, _) = token_f1_instance(&p, &gold).unwrap();
            prop_assert!((0.0..=1.0).contains(&best));
            for g in &gold {
                prop_assert!(best >= token_f1_single(&pred, g));
            }
            let exact = gold.iter().any(|g| g.to_set() == pred);
            prop_assert_eq!(best == 1.0, exact);
        }

        #[test]
        fn adding_correct_token_keeps_match(
            gold in proptest::collection::btree_set(0usize..10, 1..8),
            keep in proptest::collection::vec(any::<bool>(), 10),
        ) {
            let g: RationaleSet = gold.iter().copied().collect();
            let pred: BTreeSet<usize> = gold.iter().copied().filter(|&i| keep[i]).collect();
            let before = iou_instance(&PredictedRationale { instance_id: "x".into(), indices: pred.clone() }, std::slice::from_ref(&g)).unwrap();
            if let Some(&extra) = gold.iter().find(|i| !pred.contains(i)) {
                let mut grown = pred.clone();
                grown.insert(extra);
                let after = iou_instance(&PredictedRationale { instance_id: "x".into(), indices: grown }, std::slice::from_ref(&g)).unwrap();
                prop_assert!(!before.1 || after.1);
            }
        }
    }
}
