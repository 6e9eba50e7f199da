use super::SaliencyError;
use crate::corpus::Token;
use crate::faithfulness::{Method, ScoreMap};
use crate::linalg::dot;
use crate::refmodels::AttnRefModel;
use serde::{Deserialize, Serialize};

/// Normalizers smaller than this in magnitude are rejected.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

/// Externally produced self-attention for one instance.
///
/// `heads[h][q][k]` is the weight from query position `q` to key position
/// `k`. `wordpiece_map[k]` is the source token of piece `k`, or `null` for
/// special pieces such as `[CLS]` and `[SEP]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTensor {
    #[serde(rename = "id")]
    pub instance_id: String,
    pub heads: Vec<Vec<Vec<f64>>>,
    pub wordpiece_map: Vec<Option<usize>>,
}

/// `x_i / Σ_j x_j`.
pub fn normalize_dot_scores(dots: &[f64]) -> Result<Vec<f64>, SaliencyError> {
    let total: f64 = dots.iter().sum();
    if total.is_nan() || total.abs() < DEGENERATE_TOLERANCE {
        return Err(SaliencyError::DegenerateDenominator { value: total });
    }
    Ok(dots.iter().map(|d| d / total).collect())
}

/// `score_i = (h_fc · h_i) / Σ_j (h_fc · h_j)`, normalized within each
/// segment.
pub fn attention_scores_ref(
    model: &AttnRefModel,
    instance_id: &str,
    segments: &[Vec<Token>],
    model_tag: &str,
) -> Result<ScoreMap, SaliencyError> {
    let hidden = model.hidden(segments)?;
    let mut scores = Vec::new();
    for states in &hidden.states {
        let dots: Vec<f64> = states.iter().map(|h| dot(&hidden.fc, h)).collect();
        if dots.is_empty() {
            return Err(SaliencyError::EmptyInput(instance_id.to_string()));
        }
        scores.extend(normalize_dot_scores(&dots)?);
    }
    Ok(ScoreMap::new(instance_id, scores, Method::Att, model_tag))
}

/// Head-averaged `[CLS]` row, summed over each token's pieces.
pub fn aggregate_attention(
    t: &AttentionTensor,
    cls_index: usize,
    n_tokens: usize,
    model_tag: &str,
) -> Result<ScoreMap, SaliencyError> {
    let bad = |msg: String| SaliencyError::BadWordpieceMap(msg);
    if t.heads.is_empty() {
        return Err(SaliencyError::InvalidConfig(
            "attention tensor has no heads".into(),
        ));
    }
    let pieces = t.wordpiece_map.len();
    for (h, head) in t.heads.iter().enumerate() {
        if cls_index >= head.len() {
            return Err(SaliencyError::InvalidConfig(format!(
                "cls index {cls_index} out of range for head {h} with {} rows",
                head.len()
            )));
        }
        if head.iter().any(|row| row.len() != pieces) {
            return Err(bad(format!(
                "head {h} has rows of a length other than {pieces}"
            )));
        }
        if head.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SaliencyError::InvalidConfig(format!(
                "head {h} has non-finite weights"
            )));
        }
    }
    let mut covered = vec![false; n_tokens];
    for (k, entry) in t.wordpiece_map.iter().enumerate() {
        if let Some(tok) = *entry {
            if tok >= n_tokens {
                return Err(bad(format!(
                    "piece {k} maps to token {tok}, instance has {n_tokens}"
                )));
            }
            covered[tok] = true;
        }
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(bad(format!("token {missing} has no pieces")));
    }
    let n_heads = t.heads.len() as f64;
    let mut scores = vec![0.0; n_tokens];
    for (k, entry) in t.wordpiece_map.iter().enumerate() {
        if let Some(tok) = *entry {
            let mean = t.heads.iter().map(|head| head[cls_index][k]).sum::<f64>() / n_heads;
            scores[tok] += mean;
        }
    }
    Ok(ScoreMap::new(
        t.instance_id.clone(),
        scores,
        Method::Att,
        model_tag,
    ))
}

/// `a_j = (1/|Q|) Σ_i e_ij` with `e_ij = d_ij / Σ_k d_ik`, where `d` is the
/// question-by-passage dot-product matrix.
pub fn mrc_attention_scores(dots: &[Vec<f64>]) -> Result<Vec<f64>, SaliencyError> {
    let Some(first) = dots.first() else {
        return Err(SaliencyError::InvalidConfig(
            "question has no positions".into(),
        ));
    };
    let passage = first.len();
    if passage == 0 || dots.iter().any(|r| r.len() != passage) {
        return Err(SaliencyError::InvalidConfig(
            "dot matrix rows must share a non-zero length".into(),
        ));
    }
    let mut a = vec![0.0; passage];
    for row in dots {
        for (acc, e) in a.iter_mut().zip(normalize_dot_scores(row)?) {
            *acc += e;
        }
    }
    let q = dots.len() as f64;
    a.iter_mut().for_each(|v| *v /= q);
    Ok(a)
}

/// MRC attention from a two-segment reference model. Question positions
/// score 0; passage positions get `a_j`.
pub fn mrc_attention_ref(
    model: &AttnRefModel,
    instance_id: &str,
    segments: &[Vec<Token>],
    model_tag: &str,
) -> Result<ScoreMap, SaliencyError> {
    let hidden = model.hidden(segments)?;
    let [question, passage] = hidden.states.as_slice() else {
        return Err(SaliencyError::InvalidConfig(
            "mrc attention needs question and passage".into(),
        ));
    };
    let dots: Vec<Vec<f64>> = question
        .iter()
        .map(|hq| passage.iter().map(|hp| dot(hq, hp)).collect())
        .collect();
    let mut scores = vec![0.0; question.len()];
    scores.extend(mrc_attention_scores(&dots)?);
    Ok(ScoreMap::new(instance_id, scores, Method::Att, model_tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refmodels::testutil::segs;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn dot_normalization() {
        assert!(close(
            &normalize_dot_scores(&[3.0, 1.0]).unwrap(),
            &[0.75, 0.25]
        ));
        assert!(close(
            &normalize_dot_scores(&[2.0, 2.0, 2.0, 2.0]).unwrap(),
            &[0.25; 4]
        ));
        assert!(close(
            &normalize_dot_scores(&[0.0, 5.0, 0.0]).unwrap(),
            &[0.0, 1.0, 0.0]
        ));
        assert!(matches!(
            normalize_dot_scores(&[1.0, -1.0]),
            Err(SaliencyError::DegenerateDenominator { .. })
        ));
    }

    fn tensor(heads: Vec<Vec<Vec<f64>>>, map: Vec<Option<usize>>) -> AttentionTensor {
        AttentionTensor {
            instance_id: "x".into(),
            heads,
            wordpiece_map: map,
        }
    }

    #[test]
    fn aggregation_cases() {
        let one = tensor(
            vec![vec![vec![0.3, 0.7], vec![0.5, 0.5]]],
            vec![Some(0), Some(1)],
        );
        assert!(close(
            &aggregate_attention(&one, 0, 2, "e").unwrap().scores,
            &[0.3, 0.7]
        ));

        let two = tensor(
            vec![vec![vec![0.2, 0.8]], vec![vec![0.6, 0.4]]],
            vec![Some(0), Some(1)],
        );
        assert!(close(
            &aggregate_attention(&two, 0, 2, "e").unwrap().scores,
            &[0.4, 0.6]
        ));

        let split = tensor(
            vec![vec![vec![0.6, 0.1, 0.3]]],
            vec![None, Some(0), Some(0)],
        );
        assert!(close(
            &aggregate_attention(&split, 0, 1, "e").unwrap().scores,
            &[0.4]
        ));
    }

    #[test]
    fn bad_maps() {
        let t = tensor(vec![vec![vec![0.5, 0.5]]], vec![Some(0), Some(2)]);
        assert!(matches!(
            aggregate_attention(&t, 0, 2, "e"),
            Err(SaliencyError::BadWordpieceMap(_))
        ));
        let gap = tensor(vec![vec![vec![0.5, 0.5]]], vec![Some(0), Some(0)]);
        assert!(matches!(
            aggregate_attention(&gap, 0, 2, "e"),
            Err(SaliencyError::BadWordpieceMap(_))
        ));
        let short = tensor(vec![vec![vec![0.5]]], vec![Some(0), Some(1)]);
        assert!(matches!(
            aggregate_attention(&short, 0, 2, "e"),
            Err(SaliencyError::BadWordpieceMap(_))
        ));
    }

    #[test]
    fn tensor_json() {
        let t: AttentionTensor =
            serde_json::from_str(r#"{"id":"a","heads":[[[0.5,0.5]]],"wordpiece_map":[null,0]}"#)
                .unwrap();
        assert_eq!(t.wordpiece_map, vec![None, Some(0)]);
    }

    #[test]
    fn mrc_cases() {
        let a = mrc_attention_scores(&[vec![1.0, 3.0], vec![2.0, 2.0]]).unwrap();
        assert!(close(&a, &[0.375, 0.625]));
        assert!(close(
            &mrc_attention_scores(&[vec![1.0, 3.0]]).unwrap(),
            &[0.25, 0.75]
        ));
        let u = mrc_attention_scores(&[vec![2.0; 4], vec![2.0; 4], vec![2.0; 4]]).unwrap();
        assert!(close(&u, &[0.25; 4]));
    }

    #[test]
    fn reference_model_scores_sum_to_one_per_segment() {
        for seed in 0..5 {
            let m = AttnRefModel::seeded(
                vec!["a".into(), "b".into()],
                2,
                8,
                seed,
                ["how", "do", "i", "cook"],
            );
            let s = segs(&["how do i cook", "cook what now"]);
            let map = attention_scores_ref(&m, "x", &s, "attn").unwrap();
            assert!((map.scores[..4].iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((map.scores[4..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mrc = mrc_attention_ref(&m, "x", &s, "attn").unwrap();
            assert!(mrc.scores[..4].iter().all(|&v| v == 0.0));
            assert!((mrc.scores[4..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn aggregation_preserves_mass(
            heads in 1usize..4,
            pieces in prop::collection::vec(0usize..4, 1..10),
            seed in prop::collection::vec(0.0f64..1.0, 40),
        ) {
            let n_tokens = pieces.iter().max().unwrap() + 1;
            let mut map: Vec<Option<usize>> = pieces.iter().map(|&p| Some(p)).collect();
            // Every token needs at least one piece.
            for tok in 0..n_tokens {
                if !pieces.contains(&tok) {
                    map.push(Some(tok));
                }
            }
            let width = map.len();
            let row = |h: usize| (0..width).map(|k| seed[(h * 7 + k) % seed.len()]).collect::<Vec<_>>();
            let t = tensor((0..heads).map(|h| vec![row(h)]).collect(), map);
            let got: f64 = aggregate_attention(&t, 0, n_tokens, "e").unwrap().scores.iter().sum();
            let want = (0..heads).map(|h| row(h).iter().sum::<f64>()).sum::<f64>() / heads as f64;
            prop_assert!((got - want).abs() < 1e-9);
        }
    }
}
