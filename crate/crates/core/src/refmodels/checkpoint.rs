use super::{AttnRefModel, BowSoftmaxModel, DifferentiableModel, EmbeddingTable, ModelError};
use crate::faithfulness::Predictor;
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bow,
    Attn,
}

/// JSON checkpoint. With `weights` absent or null, parameters are seeded
/// from `seed` and embeddings are generated for the caller's vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(rename = "type")]
    pub kind: ModelKind,
    pub dim: usize,
    pub classes: Vec<String>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
    #[serde(default)]
    pub weights: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BowWeights {
    embeddings: BTreeMap<String, Vec<f64>>,
    unk: Vec<f64>,
    w: Matrix,
    b: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AttnWeights {
    embeddings: BTreeMap<String, Vec<f64>>,
    unk: Vec<f64>,
    wz: Matrix,
    uz: Matrix,
    bz: Vec<f64>,
    wc: Matrix,
    uc: Matrix,
    bc: Vec<f64>,
    fc: Matrix,
    bf: Vec<f64>,
    wo: Matrix,
    bo: Vec<f64>,
}

/// A loaded reference model.
#[derive(Debug, Clone, PartialEq)]
pub enum RefModel {
    Bow(BowSoftmaxModel),
    Attn(AttnRefModel),
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn check_matrix(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<(), ModelError> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(bad(format!("{name} must be {rows}x{cols}")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn check_vector(name: &str, v: &[f64], len: usize) -> Result<(), ModelError> {
    check_matrix(name, &vec![v.to_vec()], 1, len)
}

impl RefModel {
    pub fn from_checkpoint<'a>(
        ck: &Checkpoint,
        vocab: impl IntoIterator<Item = &'a str>,
        default_segments: usize,
    ) -> Result<Self, ModelError> {
        if ck.dim == 0 {
            return Err(bad("dim must be positive"));
        }
        if ck.classes.len() < 2 {
            return Err(bad("at least two classes are required"));
        }
        let segments = ck.segments.unwrap_or(default_segments);
        if !(1..=2).contains(&segments) {
            return Err(bad("segments must be 1 or 2"));
        }
        let d = ck.dim;
        let c = ck.classes.len();
        let Some(weights) = ck.weights.clone().filter(|w| !w.is_null()) else {
            return Ok(match ck.kind {
                ModelKind::Bow => RefModel::Bow(BowSoftmaxModel::seeded(
                    ck.classes.clone(),
                    d,
                    ck.seed,
                    vocab,
                )),
                ModelKind::Attn => RefModel::Attn(AttnRefModel::seeded(
                    ck.classes.clone(),
                    segments,
                    d,
                    ck.seed,
                    vocab,
                )),
            });
        };
        match ck.kind {
            ModelKind::Bow => {
                let w: BowWeights =
                    serde_json::from_value(weights).map_err(|e| bad(e.to_string()))?;
                check_matrix("w", &w.w, c, d)?;
                check_vector("b", &w.b, c)?;
                Ok(RefModel::Bow(BowSoftmaxModel {
                    embedding: EmbeddingTable::from_parts(d, w.embeddings, w.unk).map_err(bad)?,
                    classes: ck.classes.clone(),
                    weights: w.w,
                    bias: w.b,
                }))
            }
            ModelKind::Attn => {
                let w: AttnWeights =
                    serde_json::from_value(weights).map_err(|e| bad(e.to_string()))?;
                let wide = segments * d;
                for (name, m) in [("wz", &w.wz), ("uz", &w.uz), ("wc", &w.wc), ("uc", &w.uc)] {
                    check_matrix(name, m, d, d)?;
                }
                check_matrix("fc", &w.fc, d, wide)?;
                check_matrix("wo", &w.wo, c, wide)?;
                for (name, v) in [("bz", &w.bz), ("bc", &w.bc), ("bf", &w.bf)] {
                    check_vector(name, v, d)?;
                }
                check_vector("bo", &w.bo, c)?;
                Ok(RefModel::Attn(AttnRefModel {
                    embedding: EmbeddingTable::from_parts(d, w.embeddings, w.unk).map_err(bad)?,
                    classes: ck.classes.clone(),
                    segments,
                    wz: w.wz,
                    uz: w.uz,
                    bz: w.bz,
                    wc: w.wc,
                    uc: w.uc,
                    bc: w.bc,
                    fc: w.fc,
                    bf: w.bf,
                    wo: w.wo,
                    bo: w.bo,
                }))
            }
        }
    }

    /// Checkpoint with every parameter written out.
    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        match self {
            RefModel::Bow(m) => Checkpoint {
                kind: ModelKind::Bow,
                dim: m.embedding.dim(),
                classes: m.classes.clone(),
                seed,
                segments: None,
                weights: Some(
                    serde_json::to_value(BowWeights {
                        embeddings: m.embedding.vectors().clone(),
                        unk: m.embedding.unk().to_vec(),
                        w: m.weights.clone(),
                        b: m.bias.clone(),
                    })
                    .expect("weights serialize"),
                ),
            },
            RefModel::Attn(m) => Checkpoint {
                kind: ModelKind::Attn,
                dim: m.dim(),
                classes: m.classes.clone(),
                seed,
                segments: Some(m.segments),
                weights: Some(
                    serde_json::to_value(AttnWeights {
                        embeddings: m.embedding.vectors().clone(),
                        unk: m.embedding.unk().to_vec(),
                        wz: m.wz.clone(),
                        uz: m.uz.clone(),
                        bz: m.bz.clone(),
                        wc: m.wc.clone(),
                        uc: m.uc.clone(),
                        bc: m.bc.clone(),
                        fc: m.fc.clone(),
                        bf: m.bf.clone(),
                        wo: m.wo.clone(),
                        bo: m.bo.clone(),
                    })
                    .expect("weights serialize"),
                ),
            },
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            RefModel::Bow(_) => "bow",
            RefModel::Attn(_) => "attn",
        }
    }

    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            RefModel::Bow(m) => m,
            RefModel::Attn(m) => m,
        }
    }

    pub fn differentiable(&self) -> &dyn DifferentiableModel {
        match self {
            RefModel::Bow(m) => m,
            RefModel::Attn(m) => m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refmodels::testutil::segs;

    #[test]
    fn seeded_checkpoint_round_trips_through_json() {
        for kind in ["bow", "attn"] {
            let ck: Checkpoint = serde_json::from_str(&format!(
                r#"{{"type":"{kind}","dim":4,"classes":["a","b"],"seed":9}}"#
            ))
            .unwrap();
            let model = RefModel::from_checkpoint(&ck, ["x", "y"], 1).unwrap();
            let text = serde_json::to_string(&model.to_checkpoint(9)).unwrap();
            let back: Checkpoint = serde_json::from_str(&text).unwrap();
            let reloaded = RefModel::from_checkpoint(&back, [], 1).unwrap();
            assert_eq!(reloaded, model);
            let s = segs(&["x y z"]);
            assert_eq!(
                model
                    .predictor()
                    .predict(&crate::faithfulness::PredictRequest {
                        instance_id: "i",
                        variant: crate::faithfulness::VariantKind::Full,
                        segments: &s
                    }),
                reloaded
                    .predictor()
                    .predict(&crate::faithfulness::PredictRequest {
                        instance_id: "i",
                        variant: crate::faithfulness::VariantKind::Full,
                        segments: &s
                    })
            );
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let ck: Checkpoint = serde_json::from_str(
            r#"{"type":"bow","dim":2,"classes":["a","b"],"seed":0,
                "weights":{"embeddings":{},"unk":[0,0],"w":[[1,2]],"b":[0,0]}}"#,
        )
        .unwrap();
        let err = RefModel::from_checkpoint(&ck, [], 1).unwrap_err();
        assert_eq!(err, ModelError::Checkpoint("w must be 2x2".into()));
    }
}
