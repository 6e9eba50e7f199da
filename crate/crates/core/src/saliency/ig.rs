use super::SaliencyError;
use crate::corpus::Token;
use crate::faithfulness::{Method, ScoreMap};
use crate::refmodels::DifferentiableModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IgConfig {
    pub steps: usize,
}

impl Default for IgConfig {
    fn default() -> Self {
        IgConfig { steps: 300 }
    }
}

impl IgConfig {
    pub fn new(steps: usize) -> Result<Self, SaliencyError> {
        if steps == 0 {
            return Err(SaliencyError::InvalidConfig(
                "ig steps must be at least 1".into(),
            ));
        }
        Ok(IgConfig { steps })
    }
}

/// Integrated gradients from the all-zero embedding baseline.
///
/// The path integral uses the midpoint rule at `α = (i − 0.5) / steps`, and
/// each token's attribution is the signed sum over embedding dimensions, so
/// attributions add up to `F_j(x) − F_j(0)` up to quadrature error.
pub fn integrated_gradients<M: DifferentiableModel + ?Sized>(
    model: &M,
    instance_id: &str,
    segments: &[Vec<Token>],
    class: usize,
    cfg: IgConfig,
    model_tag: &str,
) -> Result<ScoreMap, SaliencyError> {
    IgConfig::new(cfg.steps)?;
    let input = model.embed(segments);
    if input.is_empty() {
        return Err(SaliencyError::EmptyInput(instance_id.to_string()));
    }
    let mut total = vec![vec![0.0; input.dim()]; input.len()];
    for i in 1..=cfg.steps {
        let alpha = (i as f64 - 0.5) / cfg.steps as f64;
        let grad = model.class_gradient(&input.scaled(alpha), class)?;
        for (acc, g) in total.iter_mut().zip(&grad) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
    let steps = cfg.steps as f64;
    let scores = input
        .rows
        .iter()
        .zip(&total)
        .map(|(e, g)| e.iter().zip(g).map(|(x, gi)| x * gi / steps).sum())
        .collect();
    let mut map = ScoreMap::new(instance_id, scores, Method::Ig, model_tag);
    map.meta.insert("steps".into(), cfg.steps.to_string());
    map.meta
        .insert("class".into(), model.classes()[class].clone());
    Ok(map)
}
