use super::SaliencyError;
use crate::corpus::{AnnotatedExample, Token};
use crate::faithfulness::{
    checked_predict, Method, PredictRequest, Predictor, ScoreMap, VariantKind,
};
use crate::linalg::{weighted_least_squares, WlsError};
use crate::refmodels::ModelError;
use crate::seed::keyed_rng;
use rand::seq::index::sample;
use std::collections::HashMap;

/// Ridge added when the weighted normal equations are singular.
pub const LIME_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimeConfig {
    pub n_samples: usize,
    pub k_keep: usize,
    /// Kernel width; `None` means `0.75 · sqrt(unique token count)`.
    pub kernel_width: Option<f64>,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 5000,
            k_keep: 10,
            kernel_width: None,
            seed: 0,
        }
    }
}

impl LimeConfig {
    fn check(&self) -> Result<(), SaliencyError> {
        if self.n_samples == 0 || self.k_keep == 0 {
            return Err(SaliencyError::InvalidConfig(
                "lime needs n_samples ≥ 1 and k_keep ≥ 1".into(),
            ));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(SaliencyError::InvalidConfig(format!(
                    "kernel width must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }
}

struct SegmentFit {
    scores: Vec<f64>,
    ridge_used: bool,
}

fn explain_segment(
    pred: &dyn Predictor,
    ex: &AnnotatedExample,
    seg: usize,
    class: usize,
    cfg: &LimeConfig,
) -> Result<SegmentFit, SaliencyError> {
    let tokens = &ex.segments[seg];
    let t = tokens.len();
    if t == 0 {
        return Err(SaliencyError::EmptyInput(ex.id.clone()));
    }
    let mut type_ids: HashMap<&str, usize> = HashMap::new();
    let type_of: Vec<usize> = tokens
        .iter()
        .map(|tok| {
            let next = type_ids.len();
            *type_ids.entry(tok.text.as_str()).or_insert(next)
        })
        .collect();
    let u = type_ids.len();
    let keep = cfg.k_keep.min(t);
    let width = cfg.kernel_width.unwrap_or(0.75 * (u as f64).sqrt());

    let seg_key = seg.to_string();
    let mut rng = keyed_rng(cfg.seed, &["lime", &ex.id, &seg_key]);
    let mut design = Vec::with_capacity(cfg.n_samples);
    let mut targets = Vec::with_capacity(cfg.n_samples);
    let mut weights = Vec::with_capacity(cfg.n_samples);
    let mut segments = ex.segments.clone();
    for _ in 0..cfg.n_samples {
        let mut picked = sample(&mut rng, t, keep).into_vec();
        picked.sort_unstable();
        let mut z = vec![0.0; u];
        for &p in &picked {
            z[type_of[p]] = 1.0;
        }
        segments[seg] = picked
            .iter()
            .map(|&p| tokens[p].clone())
            .collect::<Vec<Token>>();
        let probs = checked_predict(
            pred,
            &PredictRequest {
                instance_id: &ex.id,
                variant: VariantKind::Sample,
                segments: &segments,
            },
        )?;
        // Cosine distance between z and the all-ones vector.
        let present: f64 = z.iter().sum();
        let d = 1.0 - (present / u as f64).sqrt();
        weights.push((-(d * d) / (width * width)).exp());
        targets.push(probs[class]);
        design.push(z);
    }
    let fit = weighted_least_squares(&design, &targets, &weights, true, LIME_RIDGE).map_err(
        |e| match e {
            WlsError::Singular(r) => SaliencyError::SingularDesign(r),
            WlsError::Shape { .. } => unreachable!("design is built with matching lengths"),
        },
    )?;
    Ok(SegmentFit {
        scores: type_of.iter().map(|&ty| fit.coefficients[1 + ty]).collect(),
        ridge_used: fit.ridge_used,
    })
}

/// LIME with fixed-size token subsets and presence features over token
/// types. Each pair-task segment is perturbed separately while the other is
/// held at its original tokens; the segment maps are concatenated.
///
/// Sampling is keyed by `(seed, instance id, segment)`, so results do not
/// depend on evaluation order.
pub fn lime_explain(
    pred: &dyn Predictor,
    ex: &AnnotatedExample,
    class: usize,
    cfg: &LimeConfig,
    model_tag: &str,
) -> Result<ScoreMap, SaliencyError> {
    cfg.check()?;
    if !ex.task.is_classification() {
        return Err(SaliencyError::UnsupportedTask {
            method: "lime",
            task: ex.task.to_string(),
        });
    }
    let classes = pred.class_names().len();
    if class >= classes {
        return Err(ModelError::ClassOutOfRange { class, classes }.into());
    }
    let mut scores = Vec::with_capacity(ex.len());
    let mut ridge_segments = Vec::new();
    for seg in 0..ex.segments.len() {
        let fit = explain_segment(pred, ex, seg, class, cfg)?;
        if fit.ridge_used {
            ridge_segments.push(seg.to_string());
        }
        scores.extend(fit.scores);
    }
    let mut map = ScoreMap::new(ex.id.clone(), scores, Method::Lime, model_tag);
    map.meta
        .insert("class".into(), pred.class_names()[class].clone());
    map.meta
        .insert("n_samples".into(), cfg.n_samples.to_string());
    map.meta.insert("k_keep".into(), cfg.k_keep.to_string());
    if !ridge_segments.is_empty() {
        map.meta.insert("ridge".into(), format!("{LIME_RIDGE:e}"));
        map.meta
            .insert("ridge_segments".into(), ridge_segments.join(","));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Task};
    use crate::faithfulness::PredictorError;
    use std::collections::BTreeMap;

    /// `F_pos = base + Σ coefficient(type present)`.
    struct Planted {
        classes: Vec<String>,
        base: f64,
        coef: BTreeMap<&'static str, f64>,
    }

    impl Predictor for Planted {
        fn class_names(&self) -> &[String] {
            &self.classes
        }
        fn predict(&self, req: &PredictRequest<'_>) -> Result<Vec<f64>, PredictorError> {
            let mut seen = std::collections::BTreeSet::new();
            for t in req.segments.iter().flatten() {
                seen.insert(t.text.as_str());
            }
            let p = self.base + seen.iter().filter_map(|t| self.coef.get(t)).sum::<f64>();
            Ok(vec![1.0 - p, p])
        }
    }

    fn sa(text: &str) -> AnnotatedExample {
        AnnotatedExample::from_whitespace(
            "e1",
            Task::Sa,
            &[text],
            Label::Class("pos".into()),
            vec![],
        )
    }

    fn planted(coef: &[(&'static str, f64)]) -> Planted {
        Planted {
            classes: vec!["neg".into(), "pos".into()],
            base: 0.3,
            coef: coef.iter().copied().collect(),
        }
    }

    fn small() -> LimeConfig {
        LimeConfig {
            n_samples: 2000,
            k_keep: 5,
            ..LimeConfig::default()
        }
    }

    #[test]
    fn constant_predictor_gives_zero_weights() {
        let ex = sa("the film was very very good but the plot was thin");
        let map = lime_explain(&planted(&[]), &ex, 1, &small(), "c").unwrap();
        assert!(
            map.scores.iter().all(|v| v.abs() < 1e-8),
            "{:?}",
            map.scores
        );
    }

    #[test]
    fn planted_weight_recovered() {
        let ex = sa("the film was very very good but the plot was thin");
        let map = lime_explain(&planted(&[("good", 0.4)]), &ex, 1, &small(), "p").unwrap();
        assert!((map.scores[5] - 0.4).abs() < 0.02, "{:?}", map.scores);
        for (i, v) in map.scores.iter().enumerate() {
            if i != 5 {
                assert!(v.abs() < 0.02, "position {i}: {v}");
            }
        }
        assert!(!map.meta.contains_key("ridge"));
    }

    #[test]
    fn duplicates_share_a_score() {
        let ex = sa("very very good");
        let map = lime_explain(&planted(&[("good", 0.2)]), &ex, 1, &small(), "p").unwrap();
        assert_eq!(map.scores[0], map.scores[1]);
    }

    #[test]
    fn ridge_is_reported_when_every_sample_is_the_full_input() {
        let ex = sa("good film");
        let map = lime_explain(&planted(&[("good", 0.2)]), &ex, 1, &small(), "p").unwrap();
        assert_eq!(map.meta["ridge"], "1e-6");
        assert!(map.scores.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn deterministic_under_seed() {
        let ex = sa("the film was very very good but the plot was thin");
        let p = planted(&[("good", 0.4), ("thin", -0.2)]);
        let a = lime_explain(&p, &ex, 1, &small(), "p").unwrap();
        let b = lime_explain(&p, &ex, 1, &small(), "p").unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let other = LimeConfig { seed: 1, ..small() };
        let c = lime_explain(&p, &ex, 1, &other, "p").unwrap();
        assert_ne!(a.scores, c.scores);
    }

    #[test]
    fn pair_task_segments_are_explained_separately() {
        let ex = AnnotatedExample::from_whitespace(
            "s",
            Task::Sts,
            &[
                "how do i cook rice rice and beans",
                "what is the way to cook rice",
            ],
            Label::Class("same".into()),
            vec![],
        );
        let map = lime_explain(&planted(&[("cook", 0.3)]), &ex, 1, &small(), "p").unwrap();
        assert_eq!(map.scores.len(), ex.len());
        // `cook` is present in the unperturbed segment either way, so its
        // presence in the perturbed one adds nothing.
        assert!(
            map.scores.iter().all(|v| v.abs() < 1e-5),
            "{:?}",
            map.scores
        );
        // The second segment has no repeated tokens, so every sample keeps
        // the same number of types and the design is collinear.
        assert_eq!(map.meta["ridge_segments"], "1");
    }

    #[test]
    fn mrc_is_unsupported() {
        let ex = AnnotatedExample::from_whitespace(
            "m",
            Task::Mrc,
            &["who", "bob did"],
            Label::Unanswerable,
            vec![],
        );
        assert!(matches!(
            lime_explain(&planted(&[]), &ex, 0, &small(), "p"),
            Err(SaliencyError::UnsupportedTask { .. })
        ));
    }
}
