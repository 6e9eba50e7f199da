use crate::faithfulness::{PredictRequest, Predictor, PredictorError};
use std::collections::BTreeMap;

/// Probability put on the triggered class.
pub const ORACLE_HIT_PROB: f64 = 0.9;
/// Mass shared by the other classes when a trigger fires.
const ORACLE_MISS_MASS: f64 = 0.1;

/// Predictor that looks only at the presence of trigger tokens.
///
/// With at least one trigger present, the class with the most trigger
/// occurrences (lowest index on ties) gets [`ORACLE_HIT_PROB`] and the rest
/// is spread evenly; without triggers the output is uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct RationaleOracle {
    classes: Vec<String>,
    triggers: BTreeMap<String, usize>,
}

impl RationaleOracle {
    pub fn triggers(&self) -> &BTreeMap<String, usize> {
        &self.triggers
    }

    pub fn probabilities<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<f64> {
        let c = self.classes.len();
        let mut votes = vec![0usize; c];
        for t in tokens {
            if let Some(&class) = self.triggers.get(t) {
                votes[class] += 1;
            }
        }
        let top = votes.iter().copied().max().unwrap_or(0);
        if top == 0 || c < 2 {
            return vec![1.0 / c as f64; c];
        }
        let winner = votes.iter().position(|&v| v == top).expect("max exists");
        let rest = ORACLE_MISS_MASS / (c - 1) as f64;
        (0..c)
            .map(|k| if k == winner { ORACLE_HIT_PROB } else { rest })
            .collect()
    }
}

/// Build an oracle from `(token, class name)` triggers.
pub fn make_rationale_oracle<S: AsRef<str>>(
    classes: Vec<String>,
    triggers: impl IntoIterator<Item = (S, S)>,
) -> Result<RationaleOracle, String> {
    let mut map = BTreeMap::new();
    for (tok, class) in triggers {
        let idx = classes
            .iter()
            .position(|c| c == class.as_ref())
            .ok_or_else(|| {
                format!(
                    "trigger class {:?} is not one of {classes:?}",
                    class.as_ref()
                )
            })?;
        map.insert(tok.as_ref().to_string(), idx);
    }
    if classes.is_empty() {
        return Err("oracle needs at least one class".into());
    }
    Ok(RationaleOracle {
        classes,
        triggers: map,
    })
}

impl Predictor for RationaleOracle {
    fn class_names(&self) -> &[String] {
        &self.classes
    }

    fn predict(&self, req: &PredictRequest<'_>) -> Result<Vec<f64>, PredictorError> {
        Ok(self.probabilities(req.segments.iter().flatten().map(|t| t.text.as_str())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle() -> RationaleOracle {
        make_rationale_oracle(
            vec!["pos".into(), "neg".into()],
            [("good", "pos"), ("bad", "neg")],
        )
        .unwrap()
    }

    #[test]
    fn trigger_present_and_absent() {
        let o = oracle();
        assert_eq!(o.probabilities(["a", "good", "film"]), vec![0.9, 0.1]);
        assert_eq!(o.probabilities(["a", "film"]), vec![0.5, 0.5]);
        assert_eq!(o.probabilities(["bad", "bad", "good"]), vec![0.1, 0.9]);
    }

    #[test]
    fn unknown_trigger_class() {
        assert!(make_rationale_oracle(vec!["pos".into()], [("x", "neg")]).is_err());
    }
}
