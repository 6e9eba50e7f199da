use super::{check_class, embed_with, DifferentiableModel, Embedded, EmbeddingTable, ModelError};
use crate::corpus::Token;
use crate::linalg::{dot, Matrix};

/// Linear class scores `F_j = w_j · mean(e_t)`. Not a probability model; its
/// gradient is constant, which makes path integrals exact.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub embedding: EmbeddingTable,
    pub classes: Vec<String>,
    /// `C × D`
    pub weights: Matrix,
}

impl DifferentiableModel for LinearProbe {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn embed(&self, segments: &[Vec<Token>]) -> Embedded {
        embed_with(&self.embedding, segments)
    }

    fn class_score(&self, input: &Embedded, class: usize) -> Result<f64, ModelError> {
        check_class(class, self.classes.len())?;
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let n = input.len() as f64;
        Ok(input
            .rows
            .iter()
            .map(|e| dot(&self.weights[class], e))
            .sum::<f64>()
            / n)
    }

    fn class_gradient(&self, input: &Embedded, class: usize) -> Result<Matrix, ModelError> {
        check_class(class, self.classes.len())?;
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let n = input.len() as f64;
        let row: Vec<f64> = self.weights[class].iter().map(|w| w / n).collect();
        Ok(vec![row; input.len()])
    }
}
