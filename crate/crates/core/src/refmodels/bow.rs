use super::{check_class, embed_with, DifferentiableModel, Embedded, EmbeddingTable, ModelError};
use crate::corpus::Token;
use crate::faithfulness::{PredictRequest, Predictor, PredictorError};
use crate::linalg::{matvec, matvec_t, softmax, Matrix};
use crate::seed::keyed_rng;
use rand_distr::{Distribution, Normal};

/// `softmax(W · mean(e_t) + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BowSoftmaxModel {
    pub embedding: EmbeddingTable,
    pub classes: Vec<String>,
    /// `C × D`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl BowSoftmaxModel {
    pub fn seeded<'a>(
        classes: Vec<String>,
        dim: usize,
        seed: u64,
        vocab: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut rng = keyed_rng(seed, &["bow", "params"]);
        let w = Normal::new(0.0, 2.0).expect("positive std");
        let b = Normal::new(0.0, 0.1).expect("positive std");
        let weights = (0..classes.len())
            .map(|_| (0..dim).map(|_| w.sample(&mut rng)).collect())
            .collect();
        let bias = (0..classes.len()).map(|_| b.sample(&mut rng)).collect();
        BowSoftmaxModel {
            embedding: EmbeddingTable::seeded(dim, seed, vocab),
            classes,
            weights,
            bias,
        }
    }

    fn mean_pool(input: &Embedded, dim: usize) -> Vec<f64> {
        let mut mean = vec![0.0; dim];
        for row in &input.rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = input.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Probabilities at the given embeddings. An empty input pools to the
    /// zero vector, i.e. `softmax(b)`.
    fn probs(&self, input: &Embedded) -> Vec<f64> {
        let pooled = Self::mean_pool(input, self.embedding.dim());
        let logits: Vec<f64> = matvec(&self.weights, &pooled)
            .iter()
            .zip(&self.bias)
            .map(|(l, b)| l + b)
            .collect();
        softmax(&logits)
    }

    pub fn forward(&self, segments: &[Vec<Token>]) -> Result<Vec<f64>, ModelError> {
        let input = self.embed(segments);
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        Ok(self.probs(&input))
    }
}

impl DifferentiableModel for BowSoftmaxModel {
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
        Ok(self.probs(input)[class])
    }

    fn class_gradient(&self, input: &Embedded, class: usize) -> Result<Matrix, ModelError> {
        check_class(class, self.classes.len())?;
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let p = self.probs(input);
        // ∂p_j/∂logit_k = p_j (δ_jk − p_k)
        let dlogits: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(k, &pk)| p[class] * (f64::from(u8::from(k == class)) - pk))
            .collect();
        let per_token: Vec<f64> = matvec_t(&self.weights, &dlogits)
            .into_iter()
            .map(|g| g / input.len() as f64)
            .collect();
        Ok(vec![per_token; input.len()])
    }
}

impl Predictor for BowSoftmaxModel {
    fn class_names(&self) -> &[String] {
        &self.classes
    }

    fn predict(&self, req: &PredictRequest<'_>) -> Result<Vec<f64>, PredictorError> {
        Ok(self.probs(&self.embed(req.segments)))
    }
}
