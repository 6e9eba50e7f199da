use super::{check_class, embed_with, DifferentiableModel, Embedded, EmbeddingTable, ModelError};
use crate::corpus::Token;
use crate::faithfulness::{PredictRequest, Predictor, PredictorError};
use crate::linalg::{dot, matvec, matvec_t, softmax, Matrix};
use crate::seed::keyed_rng;
use rand_distr::{Distribution, Normal};

/// Gated recurrent encoder with an attention-pooled classifier head.
///
/// Each segment `s` is encoded separately by the same cell (hidden size `D`,
/// `h₀ = 0`):
///
/// ```text
/// z_t = σ(W_z x_t + U_z h_{t-1} + b_z)
/// c_t = tanh(W_c x_t + U_c h_{t-1} + b_c)
/// h_t = h_{t-1} + z_t ⊙ (c_t − h_{t-1})
/// ```
///
/// The last states of all segments are concatenated and projected,
/// `h_fc = tanh(FC · [h_T¹; …; h_Tˢ] + b_f)`. Within each segment the states
/// are pooled with `β = softmax_i(h_fc · h_i)`, and the class distribution is
/// `softmax(W_o · [pool¹; …; poolˢ] + b_o)`.
///
/// An empty segment contributes a zero last state and a zero pool.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnRefModel {
    pub embedding: EmbeddingTable,
    pub classes: Vec<String>,
    /// Number of input segments (1 for single-text tasks, 2 for pairs).
    pub segments: usize,
    pub wz: Matrix,
    pub uz: Matrix,
    pub bz: Vec<f64>,
    pub wc: Matrix,
    pub uc: Matrix,
    pub bc: Vec<f64>,
    /// `D × (segments·D)`
    pub fc: Matrix,
    pub bf: Vec<f64>,
    /// `C × (segments·D)`
    pub wo: Matrix,
    pub bo: Vec<f64>,
}

/// Hidden states exposed for attention-based saliency.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnHidden {
    /// `h_1..h_T` for every segment.
    pub states: Vec<Vec<Vec<f64>>>,
    /// `h_fc`
    pub fc: Vec<f64>,
}

struct SegmentTrace {
    /// `h_0..h_T`
    hs: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    beta: Vec<f64>,
}

struct Trace {
    segs: Vec<SegmentTrace>,
    fc: Vec<f64>,
    probs: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gaussian_matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let n = Normal::new(0.0, std).expect("positive std");
    (0..rows)
        .map(|_| (0..cols).map(|_| n.sample(rng)).collect())
        .collect()
}

fn gaussian_vector(rng: &mut impl rand::Rng, len: usize, std: f64) -> Vec<f64> {
    let n = Normal::new(0.0, std).expect("positive std");
    (0..len).map(|_| n.sample(rng)).collect()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl AttnRefModel {
    pub fn seeded<'a>(
        classes: Vec<String>,
        segments: usize,
        dim: usize,
        seed: u64,
        vocab: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut rng = keyed_rng(seed, &["attn", "params"]);
        let d = dim as f64;
        let wide = segments * dim;
        let c = classes.len();
        AttnRefModel {
            embedding: EmbeddingTable::seeded(dim, seed, vocab),
            segments,
            wz: gaussian_matrix(&mut rng, dim, dim, 1.5 / d.sqrt()),
            uz: gaussian_matrix(&mut rng, dim, dim, 0.8 / d.sqrt()),
            bz: gaussian_vector(&mut rng, dim, 0.1),
            wc: gaussian_matrix(&mut rng, dim, dim, 1.5 / d.sqrt()),
            uc: gaussian_matrix(&mut rng, dim, dim, 0.8 / d.sqrt()),
            bc: gaussian_vector(&mut rng, dim, 0.1),
            fc: gaussian_matrix(&mut rng, dim, wide, 1.5 / (wide as f64).sqrt()),
            bf: gaussian_vector(&mut rng, dim, 0.1),
            wo: gaussian_matrix(&mut rng, c, wide, 4.0 / (wide as f64).sqrt()),
            bo: gaussian_vector(&mut rng, c, 0.1),
            classes,
        }
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    fn check_segments(&self, found: usize) -> Result<(), ModelError> {
        if found != self.segments {
            return Err(ModelError::SegmentMismatch {
                expected: self.segments,
                found,
            });
        }
        Ok(())
    }

    fn encode(&self, xs: &[Vec<f64>]) -> SegmentTrace {
        let dim = self.dim();
        let mut hs = vec![vec![0.0; dim]];
        let mut zs = Vec::with_capacity(xs.len());
        let mut cs = Vec::with_capacity(xs.len());
        for x in xs {
            let prev = hs.last().expect("h_0 present");
            let az = matvec(&self.wz, x);
            let azh = matvec(&self.uz, prev);
            let ac = matvec(&self.wc, x);
            let ach = matvec(&self.uc, prev);
            let z: Vec<f64> = (0..dim)
                .map(|k| sigmoid(az[k] + azh[k] + self.bz[k]))
                .collect();
            let c: Vec<f64> = (0..dim)
                .map(|k| (ac[k] + ach[k] + self.bc[k]).tanh())
                .collect();
            let h: Vec<f64> = (0..dim)
                .map(|k| prev[k] + z[k] * (c[k] - prev[k]))
                .collect();
            zs.push(z);
            cs.push(c);
            hs.push(h);
        }
        SegmentTrace {
            hs,
            zs,
            cs,
            beta: Vec::new(),
        }
    }

    fn trace(&self, input: &Embedded) -> Result<Trace, ModelError> {
        self.check_segments(input.segment_lens.len())?;
        let dim = self.dim();
        let mut segs: Vec<SegmentTrace> = input
            .segment_ranges()
            .into_iter()
            .map(|r| self.encode(&input.rows[r]))
            .collect();

        let last: Vec<f64> = segs
            .iter()
            .flat_map(|s| s.hs.last().expect("h_0 present").iter().copied())
            .collect();
        let fc: Vec<f64> = matvec(&self.fc, &last)
            .iter()
            .zip(&self.bf)
            .map(|(a, b)| (a + b).tanh())
            .collect();

        let mut pooled = Vec::with_capacity(self.segments * dim);
        for seg in &mut segs {
            let q: Vec<f64> = seg.hs[1..].iter().map(|h| dot(&fc, h)).collect();
            seg.beta = if q.is_empty() {
                Vec::new()
            } else {
                softmax(&q)
            };
            let mut p = vec![0.0; dim];
            for (b, h) in seg.beta.iter().zip(&seg.hs[1..]) {
                for k in 0..dim {
                    p[k] += b * h[k];
                }
            }
            pooled.extend(p);
        }
        let logits: Vec<f64> = matvec(&self.wo, &pooled)
            .iter()
            .zip(&self.bo)
            .map(|(l, b)| l + b)
            .collect();
        Ok(Trace {
            segs,
            fc,
            probs: softmax(&logits),
        })
    }

    pub fn forward(&self, segments: &[Vec<Token>]) -> Result<Vec<f64>, ModelError> {
        let input = self.embed(segments);
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        Ok(self.trace(&input)?.probs)
    }

    /// Per-segment hidden states and `h_fc` for the given tokens.
    pub fn hidden(&self, segments: &[Vec<Token>]) -> Result<AttnHidden, ModelError> {
        let input = self.embed(segments);
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let t = self.trace(&input)?;
        Ok(AttnHidden {
            states: t.segs.into_iter().map(|s| s.hs[1..].to_vec()).collect(),
            fc: t.fc,
        })
    }
}

impl DifferentiableModel for AttnRefModel {
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
        Ok(self.trace(input)?.probs[class])
    }

    fn class_gradient(&self, input: &Embedded, class: usize) -> Result<Matrix, ModelError> {
        check_class(class, self.classes.len())?;
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let dim = self.dim();
        let tr = self.trace(input)?;
        let p = &tr.probs;
        let dlogits: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(k, &pk)| p[class] * (if k == class { 1.0 } else { 0.0 } - pk))
            .collect();
        let dpooled = matvec_t(&self.wo, &dlogits);

        // Gradients w.r.t. h_0..h_T of each segment.
        let mut dh: Vec<Vec<Vec<f64>>> = tr
            .segs
            .iter()
            .map(|s| vec![vec![0.0; dim]; s.hs.len()])
            .collect();
        let mut dfc = vec![0.0; dim];
        for (s, seg) in tr.segs.iter().enumerate() {
            let dp = &dpooled[s * dim..(s + 1) * dim];
            let states = &seg.hs[1..];
            let dbeta: Vec<f64> = states.iter().map(|h| dot(h, dp)).collect();
            let mean: f64 = seg.beta.iter().zip(&dbeta).map(|(b, g)| b * g).sum();
            for (i, h) in states.iter().enumerate() {
                let dq = seg.beta[i] * (dbeta[i] - mean);
                let target = &mut dh[s][i + 1];
                for k in 0..dim {
                    target[k] += seg.beta[i] * dp[k] + dq * tr.fc[k];
                    dfc[k] += dq * h[k];
                }
            }
        }
        let dafc: Vec<f64> = dfc
            .iter()
            .zip(&tr.fc)
            .map(|(g, f)| g * (1.0 - f * f))
            .collect();
        let dlast = matvec_t(&self.fc, &dafc);
        for (s, seg) in tr.segs.iter().enumerate() {
            let t_last = seg.hs.len() - 1;
            add_into(&mut dh[s][t_last], &dlast[s * dim..(s + 1) * dim]);
        }

        let mut grads = Vec::with_capacity(input.len());
        for (s, seg) in tr.segs.iter().enumerate() {
            let steps = seg.zs.len();
            let mut dx = vec![Vec::new(); steps];
            for t in (1..=steps).rev() {
                let g = std::mem::take(&mut dh[s][t]);
                let (z, c, prev) = (&seg.zs[t - 1], &seg.cs[t - 1], &seg.hs[t - 1]);
                let daz: Vec<f64> = (0..dim)
                    .map(|k| g[k] * (c[k] - prev[k]) * z[k] * (1.0 - z[k]))
                    .collect();
                let dac: Vec<f64> = (0..dim)
                    .map(|k| g[k] * z[k] * (1.0 - c[k] * c[k]))
                    .collect();
                let mut x = matvec_t(&self.wz, &daz);
                add_into(&mut x, &matvec_t(&self.wc, &dac));
                dx[t - 1] = x;
                let mut back: Vec<f64> = (0..dim).map(|k| g[k] * (1.0 - z[k])).collect();
                add_into(&mut back, &matvec_t(&self.uz, &daz));
                add_into(&mut back, &matvec_t(&self.uc, &dac));
                add_into(&mut dh[s][t - 1], &back);
            }
            grads.extend(dx);
        }
        Ok(grads)
    }
}

impl Predictor for AttnRefModel {
    fn class_names(&self) -> &[String] {
        &self.classes
    }

    fn predict(&self, req: &PredictRequest<'_>) -> Result<Vec<f64>, PredictorError> {
        self.trace(&self.embed(req.segments))
            .map(|t| t.probs)
            .map_err(|e| PredictorError::failure(req.instance_id, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refmodels::testutil::segs;
    use crate::refmodels::{max_relative_error, numeric_gradient};

    fn model(segments: usize) -> AttnRefModel {
        AttnRefModel::seeded(
            vec!["neg".into(), "pos".into()],
            segments,
            6,
            5,
            ["the", "film", "was", "great", "dull"],
        )
    }

    #[test]
    fn outputs_are_distributions() {
        let m = model(1);
        let p = m.forward(&segs(&["the film was great"])).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
        assert_eq!(p, m.forward(&segs(&["the film was great"])).unwrap());
    }

    #[test]
    fn segment_count_is_checked() {
        let m = model(2);
        assert_eq!(
            m.forward(&segs(&["the film"])),
            Err(ModelError::SegmentMismatch {
                expected: 2,
                found: 1
            })
        );
        assert_eq!(m.forward(&segs(&["", ""])), Err(ModelError::EmptyInput));
    }

    #[test]
    fn empty_segment_is_allowed_in_prediction() {
        let m = model(2);
        let s = segs(&["", "film"]);
        let p = m
            .predict(&PredictRequest {
                instance_id: "x",
                variant: crate::faithfulness::VariantKind::Rationale,
                segments: &s,
            })
            .unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_matches_numeric_single() {
        let m = model(1);
        let input = m.embed(&segs(&["the film was dull oov"]));
        for j in 0..2 {
            let a = m.class_gradient(&input, j).unwrap();
            let n = numeric_gradient(&m, &input, j, 1e-4).unwrap();
            let err = max_relative_error(&a, &n);
            assert!(err < 1e-5, "class {j}: {err}");
        }
    }

    #[test]
    fn analytic_matches_numeric_pair() {
        let m = model(2);
        let input = m.embed(&segs(&["the film", "was great great"]));
        let a = m.class_gradient(&input, 1).unwrap();
        let n = numeric_gradient(&m, &input, 1, 1e-4).unwrap();
        assert!(max_relative_error(&a, &n) < 1e-5);
    }

    #[test]
    fn hidden_shapes() {
        let m = model(2);
        let h = m.hidden(&segs(&["the film", "great"])).unwrap();
        assert_eq!(h.states.len(), 2);
        assert_eq!(h.states[0].len(), 2);
        assert_eq!(h.states[1].len(), 1);
        assert_eq!(h.fc.len(), 6);
    }
}
