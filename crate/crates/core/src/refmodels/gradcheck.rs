use super::{DifferentiableModel, Embedded, ModelError};
use crate::corpus::Token;
use crate::linalg::Matrix;

/// Magnitude below which gradient entries are compared absolutely rather
/// than relatively.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Exact analytic gradient of `F_j` at the token embeddings of `segments`.
pub fn grad_wrt_embeddings<M: DifferentiableModel + ?Sized>(
    model: &M,
    segments: &[Vec<Token>],
    class: usize,
) -> Result<Matrix, ModelError> {
    model.class_gradient(&model.embed(segments), class)
}

#[allow(clippy::needless_range_loop)]
/// Central finite differences of `F_j`, one coordinate at a time.
pub fn numeric_gradient<M: DifferentiableModel + ?Sized>(
    model: &M,
    input: &Embedded,
    class: usize,
    h: f64,
) -> Result<Matrix, ModelError> {
    let mut probe = input.clone();
    let mut out = input.rows.clone();
    for t in 0..input.rows.len() {
        for d in 0..input.rows[t].len() {
            let orig = input.rows[t][d];
            probe.rows[t][d] = orig + h;
            let up = model.class_score(&probe, class)?;
            probe.rows[t][d] = orig - h;
            let down = model.class_score(&probe, class)?;
            probe.rows[t][d] = orig;
            out[t][d] = (up - down) / (2.0 * h);
        }
    }
    Ok(out)
}

/// `|a − n| / max(|a|, |n|, GRADCHECK_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

pub fn max_relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    analytic
        .iter()
        .flatten()
        .zip(numeric.iter().flatten())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
