//! Small dense helpers and a weighted least squares solver.
//!
//! Matrices are row-major `Vec<Vec<f64>>`; every system in this crate has at
//! most a few dozen unknowns.

// Index loops mirror the textbook factorization.
#![allow(clippy::needless_range_loop)]

pub type Matrix = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `m · x`
pub fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, x)).collect()
}

/// `mᵀ · y`
pub fn matvec_t(m: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let cols = m.first().map_or(0, Vec::len);
    let mut out = vec![0.0; cols];
    for (row, &yi) in m.iter().zip(y) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v * yi;
        }
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    vec![vec![0.0; cols]; rows]
}

/// A pivot below this fraction of its original diagonal entry marks the
/// system as rank deficient.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    /// Intercept first when one was fitted, then one weight per column.
    pub coefficients: Vec<f64>,
    /// Whether the ridge term had to be added to make the system solvable.
    pub ridge_used: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WlsError {
    #[error("normal equations are singular even with ridge {0}")]
    Singular(f64),
    #[error("design has {rows} rows but {targets} targets and {weights} weights")]
    Shape {
        rows: usize,
        targets: usize,
        weights: usize,
    },
}

/// Cholesky solve of `a x = b`; `None` when a pivot falls under the
/// tolerance.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0 && sum > PIVOT_TOLERANCE * a[i][i].abs()) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Some(x)
}

/// Minimize `Σ wᵢ (yᵢ − β₀ − xᵢ·β)²` through the normal equations.
///
/// When the plain system is rank deficient, `ridge` is added to the diagonal
/// of the non-intercept coefficients and the solve is retried.
pub fn weighted_least_squares(
    design: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    intercept: bool,
    ridge: f64,
) -> Result<WlsSolution, WlsError> {
    if design.len() != targets.len() || design.len() != weights.len() {
        return Err(WlsError::Shape {
            rows: design.len(),
            targets: targets.len(),
            weights: weights.len(),
        });
    }
    let cols = design.first().map_or(0, Vec::len);
    let offset = usize::from(intercept);
    let n = cols + offset;
    let mut a = zeros(n, n);
    let mut b = vec![0.0; n];
    let mut row = vec![0.0; n];
    for ((x, &y), &w) in design.iter().zip(targets).zip(weights) {
        if intercept {
            row[0] = 1.0;
        }
        row[offset..].copy_from_slice(x);
        for i in 0..n {
            let wi = w * row[i];
            b[i] += wi * y;
            for j in 0..=i {
                a[i][j] += wi * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[j][i] = a[i][j];
        }
    }
    if let Some(coefficients) = cholesky_solve(&a, &b) {
        return Ok(WlsSolution {
            coefficients,
            ridge_used: false,
        });
    }
    for (i, r) in a.iter_mut().enumerate().skip(offset) {
        r[i] += ridge;
    }
    cholesky_solve(&a, &b)
        .map(|coefficients| WlsSolution {
            coefficients,
            ridge_used: true,
        })
        .ok_or(WlsError::Singular(ridge))
}
