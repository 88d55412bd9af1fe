use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Row-wise softmax with row-max subtraction.
pub fn softmax(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean softmax cross-entropy over the rows of `logits` and its gradient
/// `(softmax − onehot) / m` with respect to the logits.
pub fn softmax_ce(logits: &DenseMatrix, targets: &[usize]) -> Result<(f64, DenseMatrix)> {
    let (m, c) = logits.shape();
    if targets.len() != m {
        return Err(Error::shape(
            "softmax_ce",
            format!("{} targets for {m} rows", targets.len()),
        ));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::Invalid(format!("label {bad} out of range for {c} classes")));
    }
    if !logits.is_finite() {
        return Err(Error::Invalid("non-finite logits".into()));
    }
    if m == 0 {
        return Ok((0.0, DenseMatrix::zeros(0, c)));
    }
    let mut grad = DenseMatrix::zeros(m, c);
    let mut loss = 0.0;
    let inv_m = 1.0 / m as f64;
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln();
        loss -= row[t] - max - log_sum;
        let g = grad.row_mut(i);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - max - log_sum).exp() * inv_m;
        }
        g[t] -= inv_m;
    }
    Ok((loss * inv_m, grad))
}

/// Index of the largest entry per row; ties resolve to the lowest index.
pub fn argmax_rows(m: &DenseMatrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let mut best = 0;
            for (j, &v) in m.row(i).iter().enumerate() {
                if v > m.row(i)[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
