//! Accuracy summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// z-value for a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Half-width `1.96 · s / √n` with `s` the sample standard deviation.
    pub ci95: f64,
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Invalid("mean of an empty series".into()));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (n − 1 denominator); 0 for a single element.
pub fn sample_std(xs: &[f64]) -> Result<f64> {
    let m = mean(xs)?;
    if xs.len() == 1 {
        return Ok(0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (xs.len() - 1) as f64).sqrt())
}

pub fn summarize(xs: &[f64]) -> Result<Summary> {
    let mean = mean(xs)?;
    let ci95 = if xs.len() == 1 {
        0.0
    } else {
        Z_95 * sample_std(xs)? / (xs.len() as f64).sqrt()
    };
    Ok(Summary { mean, ci95 })
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Invalid(format!(
            "accuracy over {} predictions and {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

impl std::fmt::Display for Summary {
    /// Percent form, e.g. `70.16 ± 2.05`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.ci95)
    }
}
