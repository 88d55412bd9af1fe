//! Central-difference gradient checker.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::params::ParamSet;
use crate::error::Result;
use crate::rng::choose_without_replacement;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub h: f64,
    pub tol: f64,
    /// Coordinates probed per parameter; all of them when the parameter is smaller.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            max_coords: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Largest `|analytic − numeric| / max(1, |analytic|)` seen.
    pub max_error: f64,
    pub violations: Vec<Violation>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn absorb(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.max_error = self.max_error.max(other.max_error);
        self.violations.extend(other.violations);
    }
}

/// Compares the analytic gradient returned by `loss_and_grad` at `params`
/// against central differences of its loss.
pub fn grad_check<F>(mut loss_and_grad: F, params: &ParamSet, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<(f64, ParamSet)>,
{
    let (_, analytic) = loss_and_grad(params)?;
    params.check_compatible(&analytic)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    let mut probe = params.clone();

    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in &names {
        let size = params.get(name)?.values().len();
        let coords = if size <= cfg.max_coords {
            (0..size).collect()
        } else {
            choose_without_replacement(&mut rng, size, cfg.max_coords)
        };
        for idx in coords {
            let original = params.get(name)?.values()[idx];
            probe.get_mut(name)?.values_mut()[idx] = original + cfg.h;
            let (plus, _) = loss_and_grad(&probe)?;
            probe.get_mut(name)?.values_mut()[idx] = original - cfg.h;
            let (minus, _) = loss_and_grad(&probe)?;
            probe.get_mut(name)?.values_mut()[idx] = original;

            let numeric = (plus - minus) / (2.0 * cfg.h);
            let a = analytic.get(name)?.values()[idx];
            let error = (a - numeric).abs() / a.abs().max(1.0);
            report.checked += 1;
            report.max_error = report.max_error.max(error);
            if error.is_nan() || error > cfg.tol {
                report.violations.push(Violation {
                    param: name.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                    error,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseMatrix;

    fn quadratic(p: &ParamSet) -> Result<(f64, ParamSet)> {
        let w = p.get("w")?;
        let loss = w.values().iter().map(|v| v * v * v).sum();
        let g = w.map(|v| 3.0 * v * v);
        Ok((loss, ParamSet::new().with("w", g)?))
    }

    fn params() -> ParamSet {
        ParamSet::new()
            .with("w", DenseMatrix::from_rows(&[vec![0.5, -1.5, 2.0]]))
            .unwrap()
    }

    #[test]
    fn correct_gradient_passes() {
        let r = grad_check(quadratic, &params(), &GradCheckConfig::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn sign_flip_is_caught() {
        let flipped = |p: &ParamSet| {
            let (l, mut g) = quadratic(p)?;
            g.get_mut("w")?.scale(-1.0);
            Ok((l, g))
        };
        let r = grad_check(flipped, &params(), &GradCheckConfig::default()).unwrap();
        assert_eq!(r.violations.len(), 3);
    }

    #[test]
    fn samples_at_most_max_coords() {
        let big = ParamSet::new()
            .with("w", DenseMatrix::from_fn(30, 30, |i, j| (i as f64 - j as f64) * 0.01))
            .unwrap();
        let r = grad_check(quadratic, &big, &GradCheckConfig::default()).unwrap();
        assert_eq!(r.checked, 200);
        assert!(r.passed());
    }
}
