//! Central finite-difference gradient checking.

use super::DenseMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat coordinate) of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Compare `analytic` against `(f(θ+h) − f(θ−h)) / 2h` for every coordinate of
/// every tensor in `params`. The relative error of a coordinate is
/// `|analytic − numeric| / max(1e−8, |numeric|)`.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &[DenseMatrix],
    analytic: &[DenseMatrix],
    h: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[DenseMatrix]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::dims("finite_diff_check", params.len(), analytic.len()));
    }
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    for (p, grad) in analytic.iter().enumerate() {
        if grad.shape() != params[p].shape() {
            return Err(Error::dims(
                "finite_diff_check",
                format!("{:?}", params[p].shape()),
                format!("{:?}", grad.shape()),
            ));
        }
        for c in 0..grad.as_slice().len() {
            let orig = theta[p].as_slice()[c];
            theta[p].as_mut_slice()[c] = orig + h;
            let plus = loss(&theta);
            theta[p].as_mut_slice()[c] = orig - h;
            let minus = loss(&theta);
            theta[p].as_mut_slice()[c] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at parameter {p} coordinate {c}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.as_slice()[c];
            let rel = (a - numeric).abs() / numeric.abs().max(1e-8);
            if rel > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: rel,
                    worst: (p, c),
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}
