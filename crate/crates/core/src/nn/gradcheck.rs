use rand::seq::index;

use super::Real;
use crate::{Error, Result, Rng};

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(1e-8, |a| + |n|)` over the checked coordinates.
    pub max_rel_error: f64,
    /// Coordinate where the maximum occurred.
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates_checked: usize,
}

/// Picks up to `n` coordinate indices out of `total`, in increasing order.
/// All coordinates are returned when `total <= n`.
pub fn sample_coordinates(total: usize, n: usize, rng: &mut Rng) -> Vec<usize> {
    if total <= n {
        return (0..total).collect();
    }
    let mut idx = index::sample(rng, total, n).into_vec();
    idx.sort_unstable();
    idx
}

/// Central-difference check of `analytic` against `loss` around `point`.
///
/// `loss` is evaluated at `point` with one coordinate shifted by `±eps` at a
/// time. Only the listed `coords` are checked. The loss may be computed in
/// extended precision ([`super::Dd`]); the difference of the two evaluations
/// is taken before rounding to `f64`.
pub fn grad_check<T, F>(
    mut loss: F,
    point: &[f64],
    analytic: &[f64],
    coords: &[usize],
    eps: f64,
) -> Result<GradCheckReport>
where
    T: Real,
    F: FnMut(&[f64]) -> Result<T>,
{
    if point.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} analytic gradient entries",
            point.len(),
            analytic.len()
        )));
    }
    let mut w = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coordinates_checked: 0,
    };
    for &i in coords {
        let orig = w[i];
        w[i] = orig + eps;
        let plus = loss(&w)?;
        w[i] = orig - eps;
        let minus = loss(&w)?;
        w[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss while perturbing coordinate {i}")));
        }
        let numeric = (plus - minus).to_f64() / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if rel > report.max_rel_error || report.coordinates_checked == 0 {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic_at_worst = a;
            report.numeric_at_worst = numeric;
        }
        report.coordinates_checked += 1;
    }
    Ok(report)
}
