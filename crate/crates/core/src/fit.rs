//! Log–log least-squares fits used by every scaling check.

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};

/// Output of a power-law fit `value ≈ exp(intercept) · R^slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFitReport {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log space.
    pub max_residual: f64,
    pub r_grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Ordinary least squares of `log|value|` against `log R`.
///
/// Requires at least four strictly ascending positive radii and strictly
/// positive values.
pub fn fit_loglog(r_grid: &[f64], values: &[f64]) -> Result<DecayFitReport> {
    if r_grid.len() != values.len() {
        return Err(precondition("radius and value grids differ in length"));
    }
    if r_grid.len() < 4 {
        return Err(precondition("decay fit needs at least 4 radii"));
    }
    if r_grid.windows(2).any(|w| !(w[1] > w[0])) || r_grid[0] <= 0.0 {
        return Err(precondition("radii must be positive and strictly ascending"));
    }
    if values.iter().any(|v| !(v.abs() > 0.0) || !v.is_finite()) {
        return Err(precondition("log-log fit needs nonzero finite values"));
    }
    let xs: Vec<f64> = r_grid.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0, f64::max);
    Ok(DecayFitReport {
        slope,
        intercept,
        max_residual,
        r_grid: r_grid.to_vec(),
        values: values.to_vec(),
    })
}

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let r = [1.0, 2.0, 4.0, 8.0];
        let v: Vec<f64> = r.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        let f = fit_loglog(&r, &v).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.max_residual < 1e-12);
    }

    #[test]
    fn rescaled_grid_keeps_slope() {
        let r = [4.0, 8.0, 16.0, 32.0, 64.0];
        let v = [0.3, 0.11, 0.07, 0.02, 0.013];
        let a = fit_loglog(&r, &v).unwrap();
        let r2: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        let b = fit_loglog(&r2, &v).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_or_unsorted_grid() {
        assert!(fit_loglog(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).is_err());
        assert!(fit_loglog(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]).is_err());
        assert!(fit_loglog(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 1.0, 1.0]).is_err());
    }
}
