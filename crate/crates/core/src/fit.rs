//! Ordinary least squares for scaling laws.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Minimum number of points for an exponent fit.
pub const MIN_POINTS: usize = 8;
/// Minimum span of the abscissa, in decades, for an exponent fit.
pub const MIN_DECADES: f64 = 2.0;

/// `y = intercept + slope * x` with a 95% confidence interval on the slope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let m = x.len();
    if m != y.len() || m < 3 {
        return Err(Error::InvalidArgument(format!("ols needs >= 3 paired points, got {m}")));
    }
    let mf = m as f64;
    let mx = x.iter().sum::<f64>() / mf;
    let my = y.iter().sum::<f64>() / mf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("ols abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = (sse / (mf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, mf - 2.0).map_err(|e| Error::InvalidArgument(e.to_string()))?.inverse_cdf(0.975);
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        ci_lo: slope - t * slope_stderr,
        ci_hi: slope + t * slope_stderr,
        r_squared,
        points: m,
    })
}

/// Log-log fit of `values ~ C r^slope`, requiring [`MIN_POINTS`] points over
/// [`MIN_DECADES`] decades.
pub fn power_law(r: &[f64], values: &[f64]) -> Result<LinearFit> {
    power_law_with(r, values, MIN_POINTS, MIN_DECADES)
}

pub fn power_law_with(r: &[f64], values: &[f64], min_points: usize, min_decades: f64) -> Result<LinearFit> {
    check_span(r, min_points, min_decades)?;
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("power-law fit needs positive values".into()));
    }
    let x: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    ols(&x, &y)
}

/// Checks that `r` is positive with enough points and decades.
pub fn check_span(r: &[f64], min_points: usize, min_decades: f64) -> Result<()> {
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r.iter().copied().fold(0.0, f64::max);
    let got = if lo > 0.0 { (hi / lo).log10() } else { 0.0 };
    if r.len() < min_points || got < min_decades - 1e-9 {
        return Err(Error::InsufficientDecades { needed: min_points, decades: min_decades, points: r.len(), got });
    }
    Ok(())
}

/// Geometric grid of `points` values from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points).map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = ols(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.slope_stderr < 1e-12);
    }

    #[test]
    fn confidence_interval_matches_reference() {
        // reference values from the textbook formula with t_{0.975, 3} = 3.182446305284263
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.1, 3.9, 6.2, 7.8, 10.1];
        let f = ols(&x, &y).unwrap();
        assert!((f.slope - 1.99).abs() < 1e-12);
        let half = f.ci_hi - f.slope;
        assert!((half - 3.182446305284263 * f.slope_stderr).abs() < 1e-9);
    }

    #[test]
    fn power_law_recovers_exponent() {
        let r = geometric_grid(1e-3, 1e-1, 9);
        let v: Vec<f64> = r.iter().map(|x| 5.0 * x.powf(3.0)).collect();
        let f = power_law(&r, &v).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_short_spans() {
        let r = geometric_grid(1e-2, 1e-1, 9);
        assert!(matches!(power_law(&r, &r), Err(Error::InsufficientDecades { .. })));
        let r = geometric_grid(1e-3, 1e-1, 5);
        assert!(matches!(power_law(&r, &r), Err(Error::InsufficientDecades { .. })));
    }
}
