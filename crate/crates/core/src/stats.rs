//! Small statistics kit: order-fixed summation, Monte Carlo means and
//! least-squares line fits with t-based confidence intervals.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Pairwise (cascade) summation in index order. The result depends only on
/// the order of `values`, never on how they were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Sample mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// 95% confidence interval of the slope.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl LineFit {
    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

/// Ordinary (optionally weighted) least squares `y ≈ a + b·x`.
pub fn fit_line(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::domain("fit inputs have different lengths"));
    }
    if n < 2 {
        return Err(Error::domain("a line fit needs at least two points"));
    }
    let ones = vec![1.0; n];
    let w = weights.unwrap_or(&ones);
    if w.iter().any(|wi| !(*wi > 0.0)) {
        return Err(Error::domain("fit weights must be positive"));
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, wi)| wi * (a - mx) * (a - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain("fit abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, b), wi)| wi * (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if n == 2 {
        return Ok(LineFit { slope, intercept, slope_stderr: f64::NAN, ci_low: f64::NAN, ci_high: f64::NAN });
    }
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), wi)| {
            let r = b - intercept - slope * a;
            wi * r * r
        })
        .sum();
    let dof = (n - 2) as f64;
    let slope_stderr = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::domain(e.to_string()))?.inverse_cdf(0.975);
    Ok(LineFit { slope, intercept, slope_stderr, ci_low: slope - t * slope_stderr, ci_high: slope + t * slope_stderr })
}

/// OLS fit of `log y` against `log x`.
pub fn fit_loglog_slope(points: &[(f64, f64)], weights: Option<&[f64]>) -> Result<LineFit> {
    if points.len() < 3 {
        return Err(Error::domain("a log-log fit needs at least three points"));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::domain(format!("log-log fit needs positive coordinates, got ({x}, {y})")));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    fit_line(&lx, &ly, weights)
}

/// Means of `batches` contiguous equal-length batches (trailing remainder
/// dropped).
pub fn batch_means(values: &[f64], batches: usize) -> Vec<f64> {
    let len = values.len() / batches.max(1);
    if len == 0 {
        return Vec::new();
    }
    values.chunks_exact(len).take(batches).map(|c| pairwise_sum(c) / len as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn loglog_examples() {
        let f = fit_loglog_slope(&[(1.0, 1.0), (2.0, 4.0), (4.0, 16.0)], None).unwrap();
        assert_relative_eq!(f.slope, 2.0, epsilon = 1e-14);
        let f = fit_loglog_slope(&[(1.0, 3.0), (2.0, 3.0), (4.0, 3.0)], None).unwrap();
        assert!(f.slope.abs() < 1e-15);
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.5))).collect();
        let f = fit_loglog_slope(&pts, None).unwrap();
        assert!((f.slope - 1.5).abs() <= 1e-12);
        assert!(f.ci_width() < 1e-10);
    }

    #[test]
    fn loglog_errors() {
        assert!(matches!(fit_loglog_slope(&[(1.0, 1.0), (0.0, 1.0), (2.0, 2.0)], None), Err(Error::Domain(_))));
        assert!(matches!(fit_loglog_slope(&[(1.0, -1.0), (3.0, 1.0), (2.0, 2.0)], None), Err(Error::Domain(_))));
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0)], None).is_err());
    }

    #[test]
    fn ci_matches_textbook_case() {
        // y = x + (+1, -1, +1, -1) on x = 0..3; rss = 3.2, sxx = 5, dof 2.
        let f = fit_line(&[0.0, 1.0, 2.0, 3.0], &[1.0, 0.0, 3.0, 2.0], None).unwrap();
        assert_relative_eq!(f.slope, 0.6, epsilon = 1e-14);
        let se = (3.2f64 / 2.0 / 5.0).sqrt();
        assert_relative_eq!(f.slope_stderr, se, epsilon = 1e-14);
        assert_relative_eq!(f.ci_high - f.slope, 4.302_652_729_911_275 * se, epsilon = 1e-9);
    }

    #[test]
    fn pairwise_and_mean() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_relative_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        assert_eq!(batch_means(&[1.0, 1.0, 3.0, 3.0, 9.0], 2), vec![1.0, 3.0]);
    }
}
