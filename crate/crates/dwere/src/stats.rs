//! Interval estimates and small regression helpers for the Monte Carlo suite.

/// Normal quantile for two-sided 95% coverage.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for a binomial proportion at 95% confidence.
/// Well behaved at extreme counts; always inside [0, 1] and always contains
/// the point estimate `successes / trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let margin = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // Clamp against round-off: the interval must contain the point estimate.
    (
        ((center - margin) / denom).max(0.0).min(p),
        ((center + margin) / denom).min(1.0).max(p),
    )
}

/// One-sided Clopper-Pearson upper bound for zero successes: the largest `p`
/// with `(1 - p)^trials >= alpha`.
pub fn clopper_upper_zero(trials: u64, alpha: f64) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    1.0 - alpha.powf(1.0 / trials as f64)
}

/// Binomial standard error of the empirical proportion.
pub fn standard_error(p_hat: f64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::INFINITY;
    }
    (p_hat * (1.0 - p_hat) / trials as f64).sqrt()
}

/// Delta-method standard error of `ln(p_hat)`.
pub fn log_standard_error(p_hat: f64, trials: u64) -> f64 {
    if p_hat <= 0.0 {
        return f64::INFINITY;
    }
    standard_error(p_hat, trials) / p_hat
}

/// Standard error recovered from the Wilson interval width. The plug-in
/// estimate `p_hat (1 - p_hat) / n` collapses to zero at zero counts even
/// though the data still has sampling uncertainty; the interval width keeps
/// the right scale there, and matches the plug-in value away from the edges.
pub fn width_standard_error(successes: u64, trials: u64) -> f64 {
    let (lo, hi) = wilson_interval(successes, trials);
    (hi - lo) / (2.0 * Z95)
}

/// Weighted least-squares line fit, weights `1 / variance`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub points: usize,
}

impl LineFit {
    /// Upper edge of the 95% confidence interval for the slope.
    pub fn slope_upper95(&self) -> f64 {
        self.slope + Z95 * self.slope_se
    }
}

pub fn weighted_line_fit(points: &[(f64, f64, f64)]) -> Option<LineFit> {
    if points.len() < 2 {
        return None;
    }
    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y, var) in points {
        let w = 1.0 / var.max(1e-300);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let delta = sw * sxx - sx * sx;
    if delta <= 0.0 {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / delta;
    let intercept = (sxx * sy - sx * sxy) / delta;
    Some(LineFit {
        slope,
        intercept,
        slope_se: (sw / delta).sqrt(),
        points: points.len(),
    })
}

/// Residuals of a fit on the same points.
pub fn fit_residuals(fit: &LineFit, points: &[(f64, f64, f64)]) -> Vec<f64> {
    points
        .iter()
        .map(|&(x, y, _)| y - (fit.intercept + fit.slope * x))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_point_estimate_and_stays_in_unit_interval() {
        for &(s, n) in &[(0u64, 10u64), (10, 10), (1, 1), (500_000, 1_000_000), (3, 7)] {
            let (lo, hi) = wilson_interval(s, n);
            let p = s as f64 / n as f64;
            assert!(lo >= 0.0 && hi <= 1.0);
            assert!(lo <= p && p <= hi, "({s},{n}) gave [{lo},{hi}]");
        }
    }

    #[test]
    fn wilson_known_value() {
        // p = 0.5, n = 100 gives roughly (0.404, 0.596).
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.404).abs() < 0.002, "lo={lo}");
        assert!((hi - 0.596).abs() < 0.002, "hi={hi}");
    }

    #[test]
    fn clopper_zero_matches_closed_form() {
        let p = clopper_upper_zero(100, 0.05);
        assert!(((1.0 - p).powi(100) - 0.05).abs() < 1e-12);
        assert_eq!(clopper_upper_zero(0, 0.05), 1.0);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let pts: Vec<(f64, f64, f64)> = (0..10)
            .map(|i| (i as f64, 3.0 - 0.5 * i as f64, 1.0))
            .collect();
        let fit = weighted_line_fit(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!(fit_residuals(&fit, &pts).iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn line_fit_weighting_prefers_precise_points() {
        // Two precise points define the line; one noisy outlier barely moves it.
        let pts = vec![
            (0.0, 0.0, 1e-6),
            (1.0, 1.0, 1e-6),
            (2.0, 10.0, 1e3),
        ];
        let fit = weighted_line_fit(&pts).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.01, "slope={}", fit.slope);
    }
}
