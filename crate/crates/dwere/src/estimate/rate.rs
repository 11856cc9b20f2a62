//! Empirical rate of decay of `P(X_n >= lambda n)` over a grid of speeds and
//! horizons.

use serde::Serialize;

use super::{estimate_event, EstimateParams, EventSpec};
use crate::env::CookieDistribution;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats;

#[derive(Debug, Clone, Serialize)]
pub struct RateCell {
    pub lambda: f64,
    pub n: u64,
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci95: (f64, f64),
    /// `ln(p_hat) / n`; absent without successes.
    pub rate: Option<f64>,
    /// One-sided 95% bound on the rate when no trial succeeded, from the
    /// exact binomial upper bound on `p`.
    pub rate_upper_bound: Option<f64>,
    /// Settled by the step bound `|X_n| <= L n`; no sampling was done.
    pub certified_zero: bool,
}

impl RateCell {
    /// Delta-method standard error of the rate estimate.
    pub fn rate_se(&self) -> Option<f64> {
        if self.successes == 0 || self.certified_zero {
            return None;
        }
        Some(stats::log_standard_error(self.p_hat, self.trials) / self.n as f64)
    }
}

/// Per-speed view across horizons.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub rates: Vec<(u64, Option<f64>)>,
    /// Intercept of the weighted fit of rate against `1/n`: a crude
    /// infinite-horizon extrapolation.
    pub extrapolated_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateTable {
    pub cells: Vec<RateCell>,
    pub per_lambda: Vec<LambdaSummary>,
    pub stack_height: u32,
    pub max_jump: u32,
    /// The concentration argument behind the rate limit needs at least three
    /// cookies per site; smaller stacks are estimated all the same but noted.
    pub below_theorem_stack_height: bool,
    pub trials: u64,
    pub master_seed: u64,
}

impl RateTable {
    pub fn cell(&self, lambda: f64, n: u64) -> Option<&RateCell> {
        self.cells
            .iter()
            .find(|c| c.n == n && (c.lambda - lambda).abs() < 1e-12)
    }

    pub fn largest_n(&self) -> Option<u64> {
        self.cells.iter().map(|c| c.n).max()
    }

    pub fn csv(&self) -> String {
        let mut out = format!(
            "# master_seed={} L={} M={}\n",
            self.master_seed, self.max_jump, self.stack_height
        );
        out.push_str(
            "lambda,n,trials,successes,p_hat,ci_lo,ci_hi,rate,rate_upper_bound,certified_zero\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.lambda,
                c.n,
                c.trials,
                c.successes,
                c.p_hat,
                c.ci95.0,
                c.ci95.1,
                opt(c.rate),
                opt(c.rate_upper_bound),
                c.certified_zero
            ));
        }
        out
    }
}

/// Estimate `(1/n) ln P(X_n >= lambda n)` on a grid. Cells with
/// `lambda > L` are exact zeros by the step bound and carry no samples.
pub fn estimate_rate_function(
    dist: &CookieDistribution,
    stack_height: u32,
    lambda_grid: &[f64],
    n_grid: &[u64],
    params: &EstimateParams,
) -> Result<RateTable> {
    if lambda_grid.is_empty() || n_grid.is_empty() {
        return Err(Error::Precondition("empty estimation grid".into()));
    }
    if n_grid.contains(&0) {
        return Err(Error::Precondition("horizons must be positive".into()));
    }
    let mut cells = Vec::with_capacity(lambda_grid.len() * n_grid.len());
    for (cell_index, (&lambda, &n)) in lambda_grid
        .iter()
        .flat_map(|l| n_grid.iter().map(move |n| (l, n)))
        .enumerate()
    {
        let spec = EventSpec::final_at_least(lambda, n);
        let cell_params = EstimateParams {
            master_seed: rng::substream(params.master_seed, cell_index as u64),
            ..*params
        };
        let report = estimate_event(dist, stack_height, &spec, &cell_params)?;
        let rate = report.rate();
        let rate_upper_bound = if report.certified_zero {
            None
        } else if report.successes == 0 {
            Some(stats::clopper_upper_zero(report.trials, 0.05).ln() / n as f64)
        } else {
            None
        };
        cells.push(RateCell {
            lambda,
            n,
            trials: report.trials,
            successes: report.successes,
            p_hat: report.p_hat,
            ci95: report.ci95,
            rate,
            rate_upper_bound,
            certified_zero: report.certified_zero,
        });
    }

    let per_lambda = lambda_grid
        .iter()
        .map(|&lambda| {
            let rates: Vec<(u64, Option<f64>)> = n_grid
                .iter()
                .map(|&n| {
                    let cell = cells
                        .iter()
                        .find(|c| c.n == n && (c.lambda - lambda).abs() < 1e-12)
                        .expect("grid cell");
                    (n, cell.rate)
                })
                .collect();
            let points: Vec<(f64, f64, f64)> = rates
                .iter()
                .filter_map(|&(n, r)| {
                    let r = r?;
                    let cell = cells
                        .iter()
                        .find(|c| c.n == n && (c.lambda - lambda).abs() < 1e-12)?;
                    let se = cell.rate_se()?;
                    Some((1.0 / n as f64, r, se * se))
                })
                .collect();
            LambdaSummary {
                lambda,
                rates,
                extrapolated_rate: stats::weighted_line_fit(&points).map(|f| f.intercept),
            }
        })
        .collect();

    Ok(RateTable {
        cells,
        per_lambda,
        stack_height,
        max_jump: dist.max_jump(),
        below_theorem_stack_height: stack_height < 3,
        trials: params.trials,
        master_seed: params.master_seed,
    })
}
