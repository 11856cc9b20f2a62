//! Decay of the probability of ever reaching the graded annuli
//! `[-(k+1)L, (k+1)L] \ [-kL, kL]`. Jumps are bounded by `L`, so the walk
//! reaches the annulus at grade `k >= 1` exactly when its running maximum
//! modulus exceeds `kL`; one run per trial settles every grade at once, and
//! the per-grade hit events are nested by construction.

use rayon::prelude::*;
use serde::Serialize;

use super::EstimateParams;
use crate::env::{CookieDistribution, Environment};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{self, LineFit};
use crate::walk::{run, RunConfig, StopReason};

#[derive(Debug, Clone, Serialize)]
pub struct AnnulusCell {
    pub k: u64,
    pub hits: u64,
    /// Trials where the budget ran out while the running maximum was still
    /// at or below `kL`; the verdict for this grade is unknown.
    pub indeterminate: u64,
    pub p_hat: f64,
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnulusReport {
    pub cells: Vec<AnnulusCell>,
    pub trials: u64,
    pub master_seed: u64,
    /// Weighted log-linear fit of `ln p_hat(k)` over the requested grade
    /// range; absent when fewer than two grades in range had hits.
    pub fit: Option<LineFit>,
    pub fit_range: (u64, u64),
    pub residuals: Vec<f64>,
    /// `exp(slope)`: the fitted per-grade decay factor.
    pub c_hat: Option<f64>,
    pub flagged_indeterminate: bool,
}

impl AnnulusReport {
    pub fn csv(&self) -> String {
        let mut out = format!(
            "# master_seed={} trials={} fit_range={}:{}\n",
            self.master_seed, self.trials, self.fit_range.0, self.fit_range.1
        );
        out.push_str("k,hits,indeterminate,p_hat,ci_lo,ci_hi\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.k, c.hits, c.indeterminate, c.p_hat, c.ci95.0, c.ci95.1
            ));
        }
        out
    }
}

/// Per-grade reach probabilities with a fitted decay factor.
pub fn estimate_annulus_decay(
    dist: &CookieDistribution,
    stack_height: u32,
    k_max: u64,
    fit_range: (u64, u64),
    params: &EstimateParams,
) -> Result<AnnulusReport> {
    if fit_range.0 > fit_range.1 || fit_range.1 > k_max {
        return Err(Error::Precondition(format!(
            "fit range {fit_range:?} must lie inside [0, {k_max}]"
        )));
    }
    let window = params.resolve_window(dist.max_jump(), params.max_steps)?;
    let l = dist.max_jump() as u64;
    let slots = k_max as usize + 1;

    // Per grade: (hits, indeterminate).
    let counts = (0..params.trials)
        .into_par_iter()
        .try_fold(
            || vec![(0u64, 0u64); slots],
            |mut acc, i| {
                let seed = rng::trial_seed(params.master_seed, i);
                let env = Environment::sample(dist.clone(), stack_height, seed, window)?;
                let out = run(&env, &RunConfig::new(params.max_steps))?;
                let reach = out.max_position.max(-out.min_position) as u64;
                let certified = out.stop_reason == StopReason::Looped;
                for k in 0..slots as u64 {
                    if k == 0 || reach > k * l {
                        acc[k as usize].0 += 1;
                    } else if !certified {
                        acc[k as usize].1 += 1;
                    }
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![(0u64, 0u64); slots],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                Ok(a)
            },
        )?;

    let cells: Vec<AnnulusCell> = counts
        .iter()
        .enumerate()
        .map(|(k, &(hits, indeterminate))| {
            let determinate = params.trials - indeterminate;
            AnnulusCell {
                k: k as u64,
                hits,
                indeterminate,
                p_hat: if determinate == 0 {
                    0.0
                } else {
                    hits as f64 / determinate as f64
                },
                ci95: stats::wilson_interval(hits, determinate),
            }
        })
        .collect();

    let points: Vec<(f64, f64, f64)> = cells
        .iter()
        .filter(|c| c.k >= fit_range.0 && c.k <= fit_range.1 && c.hits > 0)
        .map(|c| {
            let det = params.trials - c.indeterminate;
            let se = stats::log_standard_error(c.p_hat, det);
            (c.k as f64, c.p_hat.ln(), se * se)
        })
        .collect();
    let fit = stats::weighted_line_fit(&points);
    let residuals = fit
        .as_ref()
        .map(|f| stats::fit_residuals(f, &points))
        .unwrap_or_default();
    let any_flagged = cells
        .iter()
        .any(|c| c.indeterminate as f64 > 0.01 * params.trials as f64);
    Ok(AnnulusReport {
        c_hat: fit.map(|f| f.slope.exp()),
        cells,
        trials: params.trials,
        master_seed: params.master_seed,
        fit,
        fit_range,
        residuals,
        flagged_indeterminate: any_flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grade_zero_is_certain_and_grades_are_nested() {
        let d = CookieDistribution::uniform(2);
        let params = EstimateParams::new(30_000, 13).with_max_steps(200_000);
        let r = estimate_annulus_decay(&d, 2, 10, (3, 8), &params).unwrap();
        assert_eq!(r.cells[0].p_hat, 1.0);
        assert_eq!(r.cells[0].hits, r.trials);
        for pair in r.cells.windows(2) {
            assert!(
                pair[1].hits <= pair[0].hits,
                "hits not nested at k={}",
                pair[1].k
            );
        }
    }

    #[test]
    fn decay_slope_is_negative_at_test_scale() {
        let d = CookieDistribution::uniform(2);
        let params = EstimateParams::new(50_000, 29).with_max_steps(200_000);
        let r = estimate_annulus_decay(&d, 2, 12, (3, 10), &params).unwrap();
        let fit = r.fit.expect("enough populated grades");
        assert!(
            fit.slope_upper95() < 0.0,
            "slope {} +- {} not negative",
            fit.slope,
            fit.slope_se
        );
        let c = r.c_hat.unwrap();
        assert!(c > 0.0 && c < 1.0, "c_hat = {c}");
    }

    #[test]
    fn bad_fit_range_rejected() {
        let d = CookieDistribution::uniform(2);
        let params = EstimateParams::new(10, 0);
        assert!(estimate_annulus_decay(&d, 2, 5, (3, 9), &params).is_err());
        assert!(estimate_annulus_decay(&d, 2, 5, (4, 2), &params).is_err());
    }
}
