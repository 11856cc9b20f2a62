//! Distribution of the number of origin occupations, against the exponential
//! sandwich bounds.

use rayon::prelude::*;
use serde::Serialize;

use super::EstimateParams;
use crate::env::{CookieDistribution, Environment};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats;
use crate::walk::{run, RunConfig, StopReason};

#[derive(Debug, Clone, Serialize)]
pub struct ReturnBin {
    pub k: u64,
    pub count: u64,
    /// Mass among determinate trials.
    pub p_hat: f64,
    pub ci95: (f64, f64),
    /// `mu_min^{4Mk}`.
    pub lower_bound: f64,
    /// `2 (1 - mu_min^{2M+L-2})^{k / (2LM)}`.
    pub upper_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReturnDistribution {
    pub bins: Vec<ReturnBin>,
    /// Determinate trials with a finite count above `k_max`.
    pub overflow: u64,
    /// Trials whose certified loop passes through the origin.
    pub infinite: u64,
    pub indeterminate: u64,
    pub trials: u64,
    pub master_seed: u64,
    pub flagged_indeterminate: bool,
}

impl ReturnDistribution {
    pub fn determinate(&self) -> u64 {
        self.trials - self.indeterminate
    }

    pub fn csv(&self) -> String {
        let mut out = format!(
            "# master_seed={} trials={}\n",
            self.master_seed, self.trials
        );
        out.push_str("k,count,p_hat,ci_lo,ci_hi,lower_bound,upper_bound\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                b.k, b.count, b.p_hat, b.ci95.0, b.ci95.1, b.lower_bound, b.upper_bound
            ));
        }
        let det = self.determinate().max(1) as f64;
        out.push_str(&format!(
            "overflow,{},{},,,,\n",
            self.overflow,
            self.overflow as f64 / det
        ));
        out.push_str(&format!(
            "inf,{},{},,,,\n",
            self.infinite,
            self.infinite as f64 / det
        ));
        out
    }
}

/// Histogram of origin occupation counts with the analytic bounds tabulated
/// alongside. Needs `L >= 2` and `M >= 2`, the regime where finite counts
/// above one are possible at all.
pub fn estimate_return_distribution(
    dist: &CookieDistribution,
    stack_height: u32,
    k_max: u64,
    params: &EstimateParams,
) -> Result<ReturnDistribution> {
    if dist.max_jump() < 2 || stack_height < 2 {
        return Err(Error::Precondition(
            "return-count bounds need L >= 2 and M >= 2".into(),
        ));
    }
    if k_max == 0 {
        return Err(Error::Precondition("k_max must be at least 1".into()));
    }
    let window = params.resolve_window(dist.max_jump(), params.max_steps)?;

    // Slots: k = 1..=k_max, then overflow, infinite, indeterminate.
    let slots = k_max as usize + 3;
    let counts = (0..params.trials)
        .into_par_iter()
        .try_fold(
            || vec![0u64; slots],
            |mut acc, i| {
                let seed = rng::trial_seed(params.master_seed, i);
                let env = Environment::sample(dist.clone(), stack_height, seed, window)?;
                let out = run(&env, &RunConfig::new(params.max_steps))?;
                let slot = match out.stop_reason {
                    StopReason::Looped => match out.returns_to_origin() {
                        Some(d0) if d0 <= k_max => d0 as usize - 1,
                        Some(_) => k_max as usize,
                        None => k_max as usize + 1,
                    },
                    _ => k_max as usize + 2,
                };
                acc[slot] += 1;
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![0u64; slots],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;

    let indeterminate = counts[k_max as usize + 2];
    let determinate = params.trials - indeterminate;
    let l = dist.max_jump() as f64;
    let m = stack_height as f64;
    let trap_mass = 1.0 - dist.mu_min().powf(2.0 * m + l - 2.0);
    let bins = (1..=k_max)
        .map(|k| {
            let count = counts[k as usize - 1];
            ReturnBin {
                k,
                count,
                p_hat: if determinate == 0 {
                    0.0
                } else {
                    count as f64 / determinate as f64
                },
                ci95: stats::wilson_interval(count, determinate),
                lower_bound: dist.mu_min().powf(4.0 * m * k as f64),
                upper_bound: 2.0 * trap_mass.powf(k as f64 / (2.0 * l * m)),
            }
        })
        .collect();
    Ok(ReturnDistribution {
        bins,
        overflow: counts[k_max as usize],
        infinite: counts[k_max as usize + 1],
        indeterminate,
        trials: params.trials,
        master_seed: params.master_seed,
        flagged_indeterminate: indeterminate as f64 > 0.01 * params.trials as f64,
    })
}
