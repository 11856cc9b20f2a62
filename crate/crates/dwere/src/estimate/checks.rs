//! Bound checkers: sub-multiplicativity of the no-backtracking reach events,
//! midpoint concavity of the empirical rate, and the square-root-order gap
//! between the reach event and its no-backtracking restriction.

use rayon::prelude::*;
use serde::Serialize;

use super::{
    estimate_event, estimate_hit_and_reach, threshold_site, EstimateParams, EventSpec, RateTable,
};
use crate::env::{CookieDistribution, Environment};
use crate::error::{Error, Result};
use crate::rng;
use crate::walk::{run, HittingQuery, RunConfig, StopReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict3 {
    Pass,
    Fail,
    /// Some estimate had zero successes; the comparison is not resolved.
    Inconclusive,
}

/// Variance comparison between independent and coupled trial streams.
#[derive(Debug, Clone, Serialize)]
pub struct CoupledComparison {
    pub p_sum: f64,
    pub p_short_a: f64,
    pub p_short_b: f64,
    pub margin: f64,
    pub se_independent: f64,
    pub se_coupled: f64,
    pub verdict: Verdict3,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubadditivityReport {
    pub lambda: f64,
    pub n: u64,
    pub m: u64,
    pub p_n: f64,
    pub p_m: f64,
    pub p_sum: f64,
    pub product: f64,
    /// `p_sum - product`; nonnegative up to noise when the events compose.
    pub margin: f64,
    pub pooled_se: f64,
    pub verdict: Verdict3,
    pub trials: u64,
    pub master_seed: u64,
    pub coupled: CoupledComparison,
}

/// Check `P(A_{n+m}) >= P(A_n) P(A_m)` for the reach-without-backtracking
/// events, with three independent trial streams, and again with one coupled
/// stream for the variance comparison. Pass means the margin is above
/// `-3` pooled standard errors.
pub fn check_subadditivity(
    dist: &CookieDistribution,
    stack_height: u32,
    lambda: f64,
    n: u64,
    m: u64,
    params: &EstimateParams,
) -> Result<SubadditivityReport> {
    let spec_n = EventSpec::reach_before_backtracking(lambda, n);
    let spec_m = EventSpec::reach_before_backtracking(lambda, m);
    let spec_sum = EventSpec::reach_before_backtracking(lambda, n + m);

    let stream = |tag: u64| EstimateParams {
        master_seed: rng::substream(params.master_seed, tag),
        ..*params
    };
    let r_n = estimate_event(dist, stack_height, &spec_n, &stream(1))?;
    let r_m = estimate_event(dist, stack_height, &spec_m, &stream(2))?;
    let r_sum = estimate_event(dist, stack_height, &spec_sum, &stream(3))?;

    let product = r_n.p_hat * r_m.p_hat;
    let margin = r_sum.p_hat - product;
    // Width-based errors: a zero count in the long-horizon cell must still
    // pool with a usable scale.
    let pooled_se = (r_sum.robust_se().powi(2)
        + (r_m.p_hat * r_n.robust_se()).powi(2)
        + (r_n.p_hat * r_m.robust_se()).powi(2))
    .sqrt();
    let verdict = if r_n.successes == 0 || r_m.successes == 0 || r_sum.successes == 0 {
        Verdict3::Inconclusive
    } else if margin >= -3.0 * pooled_se {
        Verdict3::Pass
    } else {
        Verdict3::Fail
    };

    let coupled = coupled_subadditivity(dist, stack_height, lambda, n, m, params)?;

    Ok(SubadditivityReport {
        lambda,
        n,
        m,
        p_n: r_n.p_hat,
        p_m: r_m.p_hat,
        p_sum: r_sum.p_hat,
        product,
        margin,
        pooled_se,
        verdict,
        trials: params.trials,
        master_seed: params.master_seed,
        coupled,
    })
}

/// One environment stream, all three events per trial. The covariance terms
/// sharpen the standard error of the margin.
fn coupled_subadditivity(
    dist: &CookieDistribution,
    stack_height: u32,
    lambda: f64,
    n: u64,
    m: u64,
    params: &EstimateParams,
) -> Result<CoupledComparison> {
    let window = params.resolve_window(dist.max_jump(), n + m)?;
    // Joint counts over (A_n, A_m, A_{n+m}) as a 3-bit index.
    let joint = (0..params.trials)
        .into_par_iter()
        .try_fold(
            || [0u64; 8],
            |mut acc, i| {
                let seed = rng::trial_seed(rng::substream(params.master_seed, 4), i);
                let env = Environment::sample(dist.clone(), stack_height, seed, window)?;
                let mut bits = 0usize;
                for (bit, horizon) in [(1usize, n), (2, m), (4, n + m)] {
                    let threshold = threshold_site(lambda * horizon as f64);
                    let out = run(
                        &env,
                        &RunConfig::new(horizon).stop_on(HittingQuery::threshold(threshold)),
                    )?;
                    if out.stop_reason == StopReason::HitTarget && out.min_position >= 0 {
                        bits |= bit;
                    }
                }
                acc[bits] += 1;
                Ok(acc)
            },
        )
        .try_reduce(
            || [0u64; 8],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;

    let t = params.trials as f64;
    let mass = |bit: usize| -> f64 {
        joint
            .iter()
            .enumerate()
            .filter(|&(i, _)| i & bit != 0)
            .map(|(_, &c)| c)
            .sum::<u64>() as f64
            / t
    };
    let mass2 = |b1: usize, b2: usize| -> f64 {
        joint
            .iter()
            .enumerate()
            .filter(|&(i, _)| i & b1 != 0 && i & b2 != 0)
            .map(|(_, &c)| c)
            .sum::<u64>() as f64
            / t
    };
    let (pn, pm, ps) = (mass(1), mass(2), mass(4));
    let margin = ps - pn * pm;

    let var = |p: f64| p * (1.0 - p) / t;
    let cov = |pxy: f64, px: f64, py: f64| (pxy - px * py) / t;
    let se_independent =
        (var(ps) + (pm * pm) * var(pn) + (pn * pn) * var(pm)).sqrt();
    let var_coupled = var(ps) + pm * pm * var(pn) + pn * pn * var(pm)
        - 2.0 * pm * cov(mass2(4, 1), ps, pn)
        - 2.0 * pn * cov(mass2(4, 2), ps, pm)
        + 2.0 * pn * pm * cov(mass2(1, 2), pn, pm);
    let se_coupled = var_coupled.max(0.0).sqrt();

    let verdict = if pn == 0.0 || pm == 0.0 || ps == 0.0 {
        Verdict3::Inconclusive
    } else if margin >= -3.0 * se_coupled {
        Verdict3::Pass
    } else {
        Verdict3::Fail
    };
    Ok(CoupledComparison {
        p_sum: ps,
        p_short_a: pn,
        p_short_b: pm,
        margin,
        se_independent,
        se_coupled,
        verdict,
    })
}

/// A midpoint triple of the rate table at one horizon.
#[derive(Debug, Clone, Serialize)]
pub struct ConcavityTriple {
    pub lambda_left: f64,
    pub lambda_mid: f64,
    pub lambda_right: f64,
    pub n: u64,
    /// `(rate(left) + rate(right)) / 2 - rate(mid)`; positive values violate
    /// concavity.
    pub excess: f64,
    pub se: f64,
    pub beyond_3se: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcavityReport {
    pub triples: Vec<ConcavityTriple>,
    /// Worst excess per horizon, for the shrink-with-n trend.
    pub worst_excess_by_n: Vec<(u64, f64)>,
    /// Violations beyond three pooled standard errors at the largest horizon.
    pub violations_at_largest_n: usize,
}

/// List midpoint-concavity violations of the empirical rate. Cells beyond
/// the maximal jump or without successes carry no rate and are skipped.
pub fn check_concavity(table: &RateTable) -> Result<ConcavityReport> {
    let mut lambdas: Vec<f64> = Vec::new();
    for c in &table.cells {
        if !lambdas.iter().any(|l| (l - c.lambda).abs() < 1e-12) {
            lambdas.push(c.lambda);
        }
    }
    if lambdas.len() < 3 {
        return Err(Error::Precondition(
            "concavity needs at least three speed grid points".into(),
        ));
    }
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut ns: Vec<u64> = table.cells.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let largest_n = *ns.last().ok_or_else(|| {
        Error::Precondition("rate table is empty".into())
    })?;

    let usable = |lambda: f64, n: u64| -> Option<(f64, f64)> {
        let cell = table.cell(lambda, n)?;
        if cell.lambda > table.max_jump as f64 || cell.certified_zero {
            return None;
        }
        Some((cell.rate?, cell.rate_se()?))
    };

    let mut triples = Vec::new();
    let mut worst: Vec<(u64, f64)> = Vec::new();
    for &n in &ns {
        let mut worst_here = f64::NEG_INFINITY;
        for w in lambdas.windows(3) {
            let (l1, l2, l3) = (w[0], w[1], w[2]);
            // Midpoint triples only.
            if ((l1 + l3) / 2.0 - l2).abs() > 1e-9 {
                continue;
            }
            let (Some((r1, s1)), Some((r2, s2)), Some((r3, s3))) =
                (usable(l1, n), usable(l2, n), usable(l3, n))
            else {
                continue;
            };
            let excess = 0.5 * (r1 + r3) - r2;
            let se = (0.25 * s1 * s1 + s2 * s2 + 0.25 * s3 * s3).sqrt();
            worst_here = worst_here.max(excess);
            triples.push(ConcavityTriple {
                lambda_left: l1,
                lambda_mid: l2,
                lambda_right: l3,
                n,
                excess,
                se,
                beyond_3se: excess > 3.0 * se,
            });
        }
        if worst_here.is_finite() {
            worst.push((n, worst_here));
        }
    }
    let violations_at_largest_n = triples
        .iter()
        .filter(|t| t.n == largest_n && t.beyond_3se)
        .count();
    Ok(ConcavityReport {
        triples,
        worst_excess_by_n: worst,
        violations_at_largest_n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MainBoundCell {
    pub n: u64,
    pub trials: u64,
    pub p_hit: f64,
    pub hit_successes: u64,
    pub p_reach: f64,
    pub reach_successes: u64,
    /// `p_hit / p_reach`, at least one up to noise by event inclusion.
    pub ratio: Option<f64>,
    pub log_ratio_over_sqrt_n: Option<f64>,
    pub se_log_ratio: Option<f64>,
    pub conclusive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MainBoundReport {
    pub lambda: f64,
    pub cells: Vec<MainBoundCell>,
    /// `ln C` for `C = (C1 C2)^{2L}` with `C1 = (mu_max/mu_min)^M` and
    /// `C2 = (2L+1)^M`: the pigeonhole constant that provably dominates
    /// `ln(ratio) / sqrt(n)`. Loose by construction.
    pub theoretical_log_c: f64,
    /// Every conclusive ratio is at least `1 - 3 SE`.
    pub ratios_at_least_one: bool,
    /// The normalized log-ratios do not increase across the grid beyond
    /// three pooled standard errors.
    pub non_increasing_within_3se: bool,
    pub master_seed: u64,
}

impl MainBoundReport {
    pub fn csv(&self) -> String {
        let mut out = format!(
            "# master_seed={} lambda={}\n",
            self.master_seed, self.lambda
        );
        out.push_str(
            "n,trials,p_hit,p_reach,ratio,log_ratio_over_sqrt_n,se_log_ratio,conclusive\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.n,
                c.trials,
                c.p_hit,
                c.p_reach,
                opt(c.ratio),
                opt(c.log_ratio_over_sqrt_n),
                opt(c.se_log_ratio),
                c.conclusive
            ));
        }
        out
    }
}

/// Compare `P(T_{lambda n} <= n)` against its no-backtracking restriction
/// across a horizon grid, on coupled trials. `trials_by_n` pairs each horizon
/// with its own trial count so deeper cells can be sampled harder.
pub fn check_main_bound(
    dist: &CookieDistribution,
    stack_height: u32,
    lambda: f64,
    trials_by_n: &[(u64, u64)],
    params: &EstimateParams,
) -> Result<MainBoundReport> {
    if stack_height < 3 {
        return Err(Error::Precondition(
            "the square-root gap bound needs M >= 3".into(),
        ));
    }
    if trials_by_n.is_empty() {
        return Err(Error::Precondition("empty horizon grid".into()));
    }
    let mut cells = Vec::new();
    for (idx, &(n, trials)) in trials_by_n.iter().enumerate() {
        let cell_params = EstimateParams {
            trials,
            master_seed: rng::substream(params.master_seed, idx as u64),
            ..*params
        };
        let (hit, reach) = estimate_hit_and_reach(dist, stack_height, lambda, n, &cell_params)?;
        let conclusive = reach.successes > 0 && hit.successes > 0;
        let (ratio, log_ratio_over_sqrt_n, se_log_ratio) = if conclusive {
            let ratio = hit.p_hat / reach.p_hat;
            let se = ((hit.robust_se() / hit.p_hat).powi(2)
                + (reach.robust_se() / reach.p_hat).powi(2))
            .sqrt();
            (
                Some(ratio),
                Some(ratio.ln() / (n as f64).sqrt()),
                Some(se),
            )
        } else {
            (None, None, None)
        };
        cells.push(MainBoundCell {
            n,
            trials,
            p_hit: hit.p_hat,
            hit_successes: hit.successes,
            p_reach: reach.p_hat,
            reach_successes: reach.successes,
            ratio,
            log_ratio_over_sqrt_n,
            se_log_ratio,
            conclusive,
        });
    }

    let l = dist.max_jump() as f64;
    let m = stack_height as f64;
    let theoretical_log_c =
        2.0 * l * (m * (dist.mu_max() / dist.mu_min()).ln() + m * (2.0 * l + 1.0).ln());

    let ratios_at_least_one = cells.iter().all(|c| match (c.ratio, c.se_log_ratio) {
        // Coupled trials give ratio >= 1 exactly; the slack mirrors the
        // aggregate tolerance.
        (Some(r), Some(se)) => r >= 1.0 - 3.0 * se,
        _ => true,
    });
    let normalized: Vec<(f64, f64)> = cells
        .iter()
        .filter_map(|c| Some((c.log_ratio_over_sqrt_n?, c.se_log_ratio? / (c.n as f64).sqrt())))
        .collect();
    let non_increasing_within_3se = normalized
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 + 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());

    Ok(MainBoundReport {
        lambda,
        cells,
        theoretical_log_c,
        ratios_at_least_one,
        non_increasing_within_3se,
        master_seed: params.master_seed,
    })
}
