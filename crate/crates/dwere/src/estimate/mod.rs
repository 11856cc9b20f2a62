//! Parallel Monte Carlo estimators and bound checkers.
//!
//! Trials are independent tasks over immutable inputs: the environment of
//! trial `i` is seeded by `hash(master_seed, i)` and results reduce by count
//! aggregation, so a report depends only on `(master_seed, spec, trials)` and
//! never on worker count or scheduling. Events whose truth needs the infinite
//! future (return counts, annulus hitting) are settled by loop certificates;
//! trials that hit the step budget without a certificate are reported as
//! indeterminate, never as a verdict.

mod annulus;
mod checks;
mod exhaustive;
mod rate;
mod returns;

pub use annulus::{estimate_annulus_decay, AnnulusCell, AnnulusReport};
pub use checks::{
    check_concavity, check_main_bound, check_subadditivity, ConcavityReport, ConcavityTriple,
    CoupledComparison, MainBoundCell, MainBoundReport, SubadditivityReport, Verdict3,
};
pub use exhaustive::exact_event_probability;
pub use rate::{estimate_rate_function, LambdaSummary, RateCell, RateTable};
pub use returns::{estimate_return_distribution, ReturnBin, ReturnDistribution};

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{CookieDistribution, Environment, Window};
use crate::error::{Error, Result};
use crate::rng;
use crate::walk::{run, HittingQuery, RunConfig, StopReason};

/// Optional super-additive rescaling of the deviation threshold: the event
/// compares positions against `lambda * xi(n)` instead of `lambda * n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scaling {
    Identity,
    Power { theta: f64 },
}

impl Scaling {
    pub fn apply(&self, n: u64) -> f64 {
        match self {
            Scaling::Identity => n as f64,
            Scaling::Power { theta } => (n as f64).powf(*theta),
        }
    }

    /// Power scalings need an exponent in (0, 1); super-additivity
    /// `xi(n) + xi(m) >= xi(n + m)` is asserted on a sampled grid.
    pub fn validate(&self) -> Result<()> {
        if let Scaling::Power { theta } = self {
            if !(*theta > 0.0 && *theta < 1.0) {
                return Err(Error::Precondition(format!(
                    "power scaling exponent must lie in (0, 1), got {theta}"
                )));
            }
        }
        for n in [1u64, 2, 3, 5, 10, 50, 100, 1000] {
            for m in [1u64, 4, 7, 64, 900] {
                if self.apply(n) + self.apply(m) < self.apply(n + m) - 1e-9 {
                    return Err(Error::Precondition(format!(
                        "scaling is not super-additive at n={n}, m={m}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An event of the walk, evaluated per trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventSpec {
    /// `X_n >= lambda * xi(n)`.
    FinalAtLeast { lambda: f64, n: u64, scaling: Scaling },
    /// `T_{lambda xi(n)} <= n`.
    HitByDeadline { lambda: f64, n: u64, scaling: Scaling },
    /// The walk reaches `lambda * xi(n)` within `n` steps without ever
    /// occupying a negative site on the way.
    ReachBeforeBacktracking { lambda: f64, n: u64, scaling: Scaling },
    /// The origin is occupied exactly `k` times over the whole (infinite)
    /// walk, certified by a loop.
    ReturnsEqual { k: u64 },
    /// The walk ever enters the annulus at graded distance `k`.
    AnnulusReached { k: u64 },
}

impl EventSpec {
    pub fn final_at_least(lambda: f64, n: u64) -> Self {
        Self::FinalAtLeast {
            lambda,
            n,
            scaling: Scaling::Identity,
        }
    }

    pub fn hit_by_deadline(lambda: f64, n: u64) -> Self {
        Self::HitByDeadline {
            lambda,
            n,
            scaling: Scaling::Identity,
        }
    }

    pub fn reach_before_backtracking(lambda: f64, n: u64) -> Self {
        Self::ReachBeforeBacktracking {
            lambda,
            n,
            scaling: Scaling::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::FinalAtLeast { lambda, scaling, .. }
            | Self::HitByDeadline { lambda, scaling, .. }
            | Self::ReachBeforeBacktracking { lambda, scaling, .. } => {
                if !lambda.is_finite() || *lambda < 0.0 {
                    return Err(Error::Precondition(format!(
                        "lambda must be a nonnegative number, got {lambda}"
                    )));
                }
                scaling.validate()
            }
            Self::ReturnsEqual { k } => {
                if *k == 0 {
                    Err(Error::Precondition(
                        "the origin is occupied at least once, k must be >= 1".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            Self::AnnulusReached { .. } => Ok(()),
        }
    }

    /// Steps any single trial can need.
    pub fn horizon(&self, fallback_max_steps: u64) -> u64 {
        match self {
            Self::FinalAtLeast { n, .. }
            | Self::HitByDeadline { n, .. }
            | Self::ReachBeforeBacktracking { n, .. } => *n,
            Self::ReturnsEqual { .. } | Self::AnnulusReached { .. } => fallback_max_steps,
        }
    }

    /// The event is impossible outright: positions satisfy `|X_t| <= L t`.
    pub fn certainly_impossible(&self, max_jump: u32) -> bool {
        match self {
            Self::FinalAtLeast { lambda, n, scaling }
            | Self::HitByDeadline { lambda, n, scaling }
            | Self::ReachBeforeBacktracking { lambda, n, scaling } => {
                lambda * scaling.apply(*n) > (max_jump as f64) * (*n as f64) + 1e-9
            }
            _ => false,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::FinalAtLeast { .. } => "final_at_least",
            Self::HitByDeadline { .. } => "hit_by_deadline",
            Self::ReachBeforeBacktracking { .. } => "reach_before_backtracking",
            Self::ReturnsEqual { .. } => "returns_equal",
            Self::AnnulusReached { .. } => "annulus_reached",
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            Self::FinalAtLeast { lambda, .. }
            | Self::HitByDeadline { lambda, .. }
            | Self::ReachBeforeBacktracking { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    pub fn n(&self) -> Option<u64> {
        match self {
            Self::FinalAtLeast { n, .. }
            | Self::HitByDeadline { n, .. }
            | Self::ReachBeforeBacktracking { n, .. } => Some(*n),
            _ => None,
        }
    }

    pub fn k(&self) -> Option<u64> {
        match self {
            Self::ReturnsEqual { k } | Self::AnnulusReached { k } => Some(*k),
            _ => None,
        }
    }
}

/// Smallest integer position satisfying `position >= value`, with a guard
/// against binary round-off in products like `0.1 * 30`.
pub fn threshold_site(value: f64) -> i64 {
    (value - 1e-9).ceil() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Success,
    Failure,
    /// The step budget ran out before a loop certificate settled the event.
    Indeterminate,
}

/// Evaluate one event on one environment. Exposed so callers can couple
/// several events on identical per-trial environments.
pub fn evaluate_event(env: &Environment, spec: &EventSpec, max_steps: u64) -> Result<Verdict> {
    match spec {
        EventSpec::FinalAtLeast { lambda, n, scaling } => {
            let threshold = threshold_site(lambda * scaling.apply(*n));
            if spec.certainly_impossible(env.max_jump()) {
                return Ok(Verdict::Failure);
            }
            let out = run(env, &RunConfig::new(*n))?;
            let x_n = out
                .position_at(*n)
                .expect("looped or ran to the horizon; either way X_n is known");
            Ok(if x_n >= threshold {
                Verdict::Success
            } else {
                Verdict::Failure
            })
        }
        EventSpec::HitByDeadline { lambda, n, scaling } => {
            let threshold = threshold_site(lambda * scaling.apply(*n));
            if spec.certainly_impossible(env.max_jump()) {
                return Ok(Verdict::Failure);
            }
            let out = run(
                env,
                &RunConfig::new(*n).stop_on(HittingQuery::threshold(threshold)),
            )?;
            Ok(match out.stop_reason {
                StopReason::HitTarget => Verdict::Success,
                _ => Verdict::Failure,
            })
        }
        EventSpec::ReachBeforeBacktracking { lambda, n, scaling } => {
            let threshold = threshold_site(lambda * scaling.apply(*n));
            if spec.certainly_impossible(env.max_jump()) {
                return Ok(Verdict::Failure);
            }
            let out = run(
                env,
                &RunConfig::new(*n).stop_on(HittingQuery::threshold(threshold)),
            )?;
            Ok(match out.stop_reason {
                StopReason::HitTarget if out.min_position >= 0 => Verdict::Success,
                _ => Verdict::Failure,
            })
        }
        EventSpec::ReturnsEqual { k } => {
            let out = run(env, &RunConfig::new(max_steps))?;
            Ok(match out.stop_reason {
                StopReason::Looped => match out.returns_to_origin() {
                    Some(d0) => {
                        if d0 == *k {
                            Verdict::Success
                        } else {
                            Verdict::Failure
                        }
                    }
                    None => Verdict::Failure,
                },
                _ if out.origin_visits > *k => Verdict::Failure,
                _ => Verdict::Indeterminate,
            })
        }
        EventSpec::AnnulusReached { k } => {
            let out = run(env, &RunConfig::new(max_steps))?;
            let reach = out.max_position.max(-out.min_position) as u64;
            let needed = *k * env.max_jump() as u64;
            Ok(if *k == 0 || reach > needed {
                // The origin already lies in the innermost block.
                Verdict::Success
            } else if out.stop_reason == StopReason::Looped {
                Verdict::Failure
            } else {
                Verdict::Indeterminate
            })
        }
    }
}

/// Trial layout shared by the estimators.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EstimateParams {
    pub trials: u64,
    pub master_seed: u64,
    /// Step budget per trial for events settled by loop certificates.
    pub max_steps: u64,
    /// Window override; the default is `[-L * horizon, L * horizon]`, which
    /// no trial can leave.
    pub window: Option<(i64, i64)>,
}

impl EstimateParams {
    pub fn new(trials: u64, master_seed: u64) -> Self {
        Self {
            trials,
            master_seed,
            max_steps: 1_000_000,
            window: None,
        }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_window(mut self, lo: i64, hi: i64) -> Self {
        self.window = Some((lo, hi));
        self
    }

    pub(crate) fn resolve_window(&self, max_jump: u32, horizon: u64) -> Result<Window> {
        match self.window {
            Some((lo, hi)) => Window::new(lo, hi),
            None => {
                let half = (max_jump as i64)
                    .checked_mul(horizon as i64)
                    .ok_or_else(|| Error::Precondition("window span overflows".into()))?;
                Window::new(-half, half)
            }
        }
    }
}

/// Estimate report with replay information.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub event: EventSpec,
    pub trials: u64,
    pub successes: u64,
    pub failures: u64,
    pub indeterminate: u64,
    /// Successes over determinate trials.
    pub p_hat: f64,
    pub ci95: (f64, f64),
    /// The event was settled by the step bound with no sampling.
    pub certified_zero: bool,
    /// Indeterminate fraction exceeded 1%.
    pub flagged_indeterminate: bool,
    pub master_seed: u64,
    pub wall_time_secs: f64,
}

impl EstimateReport {
    pub fn determinate(&self) -> u64 {
        self.trials - self.indeterminate
    }

    pub fn standard_error(&self) -> f64 {
        crate::stats::standard_error(self.p_hat, self.determinate())
    }

    /// Wilson-width standard error; nonzero even at zero counts.
    pub fn robust_se(&self) -> f64 {
        crate::stats::width_standard_error(self.successes, self.determinate())
    }

    /// Rate `ln(p_hat) / n` when the event has a step horizon and successes.
    pub fn rate(&self) -> Option<f64> {
        let n = self.event.n()?;
        if self.successes == 0 {
            return None;
        }
        Some(self.p_hat.ln() / n as f64)
    }

    pub fn csv_header() -> &'static str {
        "event_kind,lambda,n,k,trials,successes,indeterminate,p_hat,ci_lo,ci_hi,rate"
    }

    pub fn csv_row(&self) -> String {
        let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_u = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.event.kind_name(),
            opt_f(self.event.lambda()),
            opt_u(self.event.n()),
            opt_u(self.event.k()),
            self.trials,
            self.successes,
            self.indeterminate,
            self.p_hat,
            self.ci95.0,
            self.ci95.1,
            opt_f(self.rate()),
        )
    }

    fn from_counts(
        event: EventSpec,
        trials: u64,
        successes: u64,
        indeterminate: u64,
        certified_zero: bool,
        master_seed: u64,
        wall_time_secs: f64,
    ) -> Self {
        let determinate = trials - indeterminate;
        let p_hat = if determinate == 0 {
            0.0
        } else {
            successes as f64 / determinate as f64
        };
        Self {
            event,
            trials,
            successes,
            failures: determinate - successes,
            indeterminate,
            p_hat,
            ci95: crate::stats::wilson_interval(successes, determinate),
            certified_zero,
            flagged_indeterminate: indeterminate as f64 > 0.01 * trials as f64,
            master_seed,
            wall_time_secs,
        }
    }
}

/// Estimate the probability of one event over independent trials.
pub fn estimate_event(
    dist: &CookieDistribution,
    stack_height: u32,
    spec: &EventSpec,
    params: &EstimateParams,
) -> Result<EstimateReport> {
    spec.validate()?;
    if params.trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    let start = std::time::Instant::now();
    if spec.certainly_impossible(dist.max_jump()) {
        return Ok(EstimateReport::from_counts(
            spec.clone(),
            params.trials,
            0,
            0,
            true,
            params.master_seed,
            start.elapsed().as_secs_f64(),
        ));
    }
    let horizon = spec.horizon(params.max_steps);
    let window = params.resolve_window(dist.max_jump(), horizon)?;
    let (successes, indeterminate) = (0..params.trials)
        .into_par_iter()
        .map(|i| {
            let seed = rng::trial_seed(params.master_seed, i);
            let env = Environment::sample(dist.clone(), stack_height, seed, window)?;
            Ok(match evaluate_event(&env, spec, params.max_steps)? {
                Verdict::Success => (1u64, 0u64),
                Verdict::Failure => (0, 0),
                Verdict::Indeterminate => (0, 1),
            })
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok(EstimateReport::from_counts(
        spec.clone(),
        params.trials,
        successes,
        indeterminate,
        false,
        params.master_seed,
        start.elapsed().as_secs_f64(),
    ))
}

/// Evaluate several events on identical per-trial environments and return one
/// report per event. Inclusion relations between events then hold trial by
/// trial, not just in aggregate.
pub fn estimate_events_coupled(
    dist: &CookieDistribution,
    stack_height: u32,
    specs: &[EventSpec],
    params: &EstimateParams,
) -> Result<Vec<EstimateReport>> {
    for spec in specs {
        spec.validate()?;
    }
    let start = std::time::Instant::now();
    let horizon = specs
        .iter()
        .map(|s| s.horizon(params.max_steps))
        .max()
        .ok_or_else(|| Error::Precondition("no events supplied".into()))?;
    let window = params.resolve_window(dist.max_jump(), horizon)?;
    let zero = vec![(0u64, 0u64); specs.len()];
    let counts = (0..params.trials)
        .into_par_iter()
        .try_fold(
            || zero.clone(),
            |mut acc, i| {
                let seed = rng::trial_seed(params.master_seed, i);
                let env = Environment::sample(dist.clone(), stack_height, seed, window)?;
                for (slot, spec) in acc.iter_mut().zip(specs) {
                    match evaluate_event(&env, spec, params.max_steps)? {
                        Verdict::Success => slot.0 += 1,
                        Verdict::Failure => {}
                        Verdict::Indeterminate => slot.1 += 1,
                    }
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || zero.clone(),
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                Ok(a)
            },
        )?;
    let elapsed = start.elapsed().as_secs_f64();
    Ok(specs
        .iter()
        .zip(counts)
        .map(|(spec, (s, ind))| {
            EstimateReport::from_counts(
                spec.clone(),
                params.trials,
                s,
                ind,
                false,
                params.master_seed,
                elapsed,
            )
        })
        .collect())
}

/// One-pass coupled estimate of `T_{lambda n} <= n` and of the same event
/// restricted to walks that never go negative on the way.
pub fn estimate_hit_and_reach(
    dist: &CookieDistribution,
    stack_height: u32,
    lambda: f64,
    n: u64,
    params: &EstimateParams,
) -> Result<(EstimateReport, EstimateReport)> {
    let hit_spec = EventSpec::hit_by_deadline(lambda, n);
    let reach_spec = EventSpec::reach_before_backtracking(lambda, n);
    hit_spec.validate()?;
    let start = std::time::Instant::now();
    let window = params.resolve_window(dist.max_jump(), n)?;
    let threshold = threshold_site(lambda * n as f64);
    let (hits, reaches) = (0..params.trials)
        .into_par_iter()
        .map(|i| {
            let seed = rng::trial_seed(params.master_seed, i);
            let env = Environment::sample(dist.clone(), stack_height, seed, window)?;
            let out = run(
                &env,
                &RunConfig::new(n).stop_on(HittingQuery::threshold(threshold)),
            )?;
            Ok(match out.stop_reason {
                StopReason::HitTarget => (1u64, u64::from(out.min_position >= 0)),
                _ => (0, 0),
            })
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    let elapsed = start.elapsed().as_secs_f64();
    Ok((
        EstimateReport::from_counts(
            hit_spec,
            params.trials,
            hits,
            0,
            false,
            params.master_seed,
            elapsed,
        ),
        EstimateReport::from_counts(
            reach_spec,
            params.trials,
            reaches,
            0,
            false,
            params.master_seed,
            elapsed,
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(l: u32) -> CookieDistribution {
        CookieDistribution::uniform(l)
    }

    #[test]
    fn impossible_threshold_is_certified_zero() {
        let spec = EventSpec::final_at_least(2.5, 10);
        let report =
            estimate_event(&uniform(2), 2, &spec, &EstimateParams::new(1000, 1)).unwrap();
        assert!(report.certified_zero);
        assert_eq!(report.successes, 0);
        assert_eq!(report.failures, 1000);
        assert_eq!(report.indeterminate, 0);
    }

    #[test]
    fn nonnegative_final_position_bounds() {
        // P(X_n >= 0) is at least mu_min^M (all cookies at the origin zero)
        // and at most 1 - mu_min^{M+1} (first cookie left, blocker at -1).
        let trials = 200_000;
        let spec = EventSpec::final_at_least(0.0, 16);
        let report =
            estimate_event(&uniform(2), 2, &spec, &EstimateParams::new(trials, 7)).unwrap();
        let mu_min: f64 = 0.2;
        let se = report.standard_error();
        assert!(report.p_hat >= mu_min.powi(2) - 5.0 * se);
        assert!(report.p_hat <= 1.0 - mu_min.powi(3) + 5.0 * se);
    }

    #[test]
    fn reports_are_reproducible() {
        let spec = EventSpec::hit_by_deadline(0.5, 32);
        let p = EstimateParams::new(20_000, 99);
        let a = estimate_event(&uniform(2), 2, &spec, &p).unwrap();
        let b = estimate_event(&uniform(2), 2, &spec, &p).unwrap();
        assert_eq!(a.successes, b.successes);
        assert_eq!(a.indeterminate, b.indeterminate);
        assert_eq!(a.p_hat, b.p_hat);
    }

    #[test]
    fn coupled_events_respect_inclusions_trial_by_trial() {
        // A_n implies {T <= n} implies nothing fails backwards; and
        // {X_n >= lambda n} implies {T_{lambda n} <= n}.
        let (lambda, n) = (0.25, 32);
        let window = (-(2 * n as i64), 2 * n as i64);
        for i in 0..4000u64 {
            let seed = rng::trial_seed(4242, i);
            let env = Environment::sample(
                uniform(2),
                2,
                seed,
                Window::new(window.0, window.1).unwrap(),
            )
            .unwrap();
            let final_v =
                evaluate_event(&env, &EventSpec::final_at_least(lambda, n), 0).unwrap();
            let hit_v =
                evaluate_event(&env, &EventSpec::hit_by_deadline(lambda, n), 0).unwrap();
            let reach_v =
                evaluate_event(&env, &EventSpec::reach_before_backtracking(lambda, n), 0)
                    .unwrap();
            if final_v == Verdict::Success {
                assert_eq!(hit_v, Verdict::Success, "trial {i}");
            }
            if reach_v == Verdict::Success {
                assert_eq!(hit_v, Verdict::Success, "trial {i}");
            }
        }
    }

    #[test]
    fn zero_stack_patch_forces_final_at_least_on_hits() {
        // With every stack on [threshold, threshold + L] zeroed, any walk
        // that reaches the strip parks there, so T <= n forces X_n past the
        // threshold, trial by trial.
        let (lambda, n) = (0.5, 24u64);
        let threshold = threshold_site(lambda * n as f64);
        let l = 2u32;
        for i in 0..3000u64 {
            let seed = rng::trial_seed(777, i);
            let mut env = Environment::sample(
                uniform(l),
                2,
                seed,
                Window::new(-(l as i64) * n as i64, (l as i64) * n as i64).unwrap(),
            )
            .unwrap();
            for z in threshold..=threshold + l as i64 {
                env = env.with_patch(z, vec![0, 0]).unwrap();
            }
            let hit = evaluate_event(&env, &EventSpec::hit_by_deadline(lambda, n), 0).unwrap();
            if hit == Verdict::Success {
                let fin = evaluate_event(&env, &EventSpec::final_at_least(lambda, n), 0).unwrap();
                assert_eq!(fin, Verdict::Success, "trial {i}");
            }
        }
    }

    #[test]
    fn scaling_validation() {
        assert!(Scaling::Power { theta: 0.5 }.validate().is_ok());
        assert!(Scaling::Power { theta: 1.5 }.validate().is_err());
        assert!(Scaling::Identity.validate().is_ok());
        assert!(EventSpec::ReturnsEqual { k: 0 }.validate().is_err());
    }

    #[test]
    fn integer_thresholds_survive_binary_round_off() {
        // 0.1 * 30 exceeds 3.0 by one ulp; the threshold must still be 3.
        assert_eq!(threshold_site(0.1 * 30.0), 3);
        assert_eq!(threshold_site(0.25 * 64.0), 16);
        assert_eq!(threshold_site(3.1), 4);
        assert_eq!(threshold_site(0.0), 0);
        assert_eq!(threshold_site(2.0f64.sqrt() * 2.0), 3);
    }

    #[test]
    fn undersized_user_windows_error_instead_of_lying() {
        let spec = EventSpec::final_at_least(0.5, 64);
        let params = EstimateParams::new(500, 3).with_window(-4, 4);
        let r = estimate_event(&uniform(2), 2, &spec, &params);
        assert!(matches!(r, Err(Error::OutOfWindow { .. })));
    }

    #[test]
    fn zero_step_runs_observe_only_the_origin() {
        let env = Environment::sample(
            uniform(2),
            2,
            1,
            Window::new(-5, 5).unwrap(),
        )
        .unwrap();
        let out = crate::walk::run(
            &env,
            &crate::walk::RunConfig::new(0).record_trajectory(true),
        )
        .unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(out.trajectory.unwrap(), vec![0]);
        assert_eq!(out.origin_visits, 1);
    }

    #[test]
    fn power_scaling_weakens_the_threshold() {
        // xi(n) = sqrt(n) < n, so the scaled event contains the linear one.
        let n = 64;
        let lin = EventSpec::final_at_least(0.5, n);
        let scaled = EventSpec::FinalAtLeast {
            lambda: 0.5,
            n,
            scaling: Scaling::Power { theta: 0.5 },
        };
        let w = Window::new(-200, 200).unwrap();
        for i in 0..2000u64 {
            let env =
                Environment::sample(uniform(2), 2, rng::trial_seed(31, i), w).unwrap();
            if evaluate_event(&env, &lin, 0).unwrap() == Verdict::Success {
                assert_eq!(evaluate_event(&env, &scaled, 0).unwrap(), Verdict::Success);
            }
        }
    }

    #[test]
    fn hit_and_reach_one_pass_matches_separate_estimates() {
        let p = EstimateParams::new(30_000, 5);
        let (hit, reach) = estimate_hit_and_reach(&uniform(2), 3, 0.5, 32, &p).unwrap();
        let hit2 = estimate_event(&uniform(2), 3, &EventSpec::hit_by_deadline(0.5, 32), &p)
            .unwrap();
        let reach2 = estimate_event(
            &uniform(2),
            3,
            &EventSpec::reach_before_backtracking(0.5, 32),
            &p,
        )
        .unwrap();
        assert_eq!(hit.successes, hit2.successes);
        assert_eq!(reach.successes, reach2.successes);
        assert!(hit.successes >= reach.successes);
    }

    #[test]
    fn csv_row_shape() {
        let spec = EventSpec::final_at_least(0.5, 8);
        let r = estimate_event(&uniform(1), 1, &spec, &EstimateParams::new(100, 3)).unwrap();
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), EstimateReport::csv_header().split(',').count());
        assert!(row.starts_with("final_at_least,0.5,8,,100,"));
    }
}
