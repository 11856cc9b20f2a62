//! Cross-module invariants that need more machinery than unit tests carry.

use dwere::constructions::build_ballistic;
use dwere::env::{CookieDistribution, Environment, Window};
use dwere::estimate::{
    estimate_events_coupled, estimate_return_distribution, EstimateParams, EventSpec,
};
use dwere::surgery::{
    compose_environment, eliminate_backtracking, is_subenvironment, raise_stack,
    EliminationOutcome, SubenvParams,
};
use dwere::walk::{run, HittingQuery, RunConfig, StopReason};

fn uniform(l: u32) -> CookieDistribution {
    CookieDistribution::uniform(l)
}

/// Walks are almost surely bounded, so against any divergent normalizer the
/// mean displacement ratio has to fall toward zero.
#[test]
fn mean_displacement_over_log_n_decreases() {
    let trials = 20_000u64;
    let window = Window::new(-2_100_000, 2_100_000).unwrap();
    let mut ratios = Vec::new();
    for &n in &[16u64, 64, 256, 1024] {
        let mut total = 0.0;
        for i in 0..trials {
            let seed = dwere::rng::trial_seed(0xAB, i);
            let env = Environment::sample(uniform(2), 2, seed, window).unwrap();
            let out = run(&env, &RunConfig::new(n)).unwrap();
            let x_n = out.position_at(n).expect("loop or horizon");
            total += x_n.abs() as f64;
        }
        ratios.push(total / trials as f64 / (n as f64).ln());
    }
    for pair in ratios.windows(2) {
        assert!(
            pair[1] < pair[0],
            "mean |X_n|/ln n not decreasing: {ratios:?}"
        );
    }
    assert!(ratios.last().unwrap() < &1.0, "ratios: {ratios:?}");
}

/// The subenvironment relation is reflexive, and chains produced by two
/// successive excisions witness transitivity.
#[test]
fn subenvironment_chain_is_ordered() {
    let (ell, pivot) = (100i64, 40i64);
    let params = SubenvParams::new(ell, pivot).unwrap();
    let base = Environment::sample(uniform(2), 3, 0xEE, Window::new(-3000, 3000).unwrap())
        .unwrap();
    let w0 = build_ballistic(50, 2)
        .apply(&base)
        .unwrap()
        .with_patch(0, vec![-1, -1, 2])
        .unwrap()
        .with_patch(-1, vec![1, 1, 1])
        .unwrap();

    // Two dips: 0, -1, 0, -1, 0, 2, 4, ...
    let w1 = raise_stack(&w0, 0, 0, 0, 2).unwrap().after;
    let w2 = raise_stack(&w1, 0, 0, 1, 3).unwrap().after;

    for w in [&w0, &w1, &w2] {
        assert!(is_subenvironment(w, w, &params, 1000).unwrap(), "reflexivity");
    }
    assert!(is_subenvironment(&w1, &w0, &params, 1000).unwrap());
    assert!(is_subenvironment(&w2, &w1, &params, 1000).unwrap());
    assert!(is_subenvironment(&w2, &w0, &params, 1000).unwrap(), "transitivity");

    let out = run(
        &w2,
        &RunConfig::new(100).stop_on(HittingQuery::threshold(ell)),
    )
    .unwrap();
    assert_eq!(out.stop_reason, StopReason::HitTarget);
    assert!(out.min_position >= 0);
}

/// Composing the eliminated environment over `[0, pivot]` with the original
/// left side lands in the no-backtracking event: the composed walk reaches
/// the threshold in time without going negative.
#[test]
fn composition_lands_in_the_reach_event() {
    let d = uniform(2);
    let (lambda, n) = (1.0, 400u64);
    let ell = 400i64;
    let pivot = 80i64;
    let mut verified = 0;
    for i in 0..20u64 {
        let seed = dwere::rng::substream(0xF0, i);
        let w = dwere::surgery::planted_backtracking_instance(&d, 3, lambda, n, seed).unwrap();
        let EliminationOutcome::Eliminated(r) = eliminate_backtracking(&w, lambda, n, 4000).unwrap()
        else {
            continue;
        };
        let composed = compose_environment(&w, &r.after, (0, pivot)).unwrap();
        let out = run(
            &composed,
            &RunConfig::new(n).stop_on(HittingQuery::threshold(ell)),
        )
        .unwrap();
        assert_eq!(out.stop_reason, StopReason::HitTarget, "instance {i}");
        assert!(out.min_position >= 0, "instance {i}");
        verified += 1;
    }
    assert!(verified >= 15, "only {verified}/20 instances verified");
}

/// Coupled reports: on identical trial streams, event inclusion shows up as
/// an exact ordering of success counts, not an approximate one.
#[test]
fn coupled_reports_order_included_events_exactly() {
    let specs = vec![
        EventSpec::reach_before_backtracking(0.25, 48),
        EventSpec::hit_by_deadline(0.25, 48),
        EventSpec::final_at_least(0.25, 48),
    ];
    let reports = estimate_events_coupled(
        &uniform(2),
        2,
        &specs,
        &EstimateParams::new(100_000, 0xF1),
    )
    .unwrap();
    let reach = &reports[0];
    let hit = &reports[1];
    let fin = &reports[2];
    assert!(reach.successes <= hit.successes);
    assert!(fin.successes <= hit.successes);
    assert!(hit.successes > 0);
    // Identical streams replay identically.
    let again = estimate_events_coupled(
        &uniform(2),
        2,
        &specs,
        &EstimateParams::new(100_000, 0xF1),
    )
    .unwrap();
    for (a, b) in reports.iter().zip(&again) {
        assert_eq!(a.successes, b.successes);
    }
}

/// Midpoint concavity of the empirical rate on a real grid: no violation
/// beyond three pooled standard errors at the largest horizon, and the worst
/// excess shrinks (or stays within noise) as the horizon grows.
#[test]
fn concavity_violations_shrink_with_the_horizon() {
    let table = dwere::estimate::estimate_rate_function(
        &uniform(2),
        3,
        &[0.0, 0.5, 1.0],
        &[8, 16],
        &EstimateParams::new(400_000, 0xF3),
    )
    .unwrap();
    let report = dwere::estimate::check_concavity(&table).unwrap();
    assert!(!report.triples.is_empty(), "grid produced no midpoint triples");
    assert_eq!(
        report.violations_at_largest_n, 0,
        "triples: {:?}",
        report.triples
    );
    // Trend across horizons, allowing pooled noise.
    if report.worst_excess_by_n.len() >= 2 {
        let first = report.worst_excess_by_n.first().unwrap();
        let last = report.worst_excess_by_n.last().unwrap();
        let slack = report
            .triples
            .iter()
            .map(|t| 3.0 * t.se)
            .fold(0.0f64, f64::max);
        assert!(
            last.1 <= first.1 + slack,
            "worst excess grew: {:?}",
            report.worst_excess_by_n
        );
    }
}

/// Identical inputs give identical reports under any worker count: counts
/// reduce commutatively and every trial derives its own seed.
#[test]
fn reports_do_not_depend_on_the_pool_size() {
    let spec = EventSpec::hit_by_deadline(0.5, 32);
    let params = EstimateParams::new(50_000, 0xF4);
    let mut results = Vec::new();
    for threads in [1usize, 2, 7] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let r = pool
            .install(|| dwere::estimate::estimate_event(&uniform(2), 3, &spec, &params))
            .unwrap();
        results.push((r.successes, r.indeterminate, r.p_hat.to_bits()));
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[1], results[2]);
}

/// A starved step budget cannot silently bias loop-certified estimates: the
/// indeterminate fraction is reported and flagged once it passes 1%.
#[test]
fn starved_budgets_flag_indeterminates() {
    let r = estimate_return_distribution(
        &uniform(2),
        2,
        3,
        &EstimateParams::new(5_000, 0xF2).with_max_steps(4),
    )
    .unwrap();
    assert!(r.indeterminate > 0);
    assert!(r.flagged_indeterminate);
    // A sane budget drives indeterminates to zero at this scale.
    let ok = estimate_return_distribution(
        &uniform(2),
        2,
        3,
        &EstimateParams::new(5_000, 0xF2).with_max_steps(1_000_000),
    )
    .unwrap();
    assert_eq!(ok.indeterminate, 0);
    assert!(!ok.flagged_indeterminate);
}
