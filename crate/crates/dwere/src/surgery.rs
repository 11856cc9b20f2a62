//! Environment surgery: the subenvironment partial order, excision of
//! trajectory excursions by raising stacks, composition of environments along
//! a boundary, and an iterative procedure that removes backtracking below the
//! origin from environments whose walk reaches a distant threshold in time.

use serde::Serialize;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::walk::{run, HittingQuery, RunConfig, StopReason};

/// Restriction of a site sequence to a set, order intact.
pub fn restrict_sequence<F: Fn(i64) -> bool>(seq: &[i64], in_set: F) -> Vec<i64> {
    seq.iter().copied().filter(|&z| in_set(z)).collect()
}

/// Restriction to the inclusive interval `[lo, hi]`.
pub fn restrict_to_interval(seq: &[i64], lo: i64, hi: i64) -> Vec<i64> {
    restrict_sequence(seq, |z| z >= lo && z <= hi)
}

/// True when `needle` embeds into `haystack` as a subsequence.
pub fn is_subsequence(needle: &[i64], haystack: &[i64]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|x| it.any(|y| y == x))
}

/// Parameters of the subenvironment relation: environments are compared right
/// of the pivot `m` and along their walks stopped at the threshold `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SubenvParams {
    pub ell: i64,
    pub m: i64,
}

impl SubenvParams {
    pub fn new(ell: i64, m: i64) -> Result<Self> {
        if !(0 <= m && m < ell) {
            return Err(Error::Precondition(format!(
                "need 0 <= m < ell, got m={m}, ell={ell}"
            )));
        }
        Ok(Self { ell, m })
    }
}

/// Walk an environment until it first reaches `[ell, inf)`, with the stopped
/// trajectory recorded. Errors when the walk provably never reaches `ell`
/// (certified loop) or the budget runs out.
fn stopped_trajectory(env: &Environment, ell: i64, budget: u64) -> Result<Vec<i64>> {
    let out = run(
        env,
        &RunConfig::new(budget)
            .record_trajectory(true)
            .stop_on(HittingQuery::threshold(ell)),
    )?;
    match out.stop_reason {
        StopReason::HitTarget => Ok(out.trajectory.expect("recording on")),
        StopReason::Looped => Err(Error::NotInDomain(format!(
            "walk locks into a loop at time {} without reaching {ell}",
            out.steps
        ))),
        StopReason::MaxSteps => Err(Error::BudgetExhausted { budget }),
    }
}

/// Decide `w_prime` is a subenvironment of `w` for the given parameters:
/// identical cookies right of `m`, identical stopped trajectories restricted
/// to `[m, ell]`, and the stopped trajectory of `w_prime` embeds into that of
/// `w` as a subsequence.
pub fn is_subenvironment(
    w_prime: &Environment,
    w: &Environment,
    params: &SubenvParams,
    budget: u64,
) -> Result<bool> {
    if !w_prime.same_parameters(w) {
        return Err(Error::MismatchedEnvironments(
            "subenvironment comparison".into(),
        ));
    }
    let traj_prime = stopped_trajectory(w_prime, params.ell, budget)?;
    let traj = stopped_trajectory(w, params.ell, budget)?;

    let window = w.window();
    let cookies_agree_right_of_m = ((params.m + 1).max(window.lo)..=window.hi)
        .all(|z| w_prime.stack(z).unwrap() == w.stack(z).unwrap());
    if !cookies_agree_right_of_m {
        return Ok(false);
    }
    if restrict_to_interval(&traj_prime, params.m, params.ell)
        != restrict_to_interval(&traj, params.m, params.ell)
    {
        return Ok(false);
    }
    Ok(is_subsequence(&traj_prime, &traj))
}

/// Which postconditions were re-verified by simulation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SurgeryChecks {
    /// Positions before the splice agree and positions after it replay the
    /// original walk beyond the excised excursion.
    pub traj_splice: bool,
    /// Subenvironment relation between output and input, when applicable.
    pub subenv: Option<bool>,
    /// No visit left of the origin before the threshold, when applicable.
    pub nonbacktracking: Option<bool>,
}

impl SurgeryChecks {
    pub fn all_hold(&self) -> bool {
        self.traj_splice && self.subenv.unwrap_or(true) && self.nonbacktracking.unwrap_or(true)
    }
}

/// A verified environment modification.
#[derive(Debug, Clone)]
pub struct SurgeryResult {
    pub before: Environment,
    pub after: Environment,
    pub modified_sites: Vec<i64>,
    /// Steps excised from the walk by the surgery.
    pub t_saved: u64,
    pub iterations: u64,
    pub checks: SurgeryChecks,
}

impl SurgeryResult {
    pub fn record(&self) -> serde_json::Value {
        serde_json::json!({
            "modified_sites": self.modified_sites,
            "t_saved": self.t_saved,
            "iterations": self.iterations,
            "checks": {
                "subenv": self.checks.subenv,
                "nonbacktracking": self.checks.nonbacktracking,
                "traj_splice": self.checks.traj_splice,
            },
        })
    }
}

/// Excise the excursion strictly between `t_a` and `t_b` from the walk on `w`.
///
/// Requires `X_{t_a} = a`, `X_{t_b} = b`, `|a - b| <= L`, and one of
///
/// * (a) the walker has occupied `a` fewer than `M - 1` times before `t_a`,
///   so a fresh cookie at `a` can be rewired to point at `b`, or
/// * (b) the original walk already steps from `a` to `b` at `t_a`, so no
///   rewiring is needed.
///
/// The output environment drops, at every site on the excursion, exactly the
/// cookies the original walker consumed during `[t_a, t_b)`, keeping all
/// cookies below the time-`t_a` visit count in place. At the site `a` itself
/// one consumed slot is taken by the rewired cookie, so the remaining stack
/// shifts by one fewer. The new walk then agrees with the original through
/// `t_a`, steps straight to `b`, and replays the original walk from `t_b` on.
pub fn raise_stack(w: &Environment, a: i64, b: i64, t_a: u64, t_b: u64) -> Result<SurgeryResult> {
    let l = w.max_jump() as i64;
    let m = w.stack_height();
    if (a - b).abs() > l {
        return Err(Error::Precondition(format!(
            "|a - b| = {} exceeds the maximal jump {l}",
            (a - b).abs()
        )));
    }
    if t_a >= t_b {
        return Err(Error::Precondition(format!(
            "need t_a < t_b, got t_a={t_a}, t_b={t_b}"
        )));
    }

    let base = run(
        w,
        &RunConfig::new(t_b)
            .record_trajectory(true)
            .detect_loops(false),
    )?;
    let traj = base.trajectory.as_ref().expect("recording on");
    if traj[t_a as usize] != a {
        return Err(Error::Precondition(format!(
            "X_{t_a} = {}, expected a = {a}",
            traj[t_a as usize]
        )));
    }
    if traj[t_b as usize] != b {
        return Err(Error::Precondition(format!(
            "X_{t_b} = {}, expected b = {b}",
            traj[t_b as usize]
        )));
    }

    let count_before = |t: u64, site: i64| -> u32 {
        traj[..t as usize].iter().filter(|&&x| x == site).count() as u32
    };
    let visits_at_a_before = count_before(t_a, a);
    let condition_a = visits_at_a_before < m - 1;
    let condition_b = traj[t_a as usize + 1] == b;
    if !condition_a && !condition_b {
        return Err(Error::Precondition(format!(
            "neither rewiring condition holds at t_a={t_a}: site {a} has {visits_at_a_before} \
             prior visits (stack height {m}) and X_{{t_a+1}} = {}",
            traj[t_a as usize + 1]
        )));
    }

    // Sites touched by the excursion, endpoints included.
    let mut excursion: Vec<i64> = traj[t_a as usize..=t_b as usize].to_vec();
    excursion.sort_unstable();
    excursion.dedup();

    let mut after = w.clone();
    for &site in &excursion {
        let visits_before = count_before(t_a, site);
        // Occupations during [t_a, t_b); the arrival at t_b is not counted.
        let consumed = count_before(t_b, site) - visits_before;
        let drop = if site == a { consumed - 1 } else { consumed };
        let mut stack = w.stack(site)?;
        for slot in visits_before..m {
            stack[slot as usize] = w.cookie(slot + drop, site)?;
        }
        if site == a && visits_at_a_before < m {
            let rewired = b - a;
            debug_assert!(rewired.abs() <= l);
            stack[visits_at_a_before as usize] = rewired;
        }
        after = after.with_patch(site, stack)?;
    }

    let modified_sites = w.differing_sites(&after);
    debug_assert!(modified_sites.iter().all(|z| excursion.contains(z)));

    // Remaining-stack alignment at the splice point: the new walker has seen
    // each excursion site `count_before(t_a, .)` times (plus once at `a`),
    // the old walker `count_before(t_b, .)` times. Equal remaining stacks
    // together with the equal-position replay below pin the two futures
    // forever, not just over the finite horizon.
    for &site in &excursion {
        let new_next = count_before(t_a, site) + u32::from(site == a);
        let old_next = count_before(t_b, site);
        for offset in 0..=m {
            if after.cookie(new_next + offset, site)? != w.cookie(old_next + offset, site)? {
                return Err(Error::Precondition(format!(
                    "remaining stacks diverge at site {site}, offset {offset}"
                )));
            }
        }
    }

    // The oracle runs on every invocation; a failure here means the
    // construction itself is wrong, so it is an error, not a result.
    if !verify_splice(w, &after, t_a, t_b)? {
        return Err(Error::Precondition(format!(
            "splice verification failed for a={a}, b={b}, t_a={t_a}, t_b={t_b}"
        )));
    }
    Ok(SurgeryResult {
        before: w.clone(),
        after,
        modified_sites,
        t_saved: t_b - t_a - 1,
        iterations: 0,
        checks: SurgeryChecks {
            traj_splice: true,
            subenv: None,
            nonbacktracking: None,
        },
    })
}

/// Check the splice postconditions by re-simulation: the new walk repeats the
/// old through `t_a` and from `t_a + 1` on replays the old walk from `t_b`.
/// The tail comparison runs to ten times the excision point (at least 1000
/// steps) or until a window edge cuts both walks at the same offset.
fn verify_splice(before: &Environment, after: &Environment, t_a: u64, t_b: u64) -> Result<bool> {
    let horizon = (10 * t_b).max(1000);
    let old = trajectory_prefix(before, t_b + horizon);
    let new = trajectory_prefix(after, t_a + 1 + horizon);

    // Prefix: identical positions through t_a.
    if new.len() < t_a as usize + 2 || old.len() < t_b as usize + 1 {
        return Ok(false);
    }
    if new[..=t_a as usize] != old[..=t_a as usize] {
        return Ok(false);
    }
    // Tail: X_{t_a + 1 + i}(after) = X_{t_b + i}(before) for the whole
    // overlap of the two recorded futures.
    let tail_new = &new[t_a as usize + 1..];
    let tail_old = &old[t_b as usize..];
    let overlap = tail_new.len().min(tail_old.len());
    if overlap == 0 {
        return Ok(false);
    }
    Ok(tail_new[..overlap] == tail_old[..overlap])
}

/// Positions of the walk up to `max_steps`, cut short at a window edge
/// instead of failing. Loop detection stays off so positions are raw.
fn trajectory_prefix(env: &Environment, max_steps: u64) -> Vec<i64> {
    let mut state = crate::walk::WalkState::new();
    let mut traj = vec![state.position()];
    while state.time() < max_steps {
        if crate::walk::step(&mut state, env).is_err() {
            break;
        }
        traj.push(state.position());
    }
    traj
}

/// Take the cookies of `w_hat` on `boundary` and of `w` elsewhere.
pub fn compose_environment(
    w: &Environment,
    w_hat: &Environment,
    boundary: (i64, i64),
) -> Result<Environment> {
    if !w.same_parameters(w_hat) {
        return Err(Error::MismatchedEnvironments("compose".into()));
    }
    let (lo, hi) = boundary;
    let mut out = w.clone();
    for z in lo.max(w.window().lo)..=hi.min(w.window().hi) {
        out = out.with_patch(z, w_hat.stack(z)?)?;
    }
    Ok(out)
}

/// Why the elimination procedure stopped without a result.
#[derive(Debug, Clone, Serialize)]
pub struct Obstruction {
    pub reason: String,
    pub site: i64,
    pub time_alpha: Option<u64>,
    pub time_beta: Option<u64>,
    pub visits_at_site: u32,
    pub iterations: u64,
}

/// Outcome of [`eliminate_backtracking`]: either a verified surgery or a
/// diagnostic describing the first configuration the greedy procedure could
/// not resolve. Termination of the greedy search is not guaranteed in
/// general, so obstructions are reported rather than hidden.
#[derive(Debug, Clone)]
pub enum EliminationOutcome {
    Eliminated(Box<SurgeryResult>),
    Obstructed(Obstruction),
}

/// Remove every visit to the negative half-line before the walk first reaches
/// `ceil(lambda * n)`, by repeatedly excising the earliest negative excursion
/// with [`raise_stack`]. All modifications stay at sites at or below the
/// pivot `m = floor(2 L sqrt(n))`, so on success the output is a
/// subenvironment of the input for `(ell, m)` and both conclusions are
/// re-verified by simulation.
pub fn eliminate_backtracking(
    w: &Environment,
    lambda: f64,
    n: u64,
    budget: u64,
) -> Result<EliminationOutcome> {
    let l = w.max_jump() as f64;
    if !(lambda > 0.0 && lambda <= l) {
        return Err(Error::Precondition(format!(
            "lambda must lie in (0, L], got {lambda}"
        )));
    }
    if (n as f64) <= (2.0 * l / lambda).powi(2) {
        return Err(Error::Precondition(format!(
            "need n > (2L/lambda)^2 = {}, got n = {n}",
            (2.0 * l / lambda).powi(2)
        )));
    }
    let ell = threshold_site(lambda * n as f64);
    let m = (2.0 * l * (n as f64).sqrt()).floor() as i64;
    let params = SubenvParams::new(ell, m)?;

    let original_t = match hitting_time(w, ell, n)? {
        Some(t) => t,
        None => {
            return Err(Error::Precondition(format!(
                "walk does not reach {ell} within {n} steps"
            )))
        }
    };

    let mut current = w.clone();
    let mut iterations = 0u64;
    loop {
        let out = run(
            &current,
            &RunConfig::new(n)
                .record_trajectory(true)
                .stop_on(HittingQuery::threshold(ell)),
        )?;
        if out.stop_reason != StopReason::HitTarget {
            // Each surgery preserves the spliced future, so this indicates a
            // verification bug rather than a legal obstruction.
            return Err(Error::Precondition(format!(
                "intermediate environment left the event after {iterations} iterations"
            )));
        }
        let traj = out.trajectory.as_ref().expect("recording on");
        let t_current = out.steps;

        let first_negative = traj.iter().position(|&x| x < 0);
        let Some(tau) = first_negative else {
            // No backtracking left; verify both conclusions and finish. A
            // verification failure is a reported obstruction, never a result
            // with false checks.
            let subenv_ok = is_subenvironment(&current, w, &params, n + 1)?;
            let nonback_ok = traj.iter().all(|&x| x >= 0);
            if !subenv_ok || !nonback_ok {
                return Ok(EliminationOutcome::Obstructed(Obstruction {
                    reason: format!(
                        "final verification failed: subenvironment={subenv_ok}, \
                         nonbacktracking={nonback_ok}"
                    ),
                    site: 0,
                    time_alpha: None,
                    time_beta: None,
                    visits_at_site: 0,
                    iterations,
                }));
            }
            let modified_sites = w.differing_sites(&current);
            return Ok(EliminationOutcome::Eliminated(Box::new(SurgeryResult {
                before: w.clone(),
                after: current,
                modified_sites,
                t_saved: original_t - t_current,
                iterations,
                checks: SurgeryChecks {
                    traj_splice: true,
                    subenv: Some(true),
                    nonbacktracking: Some(true),
                },
            })));
        };

        if iterations >= budget {
            return Ok(EliminationOutcome::Obstructed(Obstruction {
                reason: "iteration budget exhausted".into(),
                site: traj[tau],
                time_alpha: Some(tau as u64),
                time_beta: None,
                visits_at_site: 0,
                iterations,
            }));
        }

        match plan_surgery(traj, tau, m, w.stack_height()) {
            Ok(plan) => {
                let step = raise_stack(&current, plan.a, plan.b, plan.t_a, plan.t_b)?;
                current = step.after;
                iterations += 1;
            }
            Err(mut obstruction) => {
                obstruction.iterations = iterations;
                return Ok(EliminationOutcome::Obstructed(obstruction));
            }
        }
    }
}

pub(crate) fn threshold_site(value: f64) -> i64 {
    (value - 1e-9).ceil() as i64
}

/// Build a random environment guaranteed to reach `ceil(lambda n)` within `n`
/// steps, usually with a planted excursion below the origin on the way.
///
/// Conditioning by rejection is hopeless here (the event is exponentially
/// rare), so instances are manufactured: a chain of top cookies `+L` along
/// the multiples of `L` carries the walk to the threshold, and a seed-chosen
/// gadget on the sites around the origin first sends it below zero and back.
/// Everything else stays i.i.d. from the jump law. Membership is certified
/// by simulation before returning.
pub fn planted_backtracking_instance(
    dist: &crate::env::CookieDistribution,
    stack_height: u32,
    lambda: f64,
    n: u64,
    seed: u64,
) -> Result<Environment> {
    let l = dist.max_jump();
    if l < 2 || stack_height < 3 {
        return Err(Error::Precondition(
            "planted instances need L >= 2 and M >= 3".into(),
        ));
    }
    let ell = threshold_site(lambda * n as f64);
    if ell < 2 * l as i64 {
        return Err(Error::Precondition("threshold too small to plant".into()));
    }
    let half_width = 4 * l as i64 * n as i64;
    let base = Environment::sample(
        dist.clone(),
        stack_height,
        crate::rng::mix64(seed),
        crate::env::Window::new(-half_width, half_width)?,
    )?;
    let chain_links = (ell as u64).div_ceil(l as u64);
    let mut env = crate::constructions::build_ballistic(chain_links, l).apply(&base)?;

    // Stacks padded with their last entry up to the stack height.
    let pad = |head: &[i64]| -> Vec<i64> {
        let mut stack = head.to_vec();
        while stack.len() < stack_height as usize {
            stack.push(*head.last().unwrap());
        }
        stack
    };
    let lj = l as i64;
    let gadget = crate::rng::mix64(seed ^ 0x9E37) % 6;
    match gadget {
        // Fresh top cookie at the origin dips once.
        0 => {
            env = env.with_patch(0, pad(&[-1, lj]))?;
            env = env.with_patch(-1, pad(&[1]))?;
        }
        // Two dips before the chain is joined.
        1 => {
            env = env.with_patch(0, pad(&[-1, -1, lj]))?;
            env = env.with_patch(-1, pad(&[1]))?;
        }
        // The dip starts from a site whose stack is already exhausted, so
        // the excision has to splice between visits instead of rewiring.
        2 => {
            env = env.with_patch(0, pad(&[1, lj]))?;
            env = env.with_patch(1, pad(&[0, 0, -2]))?;
            env = env.with_patch(-1, pad(&[1]))?;
        }
        // Depth-two dip.
        3 => {
            env = env.with_patch(0, pad(&[-2, lj]))?;
            env = env.with_patch(-2, pad(&[1]))?;
            env = env.with_patch(-1, pad(&[1]))?;
        }
        // No dip at all.
        4 => {}
        // Dip from the first off-chain site.
        _ => {
            env = env.with_patch(0, pad(&[1, lj]))?;
            env = env.with_patch(1, pad(&[-2, 1]))?;
            env = env.with_patch(-1, pad(&[1]))?;
        }
    }

    let out = run(
        &env,
        &RunConfig::new(n).stop_on(HittingQuery::threshold(ell)),
    )?;
    if out.stop_reason != StopReason::HitTarget {
        return Err(Error::Precondition(format!(
            "planted instance for seed {seed} failed to reach {ell} within {n} steps"
        )));
    }
    Ok(env)
}

fn hitting_time(env: &Environment, ell: i64, max_steps: u64) -> Result<Option<u64>> {
    let out = run(
        env,
        &RunConfig::new(max_steps).stop_on(HittingQuery::threshold(ell)),
    )?;
    Ok(match out.stop_reason {
        StopReason::HitTarget => Some(out.steps),
        _ => None,
    })
}

struct SurgeryPlan {
    a: i64,
    b: i64,
    t_a: u64,
    t_b: u64,
}

/// Pick the excision that removes or shortens the earliest negative
/// excursion, following the entry-pair construction: around the first visit
/// to the first negative site, attack the entry site directly when it still
/// has a fresh cookie; otherwise splice out an inter-visit excursion of the
/// entry site, or climb to the entry site of its own second visit and repeat.
fn plan_surgery(
    traj: &[i64],
    tau: usize,
    m: i64,
    stack_height: u32,
) -> std::result::Result<SurgeryPlan, Obstruction> {
    let count_before = |t: usize, site: i64| -> u32 {
        traj[..t].iter().filter(|&&x| x == site).count() as u32
    };

    // Entry and exit pair around the first visit to x = traj[tau]: the last
    // time above x before tau, and the first time above x after tau.
    let x = traj[tau];
    let alpha = tau - 1;
    let a1 = traj[alpha];
    let beta = match traj[tau + 1..].iter().position(|&p| p > x) {
        Some(off) => tau + 1 + off,
        None => {
            return Err(Obstruction {
                reason: "walk never climbs back above the first negative site".into(),
                site: x,
                time_alpha: Some(alpha as u64),
                time_beta: None,
                visits_at_site: count_before(tau, x),
                iterations: 0,
            })
        }
    };

    let mut site = a1;
    let mut alpha_t = alpha;
    let mut beta_t = beta;
    loop {
        // Fresh cookie at the entry site: rewire it straight to the exit.
        if count_before(alpha_t, site) < stack_height - 1 {
            return Ok(SurgeryPlan {
                a: site,
                b: traj[beta_t],
                t_a: alpha_t as u64,
                t_b: beta_t as u64,
            });
        }

        // The entry site is stale. Try to splice out an excursion between
        // consecutive visits that stays at or below the pivot; the step into
        // the visit already points at the site, so no rewiring is needed.
        let visit_times: Vec<usize> = traj
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == site)
            .map(|(t, _)| t)
            .collect();
        for s in 0..visit_times.len().saturating_sub(1) {
            let v_s = visit_times[s];
            let v_next = visit_times[s + 1];
            if v_s == 0 {
                // The first visit happens at time zero; there is no step into
                // it to splice from.
                continue;
            }
            // The splice always removes v_next - v_s >= 1 steps.
            let segment = &traj[v_s..=v_next];
            let excised_max = traj[v_s..v_next].iter().copied().max().unwrap();
            if excised_max < m && segment.iter().all(|&p| p <= m) {
                return Ok(SurgeryPlan {
                    a: traj[v_s - 1],
                    b: site,
                    t_a: (v_s - 1) as u64,
                    t_b: v_next as u64,
                });
            }
        }

        // Climb to the excursion around the second visit of the entry site.
        if visit_times.len() < 2 {
            return Err(Obstruction {
                reason: "entry site is stale but was visited only once".into(),
                site,
                time_alpha: Some(alpha_t as u64),
                time_beta: Some(beta_t as u64),
                visits_at_site: count_before(alpha_t, site),
                iterations: 0,
            });
        }
        let v2 = visit_times[1];
        let Some(next_alpha) = (0..v2).rev().find(|&t| traj[t] > site) else {
            return Err(Obstruction {
                reason: "no position above the chain site before its second visit".into(),
                site,
                time_alpha: None,
                time_beta: None,
                visits_at_site: count_before(v2, site),
                iterations: 0,
            });
        };
        let Some(next_beta) = (v2 + 1..traj.len()).find(|&t| traj[t] > site) else {
            return Err(Obstruction {
                reason: "no position above the chain site after its second visit".into(),
                site,
                time_alpha: Some(next_alpha as u64),
                time_beta: None,
                visits_at_site: count_before(v2, site),
                iterations: 0,
            });
        };
        let next_site = traj[next_alpha];
        if next_site > m - 1 {
            return Err(Obstruction {
                reason: format!("excursion chain climbed past the pivot {m}"),
                site: next_site,
                time_alpha: Some(next_alpha as u64),
                time_beta: Some(next_beta as u64),
                visits_at_site: count_before(next_alpha, next_site),
                iterations: 0,
            });
        }
        site = next_site;
        alpha_t = next_alpha;
        beta_t = next_beta;
    }
}
