//! Exact event probabilities at tiny scale by enumeration.
//!
//! A walk of `n` steps consumes at most `n` cookies, so the probability of
//! any event of the first `n` positions is a finite sum over the consumed
//! cookies only: branch on each cookie the first time the walk needs it,
//! weight by its mass, and let every never-consumed cookie integrate out.
//! This equals brute-force enumeration of all cookie assignments on the
//! window (the cross-check in the tests does exactly that) while visiting
//! at most `(2L+1)^n` branches.
//!
//! Independent of the sampling path on purpose: it re-implements the walk
//! recursion on a bare map so Monte Carlo results can be checked against it.

use std::collections::HashMap;

use crate::env::{CookieDistribution, Window};
use crate::error::{Error, Result};

/// Exact probability that the first `n_steps` positions of the walk satisfy
/// `event`. The trajectory passed to `event` has `n_steps + 1` entries.
pub fn exact_event_probability(
    dist: &CookieDistribution,
    stack_height: u32,
    window: Window,
    n_steps: u64,
    event: &dyn Fn(&[i64]) -> bool,
) -> Result<f64> {
    let mut walker = Enumerator {
        dist,
        clamp: stack_height - 1,
        window,
        event,
        total: 0.0,
    };
    let mut trajectory = vec![0i64];
    let mut assigned = HashMap::new();
    let mut counts = HashMap::new();
    walker.recurse(
        &mut trajectory,
        &mut counts,
        &mut assigned,
        1.0,
        n_steps as usize,
    )?;
    Ok(walker.total)
}

struct Enumerator<'a> {
    dist: &'a CookieDistribution,
    clamp: u32,
    window: Window,
    event: &'a dyn Fn(&[i64]) -> bool,
    total: f64,
}

impl Enumerator<'_> {
    fn recurse(
        &mut self,
        trajectory: &mut Vec<i64>,
        counts: &mut HashMap<i64, u32>,
        assigned: &mut HashMap<(u32, i64), i64>,
        weight: f64,
        n_steps: usize,
    ) -> Result<()> {
        if trajectory.len() == n_steps + 1 {
            if (self.event)(trajectory) {
                self.total += weight;
            }
            return Ok(());
        }
        let here = *trajectory.last().expect("never empty");
        if !self.window.contains(here) {
            return Err(Error::OutOfWindow {
                site: here,
                lo: self.window.lo,
                hi: self.window.hi,
                time: trajectory.len() as u64 - 1,
            });
        }
        let count = counts.get(&here).copied().unwrap_or(0);
        let index = count.min(self.clamp);
        *counts.entry(here).or_insert(0) += 1;

        if let Some(&value) = assigned.get(&(index, here)) {
            trajectory.push(here + value);
            self.recurse(trajectory, counts, assigned, weight, n_steps)?;
            trajectory.pop();
        } else {
            let l = self.dist.max_jump() as i64;
            for value in -l..=l {
                assigned.insert((index, here), value);
                trajectory.push(here + value);
                self.recurse(
                    trajectory,
                    counts,
                    assigned,
                    weight * self.dist.prob(value),
                    n_steps,
                )?;
                trajectory.pop();
            }
            assigned.remove(&(index, here));
        }
        *counts.get_mut(&here).unwrap() -= 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal brute force: every cookie assignment on the window, simulated
    /// with its exact product weight.
    fn brute_force(
        dist: &CookieDistribution,
        stack_height: u32,
        window: Window,
        n_steps: u64,
        event: &dyn Fn(&[i64]) -> bool,
    ) -> f64 {
        let sites: Vec<i64> = window.iter().collect();
        let slots = sites.len() * stack_height as usize;
        let l = dist.max_jump() as i64;
        let values = 2 * l + 1;
        let mut total = 0.0;
        let mut assignment = vec![0usize; slots];
        loop {
            let mut weight = 1.0;
            for &a in &assignment {
                weight *= dist.prob(a as i64 - l);
            }
            let cookie = |index: u32, site: i64| -> i64 {
                let j = index.min(stack_height - 1) as usize;
                let site_pos = sites.iter().position(|&s| s == site).unwrap();
                assignment[site_pos * stack_height as usize + j] as i64 - l
            };
            let mut traj = vec![0i64];
            let mut counts: HashMap<i64, u32> = HashMap::new();
            for _ in 0..n_steps {
                let here = *traj.last().unwrap();
                let c = counts.entry(here).or_insert(0);
                let jump = cookie(*c, here);
                *c += 1;
                traj.push(here + jump);
            }
            if event(&traj) {
                total += weight;
            }
            // Odometer increment.
            let mut i = 0;
            loop {
                if i == slots {
                    return total;
                }
                assignment[i] += 1;
                if assignment[i] < values as usize {
                    break;
                }
                assignment[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn lazy_enumeration_matches_brute_force_uniform() {
        let dist = CookieDistribution::uniform(1);
        let window = Window::new(-2, 2).unwrap();
        let event = |traj: &[i64]| *traj.last().unwrap() >= 1;
        let exact = exact_event_probability(&dist, 1, window, 2, &event).unwrap();
        let brute = brute_force(&dist, 1, window, 2, &event);
        assert!((exact - brute).abs() < 1e-12, "{exact} vs {brute}");
    }

    #[test]
    fn lazy_enumeration_matches_brute_force_weighted_two_stacks() {
        let dist = CookieDistribution::new(1, vec![0.2, 0.5, 0.3]).unwrap();
        let window = Window::new(-2, 2).unwrap();
        for threshold in [-1i64, 0, 1, 2] {
            let event = move |traj: &[i64]| *traj.last().unwrap() >= threshold;
            let exact = exact_event_probability(&dist, 2, window, 2, &event).unwrap();
            let brute = brute_force(&dist, 2, window, 2, &event);
            assert!(
                (exact - brute).abs() < 1e-12,
                "threshold {threshold}: {exact} vs {brute}"
            );
        }
    }

    #[test]
    fn one_step_distribution_is_the_jump_law() {
        let dist = CookieDistribution::new(2, vec![0.1, 0.2, 0.4, 0.2, 0.1]).unwrap();
        let window = Window::new(-3, 3).unwrap();
        for k in -2i64..=2 {
            let event = move |traj: &[i64]| traj[1] == k;
            let p = exact_event_probability(&dist, 1, window, 1, &event).unwrap();
            assert!((p - dist.prob(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn total_mass_is_one() {
        let dist = CookieDistribution::uniform(2);
        let window = Window::new(-8, 8).unwrap();
        let p = exact_event_probability(&dist, 2, window, 4, &|_| true).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn escaping_the_window_is_an_error() {
        let dist = CookieDistribution::uniform(2);
        let window = Window::new(-2, 2).unwrap();
        let r = exact_event_probability(&dist, 1, window, 3, &|_| true);
        assert!(matches!(r, Err(Error::OutOfWindow { .. })));
    }
}
