//! Explicit cookie configurations with provable walk behavior: an environment
//! that revisits the origin an exact number of times, trapping intervals,
//! zero-cookie blockers, and ballistic highways. Each construction is a
//! [`PatchSet`] pinning specific cookies; unpinned cookies keep whatever the
//! target environment holds, so the probability of the defining event under
//! the jump law is the product of the pinned masses.

use std::collections::BTreeMap;

use crate::env::{format_site_line, CookieDistribution, Environment};
use crate::error::{Error, Result};

/// A set of pinned cookies: per site, a sparse map from stack index to value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSet {
    entries: BTreeMap<i64, BTreeMap<u32, i64>>,
    provenance: String,
}

impl PatchSet {
    pub fn new(provenance: impl Into<String>) -> Self {
        Self {
            entries: BTreeMap::new(),
            provenance: provenance.into(),
        }
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> + '_ {
        self.entries.keys().copied()
    }

    pub fn entries(&self) -> &BTreeMap<i64, BTreeMap<u32, i64>> {
        &self.entries
    }

    fn pin(&mut self, site: i64, index: u32, value: i64) {
        self.entries.entry(site).or_default().insert(index, value);
    }

    /// Number of pinned cookies.
    pub fn pinned_count(&self) -> u64 {
        self.entries.values().map(|s| s.len() as u64).sum()
    }

    /// Exact probability that an i.i.d. draw from `dist` realizes every
    /// pinned cookie.
    pub fn event_probability(&self, dist: &CookieDistribution) -> f64 {
        self.entries
            .values()
            .flat_map(|s| s.values())
            .map(|&v| dist.prob(v))
            .product()
    }

    /// `mu_min` to the number of pinned cookies, the generic lower bound.
    pub fn probability_lower_bound(&self, dist: &CookieDistribution) -> f64 {
        dist.mu_min().powi(self.pinned_count() as i32)
    }

    /// Overlay the pinned cookies onto an environment. Unpinned stack indices
    /// of a patched site keep the environment's values.
    pub fn apply(&self, env: &Environment) -> Result<Environment> {
        let mut out = env.clone();
        for (&site, overrides) in &self.entries {
            let mut stack = out.stack(site)?;
            for (&index, &value) in overrides {
                if index as usize >= stack.len() {
                    return Err(Error::Precondition(format!(
                        "patch index {index} at site {site} exceeds stack height {}",
                        stack.len()
                    )));
                }
                stack[index as usize] = value;
            }
            out = out.with_patch(site, stack)?;
        }
        Ok(out)
    }

    /// Environment text format restricted to the patched sites, with the
    /// provenance label on a comment line. Needs the target environment to
    /// fill unpinned indices.
    pub fn to_text(&self, env: &Environment) -> Result<String> {
        let applied = self.apply(env)?;
        let mut out = format!(
            "DWERE L={} M={} seed={} window={}:{}\n# {}\n",
            env.max_jump(),
            env.stack_height(),
            env.master_seed(),
            env.window().lo,
            env.window().hi,
            self.provenance
        );
        for site in self.sites() {
            out.push_str(&format_site_line(site, &applied.stack(site)?));
        }
        Ok(out)
    }
}

/// Hand-built demonstration environment on four patched sites. Its first ten
/// steps are [`EXAMPLE_TRAJECTORY`]: the walk dips left, returns, and the
/// clamped second cookies steer every later revisit of the origin.
pub fn example_environment() -> Result<Environment> {
    let env = Environment::sample(
        CookieDistribution::uniform(3),
        2,
        0,
        crate::env::Window::new(-60, 60)?,
    )?;
    let env = env.with_patch(0, vec![-3, 2])?;
    let env = env.with_patch(-3, vec![3, 3])?;
    let env = env.with_patch(2, vec![-2, 1])?;
    env.with_patch(3, vec![-3, 2])
}

/// The first ten steps of the walk on [`example_environment`].
pub const EXAMPLE_TRAJECTORY: [i64; 11] = [0, -3, 0, 2, 0, 2, 3, 0, 2, 3, 5];

/// The two jump tables of the exact-returns construction plus their cookie
/// realization: index 0 holds `g` (first visit), all higher indices hold `f`.
#[derive(Debug, Clone)]
pub struct KReturns {
    pub f: BTreeMap<i64, i64>,
    pub g: BTreeMap<i64, i64>,
    pub patch: PatchSet,
}

/// Times at which the induced walk occupies the origin: `2 i (i + 1)` for
/// `i < k`.
pub fn k_returns_zero_times(k: u64) -> Vec<u64> {
    (0..k).map(|i| 2 * i * (i + 1)).collect()
}

/// Build jump tables `f, g` on `[-2k, 2k-1]` whose induced walk occupies the
/// origin exactly `k` times, stays inside `[-2k, 2k-1]`, and then locks into a
/// two-cycle. Jumps lie in `{-2, -1, 1, 2}`, so the patch needs an
/// environment with `L >= 2`; stacks need `M >= 2` to separate first visits
/// from revisits.
///
/// For `k = 1` the general table would close a two-cycle through the origin
/// itself, which revisits it forever; that case uses a dedicated table with
/// the same negative-side rules and a first jump that dives left.
pub fn build_k_returns(k: u64, stack_height: u32) -> Result<KReturns> {
    if k < 1 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    if stack_height < 2 {
        return Err(Error::Precondition(
            "the exact-returns patch needs M >= 2".into(),
        ));
    }
    let mut f = BTreeMap::new();
    let mut g = BTreeMap::new();
    let lo = -2 * k as i64;
    let hi = 2 * k as i64 - 1;
    for z in lo..0 {
        if z.rem_euclid(2) == 1 {
            f.insert(z, 2);
            g.insert(z, 2);
        } else {
            f.insert(z, -2);
            g.insert(z, 1);
        }
    }
    if k == 1 {
        f.insert(0, -2);
        g.insert(0, -2);
        f.insert(1, -2);
        g.insert(1, -2);
    } else {
        for i in 0..=(2 * k as i64 - 3) {
            g.insert(i, if i % 2 == 0 { -2 } else { -1 });
            f.insert(i, if i % 2 == 0 { -2 } else { 2 });
        }
        f.insert(hi, -1);
        g.insert(hi, -1);
        f.insert(hi - 1, 1);
        g.insert(hi - 1, 1);
    }
    let mut patch = PatchSet::new(format!("k-returns k={k} M={stack_height}"));
    for z in lo..=hi {
        patch.pin(z, 0, g[&z]);
        for j in 1..stack_height {
            patch.pin(z, j, f[&z]);
        }
    }
    Ok(KReturns { f, g, patch })
}

/// Trapping interval `[start, start + L - 1]`: every cookie at `start` points
/// one step right, every cookie at `start + 1` one step left, and the top
/// cookie at `start + x` points `x` steps left for the remaining sites. Any
/// walker entering the interval ends in the two-cycle on its first two sites.
/// Pins `2M + L - 2` cookies.
pub fn build_trap(interval_start: i64, max_jump: u32, stack_height: u32) -> Result<PatchSet> {
    if max_jump < 2 {
        return Err(Error::Precondition(
            "a trapping interval needs L >= 2".into(),
        ));
    }
    let mut patch = PatchSet::new(format!(
        "trap start={interval_start} L={max_jump} M={stack_height}"
    ));
    for j in 0..stack_height {
        patch.pin(interval_start, j, 1);
        patch.pin(interval_start + 1, j, -1);
    }
    for x in 2..max_jump as i64 {
        patch.pin(interval_start + x, 0, -x);
    }
    Ok(patch)
}

/// All-zero stack at one site: an absorbing fixed point. Pins `M` cookies.
pub fn build_blocker(site: i64, stack_height: u32) -> PatchSet {
    let mut patch = PatchSet::new(format!("blocker site={site} M={stack_height}"));
    for j in 0..stack_height {
        patch.pin(site, j, 0);
    }
    patch
}

/// Top cookie `+L` at each of `0, L, 2L, ..., nL`. A walker from the origin
/// rides the chain and stands at `(n+1)L` after `n + 1` steps regardless of
/// every other cookie. Pins `n + 1` cookies.
pub fn build_ballistic(n: u64, max_jump: u32) -> PatchSet {
    let mut patch = PatchSet::new(format!("ballistic n={n} L={max_jump}"));
    for i in 0..=n as i64 {
        patch.pin(i * max_jump as i64, 0, max_jump as i64);
    }
    patch
}
