//! Cookie environments over a window of the integer line.
//!
//! An environment assigns to every site `z` a stack of `M` jump instructions
//! ("cookies") in `[-L, L]`. The cookie at stack index `j >= M-1` is the index
//! `M-1` cookie, so a stack behaves as if its last entry repeats forever.
//! Values are realized lazily: the cookie at `(j, z)` is a pure function of
//! `(master_seed, min(j, M-1), z)` plus any explicit per-site patch, so two
//! environments with the same seed agree on the intersection of their windows
//! and memory use is proportional to the number of patched sites.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng;

/// Hard cap on window size, so misconfigured experiments fail fast instead of
/// iterating a near-unbounded site range during serialization or comparison.
pub const MAX_WINDOW_SITES: u128 = 1 << 33;

/// The jump law `mu` on `[-L, L]` with strictly positive mass everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CookieDistribution {
    max_jump: u32,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    mu_min: f64,
    mu_max: f64,
}

impl CookieDistribution {
    /// Validate and build a distribution from `2L + 1` weights indexed by the
    /// jump `k` in `[-L, L]`.
    pub fn new(max_jump: u32, weights: Vec<f64>) -> Result<Self> {
        if max_jump == 0 {
            return Err(Error::InvalidDistribution(
                "max jump L must be positive".into(),
            ));
        }
        let expected = 2 * max_jump as usize + 1;
        if weights.len() != expected {
            return Err(Error::InvalidDistribution(format!(
                "expected {expected} weights for L={max_jump}, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "every weight must be strictly positive, found {w}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {sum}, off by more than 1e-12"
            )));
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        // Guard the final bucket against rounding in the partial sums.
        *cumulative.last_mut().expect("nonempty") = 1.0;
        let mu_min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let mu_max = weights.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            max_jump,
            weights,
            cumulative,
            mu_min,
            mu_max,
        })
    }

    /// Uniform law on `[-L, L]`.
    pub fn uniform(max_jump: u32) -> Self {
        let n = 2 * max_jump as usize + 1;
        Self::new(max_jump, vec![1.0 / n as f64; n]).expect("uniform weights are valid")
    }

    pub fn max_jump(&self) -> u32 {
        self.max_jump
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mass of the jump `k`.
    pub fn prob(&self, k: i64) -> f64 {
        let l = self.max_jump as i64;
        if k < -l || k > l {
            0.0
        } else {
            self.weights[(k + l) as usize]
        }
    }

    pub fn mu_min(&self) -> f64 {
        self.mu_min
    }

    pub fn mu_max(&self) -> f64 {
        self.mu_max
    }

    /// Inverse-CDF draw: maps a uniform variate to a jump in `[-L, L]`.
    #[inline]
    pub fn quantile(&self, u: f64) -> i64 {
        let mut idx = 0usize;
        while u >= self.cumulative[idx] {
            idx += 1;
        }
        idx as i64 - self.max_jump as i64
    }
}

/// Inclusive interval of materialized sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidWindow { lo, hi });
        }
        let sites = (hi as i128 - lo as i128 + 1) as u128;
        if sites > MAX_WINDOW_SITES {
            return Err(Error::WindowTooLarge {
                sites,
                cap: MAX_WINDOW_SITES,
            });
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn contains(&self, z: i64) -> bool {
        z >= self.lo && z <= self.hi
    }

    pub fn len(&self) -> u64 {
        (self.hi - self.lo + 1) as u64
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

/// An immutable cookie environment.
///
/// All mutators return a new value; environments are freely shareable across
/// threads. Reads outside the window are a hard error, never a default.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    dist: CookieDistribution,
    stack_height: u32,
    window: Window,
    master_seed: u64,
    patches: BTreeMap<i64, Vec<i64>>,
}

impl Environment {
    /// Draw an i.i.d. environment. The cookie at `(j, z)` depends only on
    /// `(master_seed, j, z)`, never on the window bounds, so enlarging the
    /// window extends the same environment without resampling.
    pub fn sample(
        dist: CookieDistribution,
        stack_height: u32,
        master_seed: u64,
        window: Window,
    ) -> Result<Self> {
        if stack_height == 0 {
            return Err(Error::Precondition("stack height M must be >= 1".into()));
        }
        Ok(Self {
            dist,
            stack_height,
            window,
            master_seed,
            patches: BTreeMap::new(),
        })
    }

    pub fn distribution(&self) -> &CookieDistribution {
        &self.dist
    }

    pub fn max_jump(&self) -> u32 {
        self.dist.max_jump()
    }

    pub fn stack_height(&self) -> u32 {
        self.stack_height
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn patches(&self) -> &BTreeMap<i64, Vec<i64>> {
        &self.patches
    }

    /// The cookie `omega(j, z)`, with stack indices at or above `M-1` clamped
    /// to the index `M-1` entry. Patches take precedence over sampled values.
    #[inline]
    pub fn cookie(&self, stack_index: u32, site: i64) -> Result<i64> {
        if !self.window.contains(site) {
            return Err(Error::OutOfWindow {
                site,
                lo: self.window.lo,
                hi: self.window.hi,
                time: 0,
            });
        }
        Ok(self.cookie_unchecked(stack_index, site))
    }

    /// Same as [`cookie`](Self::cookie) without the window check. The walk
    /// engine validates positions before calling this.
    #[inline]
    pub fn cookie_unchecked(&self, stack_index: u32, site: i64) -> i64 {
        let j = stack_index.min(self.stack_height - 1);
        if let Some(stack) = self.patches.get(&site) {
            return stack[j as usize];
        }
        let u = rng::unit_f64(rng::cookie_word(self.master_seed, j, site));
        self.dist.quantile(u)
    }

    /// The full stored stack of a site (after patches), length `M`.
    pub fn stack(&self, site: i64) -> Result<Vec<i64>> {
        if !self.window.contains(site) {
            return Err(Error::OutOfWindow {
                site,
                lo: self.window.lo,
                hi: self.window.hi,
                time: 0,
            });
        }
        if let Some(stack) = self.patches.get(&site) {
            return Ok(stack.clone());
        }
        Ok((0..self.stack_height)
            .map(|j| self.cookie_unchecked(j, site))
            .collect())
    }

    /// Return a copy with the stack at `site` replaced. Last write wins when a
    /// site is patched twice. The original environment is untouched.
    pub fn with_patch(&self, site: i64, stack: Vec<i64>) -> Result<Self> {
        if !self.window.contains(site) {
            return Err(Error::OutOfWindow {
                site,
                lo: self.window.lo,
                hi: self.window.hi,
                time: 0,
            });
        }
        if stack.len() != self.stack_height as usize {
            return Err(Error::PatchLength {
                got: stack.len(),
                expected: self.stack_height as usize,
            });
        }
        let l = self.max_jump() as i64;
        if let Some(&value) = stack.iter().find(|v| v.abs() > l) {
            return Err(Error::ValueOutOfRange {
                site,
                value,
                max_jump: self.max_jump(),
            });
        }
        let mut next = self.clone();
        next.patches.insert(site, stack);
        Ok(next)
    }

    /// Cookie-wise equality over the window, clamped layers compared once.
    pub fn same_cookies(&self, other: &Self) -> bool {
        self.same_parameters(other)
            && self
                .window
                .iter()
                .all(|z| self.stack(z).unwrap() == other.stack(z).unwrap())
    }

    pub fn same_parameters(&self, other: &Self) -> bool {
        self.max_jump() == other.max_jump()
            && self.stack_height == other.stack_height
            && self.window == other.window
    }

    /// Sites where the two environments hold different stacks. Only patched
    /// sites can differ when both share a master seed, so the scan is cheap.
    pub fn differing_sites(&self, other: &Self) -> Vec<i64> {
        let mut sites: Vec<i64> = if self.master_seed == other.master_seed {
            let mut s: Vec<i64> = self.patches.keys().copied().collect();
            s.extend(other.patches.keys().copied());
            s.sort_unstable();
            s.dedup();
            s
        } else {
            self.window.iter().collect()
        };
        sites.retain(|&z| {
            self.window.contains(z)
                && other.window.contains(z)
                && self.stack(z).unwrap() != other.stack(z).unwrap()
        });
        sites
    }

    /// Plain-text serialization: one header line, then one line per site.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "DWERE L={} M={} seed={} window={}:{}",
            self.max_jump(),
            self.stack_height,
            self.master_seed,
            self.window.lo,
            self.window.hi
        )
        .unwrap();
        for z in self.window.iter() {
            out.push_str(&format_site_line(z, &self.stack(z).unwrap()));
        }
        out
    }

    /// Parse the text format produced by [`to_text`](Self::to_text).
    ///
    /// The file carries cookie values, not the law they were drawn from, so a
    /// distribution must be supplied; `None` means uniform on `[-L, L]`.
    pub fn from_text(text: &str, dist: Option<CookieDistribution>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty environment file".into()))?;
        let (max_jump, stack_height, seed, window) = parse_header(header)?;
        let dist = match dist {
            Some(d) => {
                if d.max_jump() != max_jump {
                    return Err(Error::Parse(format!(
                        "file has L={max_jump} but the supplied distribution has L={}",
                        d.max_jump()
                    )));
                }
                d
            }
            None => CookieDistribution::uniform(max_jump),
        };
        let mut env = Environment::sample(dist, stack_height, seed, window)?;
        for line in lines {
            if line.trim_start().starts_with('#') {
                continue;
            }
            let (site, stack) = parse_site_line(line, stack_height)?;
            env = env.with_patch(site, stack)?;
        }
        Ok(env)
    }
}

pub(crate) fn format_site_line(site: i64, stack: &[i64]) -> String {
    let mut line = site.to_string();
    for c in stack {
        line.push(' ');
        line.push_str(&c.to_string());
    }
    line.push('\n');
    line
}

fn parse_header(header: &str) -> Result<(u32, u32, u64, Window)> {
    let mut fields = header.split_whitespace();
    if fields.next() != Some("DWERE") {
        return Err(Error::Parse(format!("bad header line: {header:?}")));
    }
    let mut max_jump = None;
    let mut stack_height = None;
    let mut seed = None;
    let mut window = None;
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field {field:?}")))?;
        match key {
            "L" => max_jump = Some(parse_num::<u32>(value)?),
            "M" => stack_height = Some(parse_num::<u32>(value)?),
            "seed" => seed = Some(parse_num::<u64>(value)?),
            "window" => {
                let (lo, hi) = value
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("bad window field {value:?}")))?;
                window = Some(Window::new(parse_num::<i64>(lo)?, parse_num::<i64>(hi)?)?);
            }
            other => return Err(Error::Parse(format!("unknown header key {other:?}"))),
        }
    }
    match (max_jump, stack_height, seed, window) {
        (Some(l), Some(m), Some(s), Some(w)) => Ok((l, m, s, w)),
        _ => Err(Error::Parse(format!("incomplete header: {header:?}"))),
    }
}

fn parse_site_line(line: &str, stack_height: u32) -> Result<(i64, Vec<i64>)> {
    let mut parts = line.split_whitespace();
    let site = parse_num::<i64>(
        parts
            .next()
            .ok_or_else(|| Error::Parse(format!("empty site line {line:?}")))?,
    )?;
    let stack: Vec<i64> = parts.map(parse_num::<i64>).collect::<Result<_>>()?;
    if stack.len() != stack_height as usize {
        return Err(Error::PatchLength {
            got: stack.len(),
            expected: stack_height as usize,
        });
    }
    Ok((site, stack))
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_distribution_basics() {
        let d = CookieDistribution::uniform(2);
        assert_eq!(d.mu_min(), 0.2);
        assert_eq!(d.mu_max(), 0.2);
        let d = CookieDistribution::uniform(3);
        assert_eq!(d.weights().len(), 7);
        assert!((d.mu_min() - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(d.prob(-3), d.prob(3));
        assert_eq!(d.prob(4), 0.0);
    }

    #[test]
    fn weighted_distribution_extremes() {
        let d = CookieDistribution::new(2, vec![0.1, 0.2, 0.4, 0.2, 0.1]).unwrap();
        assert_eq!(d.mu_min(), 0.1);
        assert_eq!(d.mu_max(), 0.4);
        assert_eq!(d.prob(0), 0.4);
    }

    #[test]
    fn distribution_rejections() {
        assert!(CookieDistribution::new(2, vec![0.5, 0.5]).is_err());
        assert!(CookieDistribution::new(2, vec![0.3, 0.3, 0.4, 0.0, 0.0]).is_err());
        assert!(CookieDistribution::new(1, vec![0.3, 0.3, 0.3]).is_err());
        assert!(CookieDistribution::new(0, vec![1.0]).is_err());
    }

    #[test]
    fn sampled_cookies_are_in_range_and_deterministic() {
        let d = CookieDistribution::uniform(2);
        let w = Window::new(-10, 10).unwrap();
        let env = Environment::sample(d.clone(), 2, 7, w).unwrap();
        for z in -10..=10 {
            for j in 0..2 {
                let c = env.cookie(j, z).unwrap();
                assert!((-2..=2).contains(&c));
            }
        }
        let env2 = Environment::sample(d, 2, 7, w).unwrap();
        assert!(env.same_cookies(&env2));
    }

    #[test]
    fn window_extension_preserves_cookies() {
        let d = CookieDistribution::uniform(2);
        let narrow = Environment::sample(d.clone(), 2, 123, Window::new(-10, 10).unwrap()).unwrap();
        let wide = Environment::sample(d, 2, 123, Window::new(-20, 20).unwrap()).unwrap();
        for z in -10..=10 {
            for j in 0..2 {
                assert_eq!(narrow.cookie(j, z).unwrap(), wide.cookie(j, z).unwrap());
            }
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_environments() {
        let d = CookieDistribution::uniform(2);
        let w = Window::new(-100, 100).unwrap();
        let mut differing = 0;
        for pair in 0..100u64 {
            let a = Environment::sample(d.clone(), 2, rng::mix64(2 * pair), w).unwrap();
            let b = Environment::sample(d.clone(), 2, rng::mix64(2 * pair + 1), w).unwrap();
            if !a.same_cookies(&b) {
                differing += 1;
            }
        }
        assert!(differing >= 99, "only {differing}/100 seed pairs differed");
    }

    #[test]
    fn clamping_above_stack_height() {
        let d = CookieDistribution::uniform(3);
        let env = Environment::sample(d, 2, 0, Window::new(-5, 5).unwrap()).unwrap();
        let env = env.with_patch(0, vec![-3, 2]).unwrap();
        assert_eq!(env.cookie(0, 0).unwrap(), -3);
        assert_eq!(env.cookie(1, 0).unwrap(), 2);
        assert_eq!(env.cookie(5, 0).unwrap(), 2);
        for z in -5..=5 {
            assert_eq!(env.cookie(17, z).unwrap(), env.cookie(1, z).unwrap());
        }
    }

    #[test]
    fn out_of_window_reads_error() {
        let env = Environment::sample(
            CookieDistribution::uniform(1),
            1,
            0,
            Window::new(-2, 2).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            env.cookie(0, 3),
            Err(Error::OutOfWindow { site: 3, .. })
        ));
    }

    #[test]
    fn patch_semantics() {
        let env = Environment::sample(
            CookieDistribution::uniform(2),
            2,
            5,
            Window::new(-5, 5).unwrap(),
        )
        .unwrap();
        let patched = env.with_patch(2, vec![-2, 1]).unwrap();
        assert_eq!(patched.cookie(0, 2).unwrap(), -2);
        // Original untouched, other sites untouched.
        for z in -5..=5 {
            if z != 2 {
                assert_eq!(env.stack(z).unwrap(), patched.stack(z).unwrap());
            }
        }
        // Re-patching the same site: last write wins.
        let repatched = patched.with_patch(2, vec![1, 1]).unwrap();
        assert_eq!(repatched.cookie(0, 2).unwrap(), 1);
        // Out-of-range values rejected.
        assert!(matches!(
            env.with_patch(0, vec![3, 0]),
            Err(Error::ValueOutOfRange { value: 3, .. })
        ));
        assert!(env.with_patch(0, vec![1]).is_err());
    }

    #[test]
    fn empirical_frequencies_near_uniform() {
        let d = CookieDistribution::uniform(2);
        let env = Environment::sample(d, 1, 2024, Window::new(0, 99_999).unwrap()).unwrap();
        let n = 100_000usize;
        let mut counts = [0u64; 5];
        for z in 0..n as i64 {
            let c = env.cookie(0, z).unwrap();
            counts[(c + 2) as usize] += 1;
        }
        let p = 0.2;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - p).abs() <= 5.0 * se,
                "value {} frequency {freq} outside 5 SE of {p}",
                i as i64 - 2
            );
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let d = CookieDistribution::uniform(2);
        let env = Environment::sample(d.clone(), 3, 77, Window::new(-4, 4).unwrap())
            .unwrap()
            .with_patch(1, vec![-2, 0, 2])
            .unwrap();
        let text = env.to_text();
        assert!(text.starts_with("DWERE L=2 M=3 seed=77 window=-4:4\n"));
        let back = Environment::from_text(&text, Some(d)).unwrap();
        assert!(env.same_cookies(&back));
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn oversized_window_is_a_resource_error() {
        let r = Window::new(i64::MIN / 4, i64::MAX / 4);
        assert!(matches!(r, Err(Error::WindowTooLarge { .. })));
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(matches!(
            Environment::from_text("", None),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            Environment::from_text("HELLO L=2 M=1 seed=0 window=0:1\n", None),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            Environment::from_text("DWERE L=2 M=1 window=0:1\n", None),
            Err(Error::Parse(_))
        ));
        // Stack length must match the header's M.
        let text = "DWERE L=2 M=2 seed=0 window=0:1\n0 1\n";
        assert!(matches!(
            Environment::from_text(text, None),
            Err(Error::PatchLength { got: 1, expected: 2 })
        ));
        // Distribution support must match the header's L.
        let text = "DWERE L=2 M=1 seed=0 window=0:1\n0 1\n";
        assert!(Environment::from_text(text, Some(CookieDistribution::uniform(3))).is_err());
    }
}
