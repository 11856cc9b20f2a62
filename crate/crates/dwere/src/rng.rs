//! Counter-based deterministic randomness.
//!
//! Every random quantity in this crate is a pure function of a 64-bit key
//! assembled from a master seed and integer coordinates. There is no stateful
//! generator: a cookie value depends only on `(master_seed, layer, site)` and a
//! trial stream depends only on `(master_seed, trial_index)`. This makes
//! environments extendable without resampling and Monte Carlo runs replayable
//! under any worker count or scheduling order.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_CONST1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_CONST2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 finalizer. Full-avalanche bijection on u64.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(MIX_CONST1);
    x ^= x >> 27;
    x = x.wrapping_mul(MIX_CONST2);
    x ^ (x >> 31)
}

/// Uniform 64-bit word for the cookie at stack index `layer` of `site`.
#[inline]
pub fn cookie_word(master_seed: u64, layer: u32, site: i64) -> u64 {
    let mut h = mix64(master_seed ^ GOLDEN_GAMMA);
    h = mix64(h ^ (site as u64).wrapping_mul(MIX_CONST1));
    mix64(h ^ (u64::from(layer).wrapping_add(1)).wrapping_mul(GOLDEN_GAMMA))
}

/// Seed for the environment of one Monte Carlo trial.
#[inline]
pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    mix64(mix64(master_seed ^ trial_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Derive an independent stream for a named sub-purpose of a run.
#[inline]
pub fn substream(master_seed: u64, tag: u64) -> u64 {
    mix64(master_seed ^ mix64(tag.wrapping_mul(MIX_CONST2)))
}

/// Map a word to a double in [0, 1).
#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Hasher for integer-keyed maps on the walk hot path.
///
/// The walk updates one visit count per step; SipHash overhead is measurable
/// there. Keys are walker sites, so a single multiply-xor round is enough.
#[derive(Clone, Copy, Default)]
pub struct SiteHasher(u64);

impl std::hash::Hasher for SiteHasher {
    #[inline]
    fn finish(&self) -> u64 {
        self.0
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ u64::from(b)).wrapping_mul(MIX_CONST1);
            self.0 ^= self.0 >> 29;
        }
    }

    #[inline]
    fn write_i64(&mut self, i: i64) {
        self.write_u64(i as u64);
    }

    #[inline]
    fn write_u64(&mut self, i: u64) {
        let mut h = i.wrapping_mul(GOLDEN_GAMMA) ^ self.0;
        h ^= h >> 31;
        h = h.wrapping_mul(MIX_CONST2);
        self.0 = h ^ (h >> 29);
    }
}

pub type SiteBuildHasher = std::hash::BuildHasherDefault<SiteHasher>;
pub type SiteMap<V> = std::collections::HashMap<i64, V, SiteBuildHasher>;
