//! Deterministic random streams.
//!
//! Every stochastic routine in this crate takes an explicit stream owned by
//! the caller. Independent units of work (replications, sweep cells,
//! verification checks) each derive their own stream from a base seed and a
//! list of integer tags via [`derive`], so results never depend on scheduling
//! or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// The random stream used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Creates a stream from a raw seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a stable list of index tags.
///
/// The derivation is a fixed function of `(base, tags)` only. Two calls with
/// the same arguments yield the same seed on every platform, which is the
/// contract the sweep runner and the verification suite rely on for
/// scheduling-independent determinism.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base ^ 0xd1b5_4a32_d192_ed03);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

/// Convenience for `stream(derive(base, tags))`.
pub fn substream(base: u64, tags: &[u64]) -> Stream {
    stream(derive(base, tags))
}

/// One standard normal draw.
pub fn standard_normal(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}

/// Fills `out` with independent standard normal draws.
pub fn fill_standard_normal(rng: &mut Stream, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable_and_tag_sensitive() {
        let a = derive(7, &[1, 2, 3]);
        let b = derive(7, &[1, 2, 3]);
        assert_eq!(a, b);
        assert_ne!(a, derive(7, &[1, 2, 4]));
        assert_ne!(a, derive(8, &[1, 2, 3]));
        // order matters
        assert_ne!(derive(7, &[1, 2]), derive(7, &[2, 1]));
    }

    #[test]
    fn streams_replay() {
        let mut r1 = substream(42, &[5]);
        let mut r2 = substream(42, &[5]);
        for _ in 0..10 {
            assert_eq!(standard_normal(&mut r1), standard_normal(&mut r2));
        }
    }
}
