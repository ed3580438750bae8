//! Counter-based random streams.
//!
//! A [`StreamKey`] fixes `(master seed, tag)`; stream `i` of a key is an
//! independent ChaCha stream, so path `i` draws the same numbers no matter
//! which thread runs it or in which order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::vector::AlgebraVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub tag: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn experiment names into tags.
pub fn tag_of(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl StreamKey {
    pub fn new(seed: u64, tag: u64) -> Self {
        Self { seed, tag }
    }

    pub fn named(seed: u64, name: &str) -> Self {
        Self::new(seed, tag_of(name))
    }

    /// A key for a sub-experiment, e.g. one optimizer iteration.
    pub fn derive(&self, sub: u64) -> Self {
        Self::new(self.seed, splitmix(self.tag ^ splitmix(sub.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn stream(&self, index: u64) -> NoiseStream {
        let mut seed = [0u8; 32];
        let mut state = self.seed ^ splitmix(self.tag);
        for chunk in seed.chunks_mut(8) {
            state = splitmix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(seed);
        rng.set_stream(index);
        NoiseStream { rng, key: *self, index }
    }
}

pub struct NoiseStream {
    rng: ChaCha12Rng,
    key: StreamKey,
    index: u64,
}

impl NoiseStream {
    pub fn key(&self) -> StreamKey {
        self.key
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Brownian increment: `d` independent `N(0, dt)` draws.
    pub fn increment(&mut self, d: usize, dt: f64) -> AlgebraVector {
        let s = libm::sqrt(dt);
        let mut v = AlgebraVector::zeros(d);
        for i in 0..d {
            v[i] = s * self.normal();
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let key = StreamKey::named(42, "bm");
        let a: [f64; 4] = core::array::from_fn({
            let mut s = key.stream(3);
            move |_| s.normal()
        });
        let b: [f64; 4] = core::array::from_fn({
            let mut s = key.stream(3);
            move |_| s.normal()
        });
        let c = key.stream(4).normal();
        let d = StreamKey::named(43, "bm").stream(3).normal();
        assert_eq!(a, b);
        assert_ne!(a[0], c);
        assert_ne!(a[0], d);
        assert_ne!(key.derive(1), key.derive(2));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = StreamKey::new(1, 2).stream(0);
        for _ in 0..1000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
