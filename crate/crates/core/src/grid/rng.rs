use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Name of the generator written into file headers so realizations can be replayed.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// A `(master_seed, stream_id)` pair naming one reproducible ChaCha8 stream.
///
/// ChaCha output is specified bit-for-bit, so equal pairs give equal streams on
/// every platform; distinct stream ids select disjoint keystreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededRng {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeededRng {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeededRng {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream keyed by `parts`, sharing the master seed.
    pub fn child(&self, parts: &[u64]) -> SeededRng {
        let mut all = Vec::with_capacity(parts.len() + 1);
        all.push(self.stream_id);
        all.extend_from_slice(parts);
        SeededRng::new(self.master_seed, derive_stream(&all))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a tuple of integers into a stream id.
pub fn derive_stream(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5eed_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn equal_seeds_equal_streams() {
        let mut a = SeededRng::new(42, 7).rng();
        let mut b = SeededRng::new(42, 7).rng();
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = SeededRng::new(42, 0).rng();
        let mut b = SeededRng::new(42, 1).rng();
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn known_first_word() {
        // Frozen so a dependency bump that changes the keystream is caught.
        let mut a = SeededRng::new(0, 0).rng();
        assert_eq!(a.next_u64(), 0xb585_f767_a79a_3b6c);
        assert_eq!(derive_stream(&[1, 2]), 0x1d26_2ac5_ef24_35c1);
        assert_ne!(derive_stream(&[1, 2]), derive_stream(&[2, 1]));
    }
}
