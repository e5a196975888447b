//! Deterministic randomness plumbing.
//!
//! All randomness in a run flows from a single root seed. Consumers
//! never share a generator: each site derives a *named child stream*
//! (for example `"rollout"` with index `step * batch + slot`), so
//! results are reproducible bit-for-bit regardless of evaluation order
//! or thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a hash; used for stream names and prompt identities.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One round of the splitmix64 output function.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 32-byte ChaCha seed from `(root, name, index)`.
pub fn child_seed(root: u64, name: &str, index: u64) -> [u8; 32] {
    let mut state = root ^ fnv1a(name.as_bytes()).rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// A fresh generator for the named child stream.
pub fn child_rng(root: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(child_seed(root, name, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_name_and_index_reproduce_the_stream() {
        let mut a = child_rng(42, "rollout", 7);
        let mut b = child_rng(42, "rollout", 7);
        for _ in 0..16 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn different_names_diverge() {
        let mut a = child_rng(42, "rollout", 7);
        let mut b = child_rng(42, "reward", 7);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn different_indices_diverge() {
        let mut a = child_rng(42, "rollout", 7);
        let mut b = child_rng(42, "rollout", 8);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn different_roots_diverge() {
        let mut a = child_rng(1, "rollout", 0);
        let mut b = child_rng(2, "rollout", 0);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn fnv1a_matches_reference_vector() {
        // Published FNV-1a test vector: empty input hashes to the offset basis.
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
