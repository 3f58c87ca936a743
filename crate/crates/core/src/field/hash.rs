//! Per-leaf hash functions: xor of per-axis affine maps with random large
//! primes, reduced modulo the table length. Two leaves mapping to the same
//! warp-space voxel still retrieve different table rows because their hash
//! parameters differ.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

/// Hash parameters owned by one octree leaf.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeHashParams {
    /// Odd random primes in [2^20, 2^31), distinct within the node.
    pub pi: [u64; 3],
    /// Random offsets below 2^31.
    pub delta: [u64; 3],
    /// Dense per-leaf slot, used by the per-node table partition mode.
    pub slot: u32,
}

impl NodeHashParams {
    /// Deterministic parameters for a (tree seed, leaf) pair.
    pub fn generate(seed: u64, leaf_key: u64, slot: u32) -> Self {
        let mut rng = StdRng::seed_from_u64(splitmix64(
            seed ^ splitmix64(leaf_key.wrapping_add(0x9E37_79B9_7F4A_7C15)),
        ));
        let mut pi = [0u64; 3];
        for k in 0..3 {
            loop {
                let p = random_prime(&mut rng);
                if !pi[..k].contains(&p) {
                    pi[k] = p;
                    break;
                }
            }
        }
        let delta = [
            rng.gen_range(0..1u64 << 31),
            rng.gen_range(0..1u64 << 31),
            rng.gen_range(0..1u64 << 31),
        ];
        Self { pi, delta, slot }
    }

    /// Hash of an integer vertex into [0, len): xor over axes of
    /// v_k * pi_k + delta_k in wrapping 64-bit arithmetic, then mod len.
    #[inline]
    pub fn hash_vertex(&self, v: [u64; 3], len: usize) -> usize {
        debug_assert!(len > 0);
        let mut acc = 0u64;
        for k in 0..3 {
            acc ^= v[k].wrapping_mul(self.pi[k]).wrapping_add(self.delta[k]);
        }
        if len.is_power_of_two() {
            (acc & (len as u64 - 1)) as usize
        } else {
            (acc % len as u64) as usize
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn random_prime(rng: &mut StdRng) -> u64 {
    loop {
        let mut candidate = rng.gen_range((1u64 << 20)..(1u64 << 31)) | 1;
        for _ in 0..2048 {
            if is_prime_u64(candidate) {
                return candidate;
            }
            candidate += 2;
        }
    }
}

/// Deterministic Miller-Rabin, exact for all u64.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vertex_hashes_to_delta_xor() {
        let hp = NodeHashParams::generate(1, 2, 0);
        let expect = (hp.delta[0] ^ hp.delta[1] ^ hp.delta[2]) % 64;
        assert_eq!(hp.hash_vertex([0, 0, 0], 64), expect as usize);
    }

    #[test]
    fn hand_evaluated_example() {
        let hp = NodeHashParams {
            pi: [3, 5, 7],
            delta: [0, 0, 0],
            slot: 0,
        };
        // (1*3) xor (2*5) xor (3*7) = 3 xor 10 xor 21 = 28; 28 mod 16 = 12.
        assert_eq!(hp.hash_vertex([1, 2, 3], 16), 12);
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let a = NodeHashParams::generate(42, 7, 3);
        let b = NodeHashParams::generate(42, 7, 3);
        assert_eq!(a, b);
        let c = NodeHashParams::generate(42, 8, 4);
        assert_ne!(a.pi, c.pi);
        for k in 0..3 {
            assert!(a.pi[k] >= 1 << 20);
            assert!(a.pi[k] % 2 == 1);
            assert!(is_prime_u64(a.pi[k]));
            assert!(a.delta[k] < 1 << 31);
        }
        assert!(a.pi[0] != a.pi[1] && a.pi[1] != a.pi[2] && a.pi[0] != a.pi[2]);
    }

    /// Collision oracle for the multi-hash mechanism: two leaves agree on a
    /// shared vertex's index only about 1/len of the time.
    #[test]
    fn cross_leaf_collision_rate() {
        let a = NodeHashParams::generate(9, 0, 0);
        let b = NodeHashParams::generate(9, 1, 1);
        let len = 1 << 19;
        let mut rng = StdRng::seed_from_u64(77);
        let mut collisions = 0;
        let trials = 10_000;
        for _ in 0..trials {
            let v = [
                rng.gen_range(0..2048u64),
                rng.gen_range(0..2048u64),
                rng.gen_range(0..2048u64),
            ];
            if a.hash_vertex(v, len) == b.hash_vertex(v, len) {
                collisions += 1;
            }
        }
        assert!(
            (collisions as f64) / (trials as f64) <= 0.001,
            "collision rate {collisions}/{trials}"
        );
    }

    /// Bucket-count variance within 2x of the Poisson ideal.
    #[test]
    fn hash_spread_is_near_uniform() {
        let hp = NodeHashParams::generate(5, 11, 0);
        let len = 1024usize;
        let mut counts = vec![0u32; len];
        let mut rng = StdRng::seed_from_u64(13);
        let n = 1_000_000;
        for _ in 0..n {
            let v = [
                rng.gen_range(0..1u64 << 20),
                rng.gen_range(0..1u64 << 20),
                rng.gen_range(0..1u64 << 20),
            ];
            counts[hp.hash_vertex(v, len)] += 1;
        }
        let mean = n as f64 / len as f64;
        let var = counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / len as f64;
        assert!(var < 2.0 * mean, "variance {var} vs ideal {mean}");
    }

    #[test]
    fn miller_rabin_small_cases() {
        let primes = [2u64, 3, 5, 1048583, 2147483647];
        for p in primes {
            assert!(is_prime_u64(p), "{p}");
        }
        let composites = [1u64, 4, 1048575, 2147483649, 3215031751];
        for c in composites {
            assert!(!is_prime_u64(c), "{c}");
        }
    }
}
