//! Pinned deterministic randomness.
//!
//! Every seeded decision in the pipeline (per-user splits, random post
//! selection, test-set sampling) goes through [`SplitMix64`] and the
//! Fisher–Yates routine below. Both are fully specified here so that a
//! permutation produced for `(seed, key)` is reproducible in any language:
//!
//! * key hash: 64-bit FNV-1a over the UTF-8 bytes of the key
//! * initial state: `seed * 0x9E3779B97F4A7C15 (wrapping) XOR fnv1a64(key)`
//! * generator: SplitMix64 (Steele, Lea, Flood 2014)
//! * bounded draw: rejection sampling on the top of the `u64` range
//! * shuffle: `for i in (1..n).rev() { j = below(i + 1); swap(i, j) }`

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(state: u64) -> Self {
        Self { state }
    }

    /// Generator keyed by a seed and a string (usually a username).
    pub fn keyed(seed: u64, key: &str) -> Self {
        Self::new(seed.wrapping_mul(GOLDEN_GAMMA) ^ fnv1a64(key.as_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[0, bound)`. `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        // values >= limit would bias the modulus
        let limit = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < limit {
                return x % bound;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
