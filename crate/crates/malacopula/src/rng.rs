//! Deterministic random number generation.
//!
//! Everything random in this crate flows through [`SplitMix64`], a named
//! 64-bit generator with a pure integer state transition. Streams depend only
//! on the seed, never on platform, pointer values or thread scheduling, so
//! identical seeds reproduce identical corpora, filter initializations and
//! batch shuffles.

/// SplitMix64 generator (Steele, Lea, Flood; used as the seeder in many
/// standard libraries). One u64 of state, period 2^64.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform f64 in [0, 1), 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform f64 in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). n must be nonzero.
    ///
    /// Uses rejection sampling so the distribution is exactly uniform.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Standard normal sample via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// FNV-1a over a byte string; used to derive cell seeds and config hashes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives an independent seed from a parent seed and a textual identity.
///
/// Worker pools dispatch cells in arbitrary order; seeding each cell from its
/// identity keeps every output independent of scheduling.
pub fn derive_seed(parent: u64, identity: &str) -> u64 {
    let mut bytes = Vec::with_capacity(8 + identity.len());
    bytes.extend_from_slice(&parent.to_le_bytes());
    bytes.extend_from_slice(identity.as_bytes());
    fnv1a(&bytes)
}
