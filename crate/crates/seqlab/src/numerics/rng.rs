//! Seeded, platform-independent random number generation.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit counter
//! advanced by the golden-gamma constant and finalized with a variant of the
//! MurmurHash3 mixer. It is tiny, has no platform-dependent state, and the
//! same seed produces the same stream everywhere. Sub-streams are derived
//! from the *base* seed and a label, so adding or reordering draws in one
//! layer never changes another layer's stream.

/// Deterministic 64-bit generator with labeled sub-streams.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes; used only to derive sub-stream seeds.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, state: seed }
    }

    /// Independent stream keyed by `label`, derived from the base seed.
    /// Draws taken from `self` so far do not affect the result.
    pub fn substream(&self, label: &str) -> Rng {
        Rng::new(mix64(self.seed ^ label_hash(label)))
    }

    /// Numbered variant of [`Rng::substream`], for per-epoch or per-item streams.
    pub fn substream_n(&self, label: &str, n: u64) -> Rng {
        Rng::new(mix64(self.seed ^ label_hash(label) ^ mix64(n.wrapping_add(1))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in 0..n via rejection-free multiply-shift (Lemire reduction).
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "contract violation: next_below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i + 1);
            xs.swap(i, j);
        }
    }
}
