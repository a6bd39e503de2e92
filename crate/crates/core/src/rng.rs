//! Seeded pseudo-random numbers for surface sampling and synthetic data.
//!
//! The generator is pinned to a fixed, portable definition so that a
//! reimplementation in any language reproduces every sample bitwise.
//! It is xorshift64* (Vigna 2016) with the update
//!
//! ```text
//! x ^= x >> 12
//! x ^= x << 25
//! x ^= x >> 27
//! output = x * 0x2545F4914F6CDD1D   (wrapping 64-bit multiply)
//! ```
//!
//! A zero seed is remapped to a fixed nonzero constant because the all-zero
//! state is a fixed point of the xorshift update.

const ZERO_SEED_SUBSTITUTE: u64 = 0x9E3779B97F4A7C15;
const OUTPUT_MULTIPLIER: u64 = 0x2545F4914F6CDD1D;

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = if seed == 0 { ZERO_SEED_SUBSTITUTE } else { seed };
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(OUTPUT_MULTIPLIER)
    }

    /// Uniform double in [0, 1), from the top 53 bits of the next output.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). n must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        // Modulo bias is irrelevant at the n << 2^64 sizes used here.
        self.next_u64() % n
    }
}
