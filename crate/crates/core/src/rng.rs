//! Counter-based randomness (Philox4x32-10).
//!
//! Every draw is a pure function of `(seed, stream, index, sub)`, so the
//! outcome of a transmission attempt does not depend on the order in which
//! the simulator happens to visit events. The slot-by-slot reference
//! interpreter and the event-driven engine therefore see the same losses.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(c[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(c[2]);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Independent draw families. The discriminant is part of the counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Stream {
    /// Per transmission attempt, indexed by ASN with the link index as `sub`.
    Loss = 1,
    /// Default per-flow period drift, indexed by flow position.
    Drift = 2,
    /// Default per-flow initial phase, indexed by flow position.
    Phase = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: [u32; 2],
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    pub fn draw_u64(&self, stream: Stream, index: u64, sub: u32) -> u64 {
        let out = philox4x32_10([index as u32, (index >> 32) as u32, sub, stream as u32], self.key);
        (u64::from(out[0]) << 32) | u64::from(out[1])
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn draw_unit(&self, stream: Stream, index: u64, sub: u32) -> f64 {
        (self.draw_u64(stream, index, sub) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`; `bound` must be non-zero.
    pub fn draw_below(&self, stream: Stream, index: u64, sub: u32, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((u128::from(self.draw_u64(stream, index, sub)) * u128::from(bound)) >> 64) as u64
    }
}
