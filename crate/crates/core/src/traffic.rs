//! Periodic traffic sources with per-flow period drift.

use crate::schedule::NodeId;

const PPB: i128 = 1_000_000_000;

/// A periodic flow with a fixed multi-hop path.
///
/// The `n`-th packet is generated at `phase + round(n * period * (1 + drift))`,
/// with drift held in parts per billion so that the arithmetic is exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub id: String,
    pub path: Vec<NodeId>,
    pub nominal_period_us: u64,
    pub drift_ppb: i64,
    pub phase_us: u64,
    pub payload_bytes: u8,
}

impl Flow {
    pub fn source(&self) -> NodeId {
        self.path[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.path.last().expect("non-empty path")
    }

    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }

    fn scaled(&self, n: u64) -> i128 {
        // round half up
        let num = i128::from(n) * i128::from(self.nominal_period_us) * (PPB + i128::from(self.drift_ppb));
        (num + PPB / 2).div_euclid(PPB)
    }

    /// Effective period rounded to the microsecond.
    pub fn effective_period_us(&self) -> u64 {
        self.scaled(1) as u64
    }

    pub fn generation_time(&self, n: u64) -> u64 {
        self.phase_us + self.scaled(n) as u64
    }

    /// Generation instants strictly before `horizon_us`.
    pub fn generation_times(&self, horizon_us: u64) -> impl Iterator<Item = u64> + '_ {
        (0u64..)
            .map(|n| self.generation_time(n))
            .take_while(move |&t| t < horizon_us)
    }

    /// Sequence number of the first generation strictly after `after_us`.
    pub fn next_sequence_after(&self, after_us: u64) -> u64 {
        if after_us < self.phase_us {
            return 0;
        }
        let eff = self.effective_period_us().max(1);
        let mut n = (after_us - self.phase_us) / eff;
        n = n.saturating_sub(1);
        while self.generation_time(n) <= after_us {
            n += 1;
        }
        while n > 0 && self.generation_time(n - 1) > after_us {
            n -= 1;
        }
        n
    }

    /// Smallest generation time strictly greater than `after_us`.
    pub fn next_generation(&self, after_us: u64) -> u64 {
        self.generation_time(self.next_sequence_after(after_us))
    }
}
