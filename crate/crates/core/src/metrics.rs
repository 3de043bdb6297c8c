//! Energy accounting and latency statistics.
//!
//! Energy is tracked as event counts per node and converted with integer
//! nanojoule constants only when a report is produced, so the totals do not
//! depend on the order in which events were charged.

use serde::Serialize;

/// Per-frame and per-slot energy costs, in nanojoules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyModel {
    pub send_nj: u64,
    pub rec_nj: u64,
    pub listen_nj: u64,
    /// Override for frames carrying a sleep command (transmitter side).
    pub send_cmd_nj: Option<u64>,
    /// Override for frames carrying a sleep command (receiver side).
    pub rec_cmd_nj: Option<u64>,
}

impl Default for EnergyModel {
    /// Maximal-size frame on an OpenMoteSTM class device.
    fn default() -> Self {
        Self {
            send_nj: 485_700,
            rec_nj: 651_000,
            listen_nj: 303_300,
            send_cmd_nj: None,
            rec_cmd_nj: None,
        }
    }
}

impl EnergyModel {
    fn cost(&self, event: EnergyEvent) -> u64 {
        match event {
            EnergyEvent::Sent(FrameKind::Data) => self.send_nj,
            EnergyEvent::Sent(FrameKind::Command) => self.send_cmd_nj.unwrap_or(self.send_nj),
            EnergyEvent::Received(FrameKind::Data) => self.rec_nj,
            EnergyEvent::Received(FrameKind::Command) => self.rec_cmd_nj.unwrap_or(self.rec_nj),
            EnergyEvent::IdleListened => self.listen_nj,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Data,
    /// Data frame with a sleep command attached.
    Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyEvent {
    Sent(FrameKind),
    Received(FrameKind),
    IdleListened,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EnergyAccount {
    pub sent_data: u64,
    pub sent_cmd: u64,
    pub recv_data: u64,
    pub recv_cmd: u64,
    pub idle: u64,
}

impl EnergyAccount {
    pub fn charge(&mut self, event: EnergyEvent, count: u64) {
        let slot = match event {
            EnergyEvent::Sent(FrameKind::Data) => &mut self.sent_data,
            EnergyEvent::Sent(FrameKind::Command) => &mut self.sent_cmd,
            EnergyEvent::Received(FrameKind::Data) => &mut self.recv_data,
            EnergyEvent::Received(FrameKind::Command) => &mut self.recv_cmd,
            EnergyEvent::IdleListened => &mut self.idle,
        };
        *slot += count;
    }

    pub fn send_nj(&self, m: &EnergyModel) -> u64 {
        self.sent_data * m.cost(EnergyEvent::Sent(FrameKind::Data))
            + self.sent_cmd * m.cost(EnergyEvent::Sent(FrameKind::Command))
    }

    pub fn rec_nj(&self, m: &EnergyModel) -> u64 {
        self.recv_data * m.cost(EnergyEvent::Received(FrameKind::Data))
            + self.recv_cmd * m.cost(EnergyEvent::Received(FrameKind::Command))
    }

    pub fn listen_nj(&self, m: &EnergyModel) -> u64 {
        self.idle * m.cost(EnergyEvent::IdleListened)
    }
}

/// Average power in microwatts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PowerRow {
    pub p_send_uw: f64,
    pub p_rec_uw: f64,
    pub p_listen_uw: f64,
    pub p_uw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerReport {
    pub nodes: Vec<PowerRow>,
    pub total: PowerRow,
}

fn to_uw(nj: u64, duration_us: u64) -> f64 {
    // nJ / us = mW; times 1000 for uW
    if duration_us == 0 {
        return 0.0;
    }
    (u128::from(nj) * 1000) as f64 / duration_us as f64
}

fn row(send: u64, rec: u64, listen: u64, duration_us: u64) -> PowerRow {
    PowerRow {
        p_send_uw: to_uw(send, duration_us),
        p_rec_uw: to_uw(rec, duration_us),
        p_listen_uw: to_uw(listen, duration_us),
        p_uw: to_uw(send + rec + listen, duration_us),
    }
}

/// Each bucket divided by `duration_us`; zero duration yields zeros.
pub fn power_report(accounts: &[EnergyAccount], model: &EnergyModel, duration_us: u64) -> PowerReport {
    let (mut s, mut r, mut l) = (0u64, 0u64, 0u64);
    let nodes = accounts
        .iter()
        .map(|a| {
            let (ns, nr, nl) = (a.send_nj(model), a.rec_nj(model), a.listen_nj(model));
            s += ns;
            r += nr;
            l += nl;
            row(ns, nr, nl, duration_us)
        })
        .collect();
    PowerReport { nodes, total: row(s, r, l, duration_us) }
}

/// End-to-end delay statistics over integer-microsecond samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencySummary {
    pub n: u64,
    pub mean_us: f64,
    /// Population standard deviation.
    pub sigma_us: f64,
    pub min_us: u64,
    pub p99_us: u64,
    pub p99_9_us: u64,
    pub p99_99_us: u64,
    pub max_us: u64,
}

pub const PERCENTILE_METHOD: &str = "nearest-rank";

/// Nearest-rank percentile `num/den` of an ascending sample.
fn nearest_rank(sorted: &[u64], num: u64, den: u64) -> u64 {
    let n = sorted.len() as u128;
    let rank = (u128::from(num) * n).div_ceil(u128::from(den)).max(1);
    sorted[(rank - 1) as usize]
}

/// `None` for an empty sample.
pub fn latency_summary(samples: &[u64]) -> Option<LatencySummary> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as u128;
    let sum: u128 = sorted.iter().map(|&x| u128::from(x)).sum();
    let sum_sq: u128 = sorted.iter().map(|&x| u128::from(x) * u128::from(x)).sum();
    let var_num = n * sum_sq - sum * sum;
    Some(LatencySummary {
        n: n as u64,
        mean_us: sum as f64 / n as f64,
        sigma_us: (var_num as f64).sqrt() / n as f64,
        min_us: sorted[0],
        p99_us: nearest_rank(&sorted, 99, 100),
        p99_9_us: nearest_rank(&sorted, 999, 1000),
        p99_99_us: nearest_rank(&sorted, 9999, 10_000),
        max_us: *sorted.last().expect("non-empty"),
    })
}
