//! Proactive reduction of idle listening.
//!
//! Three flavours share one receiver model:
//!
//! * **PRIL-F** (first hop): the source knows when its next packet will be
//!   generated and tells the receiver how many upcoming cell instances it
//!   may skip.
//! * **PRIL-M** (relay hops): after relaying the last queued frame, the
//!   relay puts the downstream receiver to sleep until the next packet of
//!   the fastest flow crossing the link is due, minus the time already
//!   spent draining the queue.
//! * **PRIL-ML**: as PRIL-M, but the sleep budget is cut into `r` windows
//!   of `T_act = ceil(T_min / r)` separated by single wake instances, so
//!   slower flows wait at most about `T_act` instead of `T_min`.
//!
//! PRIL-M is PRIL-ML with `r = 1` and goes through the same code path.
//!
//! Wake points for a multi-hop link sit on a grid anchored at the slot in
//! which the triggering fastest-flow packet reached the relay:
//! `anchor + min(i * T_act, T_min)` for `i = 1..=r`. Commands carry the
//! distance to the first pending wake point and the number of pending wake
//! points, from which the receiver rebuilds the same grid. The transmitter
//! mirrors the receiver plan through the implicit in-slot acknowledgement.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::schedule::LinkTimetable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Technique {
    #[default]
    None,
    PrilF,
    PrilM,
    PrilMl {
        r: u8,
    },
}

impl Technique {
    /// Number of sleep windows per fastest-flow period for multi-hop variants.
    pub fn windows(self) -> Option<u8> {
        match self {
            Technique::PrilM => Some(1),
            Technique::PrilMl { r } => Some(r),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Technique::None => "none",
            Technique::PrilF => "pril-f",
            Technique::PrilM => "pril-m",
            Technique::PrilMl { .. } => "pril-ml",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Technique::PrilMl { r } => write!(f, "pril-ml(r={r})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrilError {
    #[error("subdivision factor r must be at least 1")]
    ZeroSubdivision,
    #[error("minimum period must be positive")]
    ZeroPeriod,
}

/// Fastest flow among `(id, period)` pairs: its period and its position.
/// Ties go to the lexicographically smallest id. `None` for an empty set.
pub fn t_min<'a, I>(flows: I) -> Option<(u64, usize)>
where
    I: IntoIterator<Item = (&'a str, u64)>,
{
    let mut best: Option<(u64, &str, usize)> = None;
    for (i, (id, period)) in flows.into_iter().enumerate() {
        let better = match best {
            None => true,
            Some((p, bid, _)) => period < p || (period == p && id < bid),
        };
        if better {
            best = Some((period, id, i));
        }
    }
    best.map(|(p, _, i)| (p, i))
}

/// `ceil(T_min / r)` rounded up to a whole number of slots, in microseconds.
pub fn t_act_us(t_min_us: u64, r: u8, slot_us: u64) -> Result<u64, PrilError> {
    Ok(t_act_slots(t_min_us, r, slot_us)? * slot_us)
}

pub fn t_act_slots(t_min_us: u64, r: u8, slot_us: u64) -> Result<u64, PrilError> {
    if r == 0 {
        return Err(PrilError::ZeroSubdivision);
    }
    if t_min_us == 0 {
        return Err(PrilError::ZeroPeriod);
    }
    Ok(t_min_us.div_ceil(u64::from(r) * slot_us))
}

/// Static sleep parameters of a PRIL-M / PRIL-ML link, in slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiHopConfig {
    /// `T_min` rounded down to whole slots, so the final wake never lands
    /// after the fastest flow could transmit again.
    pub t_min_slots: u64,
    pub t_act_slots: u64,
    pub r: u8,
}

impl MultiHopConfig {
    pub fn new(t_min_us: u64, r: u8, slot_us: u64) -> Result<Self, PrilError> {
        let t_act_slots = t_act_slots(t_min_us, r, slot_us)?;
        Ok(Self { t_min_slots: t_min_us / slot_us, t_act_slots, r })
    }

    fn wake_offset(&self, i: u8) -> u64 {
        (u64::from(i) * self.t_act_slots).min(self.t_min_slots)
    }
}

/// Sleep command carried as an information element on a data frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SleepCommand {
    /// Disable this many upcoming cell instances of the link.
    FirstHopCount(u32),
    /// First pending wake point `first_window_slots` slots after the end of
    /// the carrying slot; `windows` wake points remain in the cycle.
    MultiHop { first_window_slots: u32, windows: u8 },
}

pub const COMMAND_WIRE_LEN: usize = 6;
const TAG_FIRST_HOP: u8 = 1;
const TAG_MULTI_HOP: u8 = 2;

impl SleepCommand {
    /// Trace form: tag (1 byte), duration in slots (u32 little-endian), r (1 byte).
    pub fn encode(&self) -> [u8; COMMAND_WIRE_LEN] {
        let (tag, slots, r) = match *self {
            SleepCommand::FirstHopCount(n) => (TAG_FIRST_HOP, n, 0),
            SleepCommand::MultiHop { first_window_slots, windows } => {
                (TAG_MULTI_HOP, first_window_slots, windows)
            }
        };
        let mut out = [0u8; COMMAND_WIRE_LEN];
        out[0] = tag;
        out[1..5].copy_from_slice(&slots.to_le_bytes());
        out[5] = r;
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != COMMAND_WIRE_LEN {
            return None;
        }
        let slots = u32::from_le_bytes(bytes[1..5].try_into().ok()?);
        match bytes[0] {
            TAG_FIRST_HOP => Some(SleepCommand::FirstHopCount(slots)),
            TAG_MULTI_HOP => Some(SleepCommand::MultiHop { first_window_slots: slots, windows: bytes[5] }),
            _ => None,
        }
    }
}

/// Receiver-side state of one link, mirrored by the transmitter.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum RxPlan {
    #[default]
    On,
    /// The next `n` cell instances are disabled.
    Skip(u32),
    /// Disabled until the front wake point; the first instance at or after
    /// it is enabled, after which the plan waits for the next one.
    Wakes(VecDeque<u64>),
}

impl RxPlan {
    /// Visit the cell instance at `asn`; returns whether the receiver is on.
    pub fn step(&mut self, asn: u64) -> bool {
        match self {
            RxPlan::On => true,
            RxPlan::Skip(n) => {
                *n -= 1;
                if *n == 0 {
                    *self = RxPlan::On;
                }
                false
            }
            RxPlan::Wakes(q) => {
                let Some(&front) = q.front() else {
                    *self = RxPlan::On;
                    return true;
                };
                if asn < front {
                    return false;
                }
                while q.front().is_some_and(|&w| w <= asn) {
                    q.pop_front();
                }
                if q.is_empty() {
                    *self = RxPlan::On;
                }
                true
            }
        }
    }

    /// Whether the instance at `asn` would be enabled, without visiting it.
    pub fn peek(&self, asn: u64) -> bool {
        match self {
            RxPlan::On => true,
            RxPlan::Skip(_) => false,
            RxPlan::Wakes(q) => q.front().map_or(true, |&w| asn >= w),
        }
    }

    /// First enabled instance at or after `from`, assuming nothing else
    /// changes the plan in between.
    pub fn next_on(&self, timetable: &LinkTimetable, from: u64) -> Option<u64> {
        match self {
            RxPlan::On => timetable.next_at_or_after(from),
            RxPlan::Skip(n) => timetable.nth_from(from, u64::from(*n)),
            RxPlan::Wakes(q) => timetable.next_at_or_after(q.front().map_or(from, |&w| from.max(w))),
        }
    }
}

/// Cell instances of a first-hop link that can be disabled after a delivery
/// in slot `delivery_asn`, given that no new packet can be sent before slot
/// `next_ready_asn` (the first slot starting at or after the next generation).
pub fn first_hop_sleep_count(timetable: &LinkTimetable, delivery_asn: u64, next_ready_asn: u64) -> u32 {
    let Some(earliest) = timetable.next_at_or_after(next_ready_asn) else {
        return 0;
    };
    timetable.count_in(delivery_asn + 1, earliest).min(u64::from(u32::MAX)) as u32
}

/// Command attached to a frame sent in slot `tx_asn` on a multi-hop link.
///
/// `anchor_asn` is the slot at which the most recent fastest-flow packet
/// entered the relay queue; `queue_len_after` is the number of packets left
/// behind the frame. Returns `None` when packets remain queued, when no
/// fastest-flow packet was ever seen, or when the budget is already spent.
pub fn multi_hop_sleep_command(
    cfg: &MultiHopConfig,
    anchor_asn: Option<u64>,
    tx_asn: u64,
    queue_len_after: usize,
) -> Option<SleepCommand> {
    if queue_len_after > 0 {
        return None;
    }
    let anchor = anchor_asn?;
    let now = tx_asn + 1;
    let mut first = (1..=cfg.r).find(|&i| anchor + cfg.wake_offset(i) > tx_asn)?;
    if u64::from(first) * cfg.t_act_slots >= cfg.t_min_slots {
        first = cfg.r;
    }
    let windows = cfg.r - first + 1;
    let until = anchor + cfg.wake_offset(first) - now;
    if windows == 1 && until == 0 {
        return None;
    }
    Some(SleepCommand::MultiHop {
        first_window_slots: u32::try_from(until).ok()?,
        windows,
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommandRejected {
    #[error("zero-length sleep command")]
    ZeroDuration,
    #[error("sleep command with zero windows")]
    ZeroWindows,
    #[error("multi-hop command on a link without a multi-hop configuration")]
    NotMultiHop,
    #[error("command requests {got} windows but the link is configured for {max}")]
    TooManyWindows { got: u8, max: u8 },
    #[error("command places its wake grid before the start of time")]
    BeforeEpoch,
}

/// Receiver plan for a command received in a slot ending at `now_asn`.
pub fn apply_sleep_command(
    cmd: SleepCommand,
    now_asn: u64,
    cfg: Option<&MultiHopConfig>,
) -> Result<RxPlan, CommandRejected> {
    match cmd {
        SleepCommand::FirstHopCount(0) => Err(CommandRejected::ZeroDuration),
        SleepCommand::FirstHopCount(n) => Ok(RxPlan::Skip(n)),
        SleepCommand::MultiHop { windows: 0, .. } => Err(CommandRejected::ZeroWindows),
        SleepCommand::MultiHop { first_window_slots: 0, windows: 1 } => Err(CommandRejected::ZeroDuration),
        SleepCommand::MultiHop { first_window_slots, windows } => {
            let cfg = cfg.ok_or(CommandRejected::NotMultiHop)?;
            if windows > cfg.r {
                return Err(CommandRejected::TooManyWindows { got: windows, max: cfg.r });
            }
            let first_wake = now_asn + u64::from(first_window_slots);
            if windows == 1 {
                return Ok(RxPlan::Wakes(VecDeque::from([first_wake])));
            }
            let first = cfg.r - windows + 1;
            let anchor = first_wake
                .checked_sub(u64::from(first) * cfg.t_act_slots)
                .ok_or(CommandRejected::BeforeEpoch)?;
            let mut wakes: VecDeque<u64> = VecDeque::with_capacity(usize::from(windows));
            for i in first..=cfg.r {
                let w = anchor + cfg.wake_offset(i);
                if wakes.back() != Some(&w) {
                    wakes.push_back(w);
                }
            }
            Ok(RxPlan::Wakes(wakes))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SLOT: u64 = 20_000;
    const SEC: u64 = 1_000_000;

    fn fig1_timetable(offset: u32) -> LinkTimetable {
        LinkTimetable::new(101, [offset])
    }

    #[test]
    fn t_min_picks_the_fastest_flow() {
        assert_eq!(t_min([("tau0", 60 * SEC), ("tau1", 600 * SEC)]), Some((60 * SEC, 0)));
        assert_eq!(t_min([("tau1", 600 * SEC)]), Some((600 * SEC, 0)));
        assert_eq!(t_min([("b", 60 * SEC), ("a", 60 * SEC)]), Some((60 * SEC, 1)));
        assert_eq!(t_min(std::iter::empty()), None);
    }

    #[test]
    fn t_act_examples() {
        assert_eq!(t_act_us(60 * SEC, 4, SLOT), Ok(15 * SEC));
        assert_eq!(t_act_us(60 * SEC, 1, SLOT), Ok(60 * SEC));
        assert_eq!(t_act_us(61 * SEC, 4, SLOT), Ok(15_260_000));
        assert_eq!(t_act_slots(61 * SEC, 4, SLOT), Ok(763));
        assert_eq!(t_act_us(60 * SEC, 0, SLOT), Err(PrilError::ZeroSubdivision));
    }

    #[test]
    fn multi_hop_config_respects_the_window_invariants() {
        for t_min_ms in [1_000u64, 2_020, 59_990, 60_000, 61_000, 600_000] {
            for r in 1..=12u8 {
                let cfg = MultiHopConfig::new(t_min_ms * 1000, r, SLOT).unwrap();
                assert!(u64::from(r) * cfg.t_act_slots >= cfg.t_min_slots);
                assert!(cfg.t_act_slots * SLOT <= t_min_ms * 1000 + SLOT * u64::from(r));
            }
        }
    }

    // Period of three slotframes, one cell per slotframe at offset 0.
    #[test]
    fn first_hop_count_examples() {
        let tt = fig1_timetable(0);
        let frame = 101u64;
        let gen = 0; // generated right at the first scheduled slot
        let next_ready = 3 * frame + gen;
        assert_eq!(first_hop_sleep_count(&tt, 0, next_ready), 2);
        assert_eq!(first_hop_sleep_count(&tt, frame, next_ready), 1);
        assert_eq!(first_hop_sleep_count(&tt, 0, frame), 0);
    }

    #[test]
    fn pril_m_without_drain_sleeps_a_full_period() {
        let cfg = MultiHopConfig::new(60 * SEC, 1, SLOT).unwrap();
        // zero drain: the anchor coincides with the end of the transmitting slot
        let cmd = multi_hop_sleep_command(&cfg, Some(11), 10, 0).unwrap();
        assert_eq!(cmd, SleepCommand::MultiHop { first_window_slots: 3000, windows: 1 });
    }

    #[test]
    fn pril_m_subtracts_the_drain_time() {
        let cfg = MultiHopConfig::new(60 * SEC, 1, SLOT).unwrap();
        // oracle: replay the drain slot by slot from the anchor
        let anchor = 500u64;
        let mut asn = anchor;
        let mut drained = 0u64;
        while drained < 2 {
            if asn % 101 == 2 {
                drained += 1;
            }
            asn += 1;
        }
        let tx = asn - 1;
        let elapsed_slots = tx + 1 - anchor;
        let expect = (60 * SEC) / SLOT - elapsed_slots;
        let cmd = multi_hop_sleep_command(&cfg, Some(anchor), tx, 0).unwrap();
        assert_eq!(cmd, SleepCommand::MultiHop { first_window_slots: expect as u32, windows: 1 });
        // two whole slotframes of drain leave 55.96 s
        let cmd = multi_hop_sleep_command(&cfg, Some(1000), 1000 + 202 - 1, 0).unwrap();
        assert_eq!(cmd, SleepCommand::MultiHop { first_window_slots: 2798, windows: 1 });
        assert_eq!(2798 * SLOT, 55_960_000);
    }

    #[test]
    fn pril_ml_splits_the_period() {
        let cfg = MultiHopConfig::new(60 * SEC, 4, SLOT).unwrap();
        let cmd = multi_hop_sleep_command(&cfg, Some(11), 10, 0).unwrap();
        assert_eq!(cmd, SleepCommand::MultiHop { first_window_slots: 750, windows: 4 });
        assert_eq!(750 * SLOT, 15 * SEC);
    }

    #[test]
    fn no_command_while_the_queue_is_not_empty_or_budget_is_spent() {
        let cfg = MultiHopConfig::new(60 * SEC, 1, SLOT).unwrap();
        assert_eq!(multi_hop_sleep_command(&cfg, Some(11), 10, 1), None);
        assert_eq!(multi_hop_sleep_command(&cfg, None, 10, 0), None);
        assert_eq!(multi_hop_sleep_command(&cfg, Some(0), 3000, 0), None);
        assert_eq!(multi_hop_sleep_command(&cfg, Some(0), 2999, 0), None);
    }

    #[test]
    fn receiver_rebuilds_the_transmitter_grid() {
        let cfg = MultiHopConfig::new(61 * SEC, 4, SLOT).unwrap();
        let anchor = 1_000u64;
        let grid: Vec<u64> = (1..=4).map(|i| anchor + cfg.wake_offset(i)).collect();
        assert_eq!(grid, vec![1763, 2526, 3289, 4050]);
        for tx in anchor..grid[3] {
            let Some(cmd) = multi_hop_sleep_command(&cfg, Some(anchor), tx, 0) else {
                assert_eq!(tx + 1, grid[3]);
                continue;
            };
            let RxPlan::Wakes(w) = apply_sleep_command(cmd, tx + 1, Some(&cfg)).unwrap() else {
                panic!("expected wake plan");
            };
            let pending: Vec<u64> = grid.iter().copied().filter(|&g| g > tx).collect();
            assert_eq!(Vec::from(w), pending, "tx={tx}");
        }
    }

    #[test]
    fn wake_plan_examples() {
        let cfg = MultiHopConfig::new(60 * SEC, 4, SLOT).unwrap();
        let plan = apply_sleep_command(
            SleepCommand::MultiHop { first_window_slots: 750, windows: 4 },
            0,
            Some(&cfg),
        )
        .unwrap();
        assert_eq!(plan, RxPlan::Wakes(VecDeque::from([750, 1500, 2250, 3000])));

        let mut skip = apply_sleep_command(SleepCommand::FirstHopCount(2), 0, None).unwrap();
        assert!(!skip.step(101));
        assert!(!skip.step(202));
        assert!(skip.step(303));
        assert_eq!(skip, RxPlan::On);
    }

    #[test]
    fn r_one_command_matches_pril_m() {
        let m = MultiHopConfig::new(60 * SEC, 1, SLOT).unwrap();
        let ml = MultiHopConfig::new(60 * SEC, Technique::PrilMl { r: 1 }.windows().unwrap(), SLOT).unwrap();
        assert_eq!(m, ml);
        let cmd = SleepCommand::MultiHop { first_window_slots: 3000, windows: 1 };
        assert_eq!(apply_sleep_command(cmd, 7, Some(&m)), apply_sleep_command(cmd, 7, Some(&ml)));
    }

    #[test]
    fn malformed_commands_are_rejected() {
        let cfg = MultiHopConfig::new(60 * SEC, 4, SLOT).unwrap();
        assert_eq!(
            apply_sleep_command(SleepCommand::FirstHopCount(0), 0, None),
            Err(CommandRejected::ZeroDuration)
        );
        assert_eq!(
            apply_sleep_command(SleepCommand::MultiHop { first_window_slots: 5, windows: 0 }, 0, Some(&cfg)),
            Err(CommandRejected::ZeroWindows)
        );
        assert_eq!(
            apply_sleep_command(SleepCommand::MultiHop { first_window_slots: 0, windows: 1 }, 0, Some(&cfg)),
            Err(CommandRejected::ZeroDuration)
        );
        assert_eq!(
            apply_sleep_command(SleepCommand::MultiHop { first_window_slots: 5, windows: 5 }, 0, Some(&cfg)),
            Err(CommandRejected::TooManyWindows { got: 5, max: 4 })
        );
        assert_eq!(
            apply_sleep_command(SleepCommand::MultiHop { first_window_slots: 5, windows: 1 }, 0, None),
            Err(CommandRejected::NotMultiHop)
        );
        assert_eq!(
            apply_sleep_command(SleepCommand::MultiHop { first_window_slots: 5, windows: 4 }, 0, Some(&cfg)),
            Err(CommandRejected::BeforeEpoch)
        );
    }

    #[test]
    fn wire_form_is_six_bytes_little_endian() {
        let cmd = SleepCommand::MultiHop { first_window_slots: 750, windows: 4 };
        assert_eq!(cmd.encode(), [2, 0xEE, 0x02, 0, 0, 4]);
        assert_eq!(SleepCommand::decode(&cmd.encode()), Some(cmd));
        let f = SleepCommand::FirstHopCount(2);
        assert_eq!(f.encode(), [1, 2, 0, 0, 0, 0]);
        assert_eq!(SleepCommand::decode(&f.encode()), Some(f));
        assert_eq!(SleepCommand::decode(&[9, 0, 0, 0, 0, 0]), None);
        assert_eq!(SleepCommand::decode(&[1, 0]), None);
    }

    #[test]
    fn next_on_agrees_with_stepping() {
        let tt = LinkTimetable::new(11, [2, 7]);
        let cfg = MultiHopConfig::new(400_000, 3, SLOT).unwrap();
        let plans = [
            RxPlan::On,
            RxPlan::Skip(3),
            apply_sleep_command(SleepCommand::MultiHop { first_window_slots: 4, windows: 3 }, 30, Some(&cfg)).unwrap(),
        ];
        for plan in plans {
            let from = 30;
            let predicted = plan.next_on(&tt, from).unwrap();
            let mut p = plan.clone();
            let mut asn = from;
            let found = loop {
                if tt.is_instance(asn) && p.step(asn) {
                    break asn;
                }
                asn += 1;
            };
            assert_eq!(predicted, found, "{plan:?}");
        }
    }
}
