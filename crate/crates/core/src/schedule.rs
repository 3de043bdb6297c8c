//! Slotframe matrix: cells, validation, and slot/channel arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Index of a node in the scenario's node list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Directed link: transmitter `tx`, receiver `rx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub tx: NodeId,
    pub rx: NodeId,
}

impl Link {
    pub fn new(tx: NodeId, rx: NodeId) -> Self {
        Self { tx, rx }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.tx.0, self.rx.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SlotframeError {
    #[error("slotframe must contain at least one slot")]
    NoSlots,
    #[error("slot duration must be positive")]
    ZeroSlotDuration,
    #[error("number of channel offsets must be in 1..=16, got {0}")]
    ChannelOffsets(u16),
    #[error("hop sequence has {len} entries but {needed} channel offsets are configured")]
    HopSequenceTooShort { len: usize, needed: u16 },
    #[error("hop sequence repeats channel {0}")]
    RepeatedChannel(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slotframe {
    num_slots: u32,
    slot_duration_us: u64,
    num_channel_offsets: u16,
    hop_sequence: Vec<u16>,
}

impl Slotframe {
    pub fn new(
        num_slots: u32,
        slot_duration_us: u64,
        num_channel_offsets: u16,
        hop_sequence: Vec<u16>,
    ) -> Result<Self, SlotframeError> {
        if num_slots == 0 {
            return Err(SlotframeError::NoSlots);
        }
        if slot_duration_us == 0 {
            return Err(SlotframeError::ZeroSlotDuration);
        }
        if num_channel_offsets == 0 || num_channel_offsets > 16 {
            return Err(SlotframeError::ChannelOffsets(num_channel_offsets));
        }
        if hop_sequence.len() < usize::from(num_channel_offsets) {
            return Err(SlotframeError::HopSequenceTooShort {
                len: hop_sequence.len(),
                needed: num_channel_offsets,
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for &ch in &hop_sequence {
            if !seen.insert(ch) {
                return Err(SlotframeError::RepeatedChannel(ch));
            }
        }
        Ok(Self {
            num_slots,
            slot_duration_us,
            num_channel_offsets,
            hop_sequence,
        })
    }

    /// 101 slots of 20 ms over the sixteen 2.4 GHz channels 11..=26.
    pub fn standard() -> Self {
        Self::new(101, 20_000, 16, (11..=26).collect()).expect("valid default slotframe")
    }

    pub fn num_slots(&self) -> u32 {
        self.num_slots
    }

    pub fn slot_duration_us(&self) -> u64 {
        self.slot_duration_us
    }

    pub fn num_channel_offsets(&self) -> u16 {
        self.num_channel_offsets
    }

    pub fn hop_sequence(&self) -> &[u16] {
        &self.hop_sequence
    }

    pub fn period_us(&self) -> u64 {
        u64::from(self.num_slots) * self.slot_duration_us
    }

    pub fn slot_start_us(&self, asn: u64) -> u64 {
        asn * self.slot_duration_us
    }

    /// First ASN whose slot starts at or after `t_us`.
    pub fn asn_at_or_after(&self, t_us: u64) -> u64 {
        t_us.div_ceil(self.slot_duration_us)
    }

    /// ASN of the slot containing `t_us`.
    pub fn asn_containing(&self, t_us: u64) -> u64 {
        t_us / self.slot_duration_us
    }

    pub fn slot_offset(&self, asn: u64) -> u32 {
        (asn % u64::from(self.num_slots)) as u32
    }

    /// `hop_sequence[(asn + channel_offset) mod len]`.
    pub fn physical_channel(&self, asn: u64, channel_offset: u16) -> u16 {
        debug_assert!(channel_offset < self.num_channel_offsets);
        let len = self.hop_sequence.len() as u64;
        let idx = (asn % len + u64::from(channel_offset)) % len;
        self.hop_sequence[idx as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub slot_offset: u32,
    pub channel_offset: u16,
    pub link: Link,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SlotOutOfRange { cell: usize, slot_offset: u32 },
    ChannelOffsetOutOfRange { cell: usize, channel_offset: u16 },
    SelfLink { cell: usize },
    DuplicateCoordinate { slot_offset: u32, channel_offset: u16, cells: Vec<usize> },
    HalfDuplex { slot_offset: u32, node: NodeId, cells: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SlotOutOfRange { cell, slot_offset } => {
                write!(f, "cell #{cell}: slot offset {slot_offset} out of range")
            }
            Violation::ChannelOffsetOutOfRange { cell, channel_offset } => {
                write!(f, "cell #{cell}: channel offset {channel_offset} out of range")
            }
            Violation::SelfLink { cell } => write!(f, "cell #{cell}: transmitter equals receiver"),
            Violation::DuplicateCoordinate { slot_offset, channel_offset, cells } => write!(
                f,
                "duplicate coordinate (slot {slot_offset}, offset {channel_offset}) used by cells {cells:?}"
            ),
            Violation::HalfDuplex { slot_offset, node, cells } => write!(
                f,
                "node {} appears in several cells of slot {slot_offset}: {cells:?}",
                node.0
            ),
        }
    }
}

/// Every violated cell invariant; an empty list means the schedule is valid.
pub fn validate_schedule(cells: &[Cell], frame: &Slotframe) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut coords: BTreeMap<(u32, u16), Vec<usize>> = BTreeMap::new();
    let mut busy: BTreeMap<(u32, NodeId), Vec<usize>> = BTreeMap::new();
    for (i, cell) in cells.iter().enumerate() {
        if cell.slot_offset >= frame.num_slots() {
            out.push(Violation::SlotOutOfRange { cell: i, slot_offset: cell.slot_offset });
        }
        if cell.channel_offset >= frame.num_channel_offsets() {
            out.push(Violation::ChannelOffsetOutOfRange {
                cell: i,
                channel_offset: cell.channel_offset,
            });
        }
        if cell.link.tx == cell.link.rx {
            out.push(Violation::SelfLink { cell: i });
        }
        coords.entry((cell.slot_offset, cell.channel_offset)).or_default().push(i);
        busy.entry((cell.slot_offset, cell.link.tx)).or_default().push(i);
        if cell.link.rx != cell.link.tx {
            busy.entry((cell.slot_offset, cell.link.rx)).or_default().push(i);
        }
    }
    for ((slot_offset, channel_offset), ids) in coords {
        if ids.len() > 1 {
            out.push(Violation::DuplicateCoordinate { slot_offset, channel_offset, cells: ids });
        }
    }
    for ((slot_offset, node), ids) in busy {
        if ids.len() > 1 {
            out.push(Violation::HalfDuplex { slot_offset, node, cells: ids });
        }
    }
    out
}

/// Cells active at `asn`, ordered by channel offset.
pub fn cells_in_slot<'a>(cells: &'a [Cell], frame: &Slotframe, asn: u64) -> Vec<&'a Cell> {
    let offset = frame.slot_offset(asn);
    let mut active: Vec<&Cell> = cells.iter().filter(|c| c.slot_offset == offset).collect();
    active.sort_by_key(|c| c.channel_offset);
    active
}

/// Repetitions of one link's cells over absolute slot numbers.
///
/// All queries are closed-form, which lets the engine account for long
/// idle spans without visiting each cell instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkTimetable {
    num_slots: u64,
    offsets: Vec<u32>,
}

impl LinkTimetable {
    /// `offsets` need not be sorted; duplicates are dropped.
    pub fn new(num_slots: u32, offsets: impl IntoIterator<Item = u32>) -> Self {
        let mut offsets: Vec<u32> = offsets.into_iter().collect();
        offsets.sort_unstable();
        offsets.dedup();
        Self { num_slots: u64::from(num_slots), offsets }
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    pub fn is_instance(&self, asn: u64) -> bool {
        self.offsets.binary_search(&((asn % self.num_slots) as u32)).is_ok()
    }

    /// Number of instances with ASN strictly below `asn`.
    fn rank(&self, asn: u64) -> u64 {
        let per_frame = self.offsets.len() as u64;
        let frame = asn / self.num_slots;
        let rem = (asn % self.num_slots) as u32;
        frame * per_frame + self.offsets.partition_point(|&o| o < rem) as u64
    }

    fn instance(&self, rank: u64) -> u64 {
        let per_frame = self.offsets.len() as u64;
        (rank / per_frame) * self.num_slots + u64::from(self.offsets[(rank % per_frame) as usize])
    }

    /// Instances with ASN in `[from, to)`.
    pub fn count_in(&self, from: u64, to: u64) -> u64 {
        if self.offsets.is_empty() || to <= from {
            return 0;
        }
        self.rank(to) - self.rank(from)
    }

    /// The `n`-th instance (0-based) at or after `from`.
    pub fn nth_from(&self, from: u64, n: u64) -> Option<u64> {
        if self.offsets.is_empty() {
            return None;
        }
        Some(self.instance(self.rank(from) + n))
    }

    pub fn next_at_or_after(&self, from: u64) -> Option<u64> {
        self.nth_from(from, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(tx: u32, rx: u32) -> Link {
        Link::new(NodeId(tx), NodeId(rx))
    }

    fn fig1_cells() -> Vec<Cell> {
        vec![
            Cell { slot_offset: 0, channel_offset: 0, link: link(2, 1) },
            Cell { slot_offset: 1, channel_offset: 0, link: link(3, 1) },
            Cell { slot_offset: 2, channel_offset: 0, link: link(1, 0) },
        ]
    }

    #[test]
    fn slotframe_period_is_two_point_oh_two_seconds() {
        assert_eq!(Slotframe::standard().period_us(), 2_020_000);
    }

    #[test]
    fn slotframe_rejects_bad_parameters() {
        assert_eq!(Slotframe::new(0, 1, 1, vec![11]), Err(SlotframeError::NoSlots));
        assert_eq!(Slotframe::new(1, 0, 1, vec![11]), Err(SlotframeError::ZeroSlotDuration));
        assert_eq!(Slotframe::new(1, 1, 17, (0..17).collect()), Err(SlotframeError::ChannelOffsets(17)));
        assert_eq!(
            Slotframe::new(1, 1, 2, vec![11]),
            Err(SlotframeError::HopSequenceTooShort { len: 1, needed: 2 })
        );
        assert_eq!(Slotframe::new(1, 1, 1, vec![11, 11]), Err(SlotframeError::RepeatedChannel(11)));
    }

    #[test]
    fn fig1_schedule_is_valid() {
        assert!(validate_schedule(&fig1_cells(), &Slotframe::standard()).is_empty());
        assert!(validate_schedule(&[], &Slotframe::standard()).is_empty());
    }

    #[test]
    fn duplicate_coordinate_is_reported() {
        let cells = vec![
            Cell { slot_offset: 0, channel_offset: 0, link: link(2, 1) },
            Cell { slot_offset: 0, channel_offset: 0, link: link(4, 5) },
        ];
        let v = validate_schedule(&cells, &Slotframe::standard());
        assert_eq!(
            v,
            vec![Violation::DuplicateCoordinate { slot_offset: 0, channel_offset: 0, cells: vec![0, 1] }]
        );
    }

    #[test]
    fn half_duplex_and_range_violations() {
        let cells = vec![
            Cell { slot_offset: 4, channel_offset: 0, link: link(2, 1) },
            Cell { slot_offset: 4, channel_offset: 1, link: link(1, 0) },
            Cell { slot_offset: 200, channel_offset: 16, link: link(3, 3) },
        ];
        let v = validate_schedule(&cells, &Slotframe::standard());
        assert!(v.contains(&Violation::HalfDuplex { slot_offset: 4, node: NodeId(1), cells: vec![0, 1] }));
        assert!(v.contains(&Violation::SlotOutOfRange { cell: 2, slot_offset: 200 }));
        assert!(v.contains(&Violation::ChannelOffsetOutOfRange { cell: 2, channel_offset: 16 }));
        assert!(v.contains(&Violation::SelfLink { cell: 2 }));
    }

    #[test]
    fn cells_in_slot_wraps_around_the_slotframe() {
        let frame = Slotframe::standard();
        let cells = fig1_cells();
        // independent check: scan every offset and compare with asn mod 101
        for asn in [0u64, 1, 2, 5, 101, 103, 10_100_002] {
            let expect: Vec<&Cell> = (0..frame.num_slots())
                .filter(|&o| u64::from(o) == asn % 101)
                .flat_map(|o| cells.iter().filter(move |c| c.slot_offset == o))
                .collect();
            assert_eq!(cells_in_slot(&cells, &frame, asn), expect);
        }
        assert_eq!(cells_in_slot(&cells, &frame, 103), vec![&cells[2]]);
        assert!(cells_in_slot(&cells, &frame, 5).is_empty());
        assert!(cells_in_slot(&[], &frame, 0).is_empty());
    }

    #[test]
    fn physical_channel_examples() {
        let frame = Slotframe::standard();
        assert_eq!(frame.physical_channel(0, 0), 11);
        assert_eq!(frame.physical_channel(101, 0), 16);
        assert_eq!(frame.physical_channel(0, 3), 14);
    }

    #[test]
    fn a_cell_visits_every_channel_over_sixteen_slotframes() {
        let frame = Slotframe::standard();
        let mut seen: Vec<u16> = (0..16u64).map(|k| frame.physical_channel(2 + 101 * k, 0)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (11..=26).collect::<Vec<_>>());
    }

    #[test]
    fn timetable_matches_a_brute_force_scan() {
        let tt = LinkTimetable::new(7, [5, 1, 1, 3]);
        let instances: Vec<u64> = (0..200).filter(|&a| [1, 3, 5].contains(&(a % 7))).collect();
        for from in 0..120u64 {
            for to in from..150 {
                let brute = instances.iter().filter(|&&a| a >= from && a < to).count() as u64;
                assert_eq!(tt.count_in(from, to), brute, "[{from},{to})");
            }
            let after: Vec<u64> = instances.iter().copied().filter(|&a| a >= from).collect();
            for n in 0..10 {
                assert_eq!(tt.nth_from(from, n as u64), Some(after[n]));
            }
            assert_eq!(tt.is_instance(from), instances.contains(&from));
        }
        assert_eq!(LinkTimetable::new(7, []).next_at_or_after(3), None);
    }
}
