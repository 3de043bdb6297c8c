//! TSCH MAC behaviour: per-link FIFO queues, slot decisions, lossy
//! transmission attempts with implicit in-slot acknowledgement.

use std::collections::{BTreeMap, VecDeque};

use crate::pril::RxPlan;
use crate::rng::{CounterRng, Stream};
use crate::schedule::{Cell, Link, NodeId};
use crate::traffic::Flow;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub flow: usize,
    pub seq: u64,
    pub generation_us: u64,
    /// Position in the flow path of the node currently holding the packet.
    pub hop: usize,
    /// Time the packet joined its current queue.
    pub enqueued_us: u64,
    /// Failed attempts on the current hop.
    pub retries: u32,
}

impl Packet {
    pub fn new(flow: usize, seq: u64, generation_us: u64) -> Self {
        Self { flow, seq, generation_us, hop: 0, enqueued_us: generation_us, retries: 0 }
    }

    fn order_key(&self) -> (u64, usize, u64) {
        (self.enqueued_us, self.flow, self.seq)
    }
}

/// First-in first-out by the time packets joined the queue.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PacketQueue {
    packets: VecDeque<Packet>,
}

impl PacketQueue {
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn front(&self) -> Option<&Packet> {
        self.packets.front()
    }

    pub fn front_mut(&mut self) -> Option<&mut Packet> {
        self.packets.front_mut()
    }

    pub fn pop_front(&mut self) -> Option<Packet> {
        self.packets.pop_front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.packets.iter()
    }

    /// Insert keeping arrival order; packets arriving at the same instant
    /// are ordered by flow position and sequence number.
    pub fn insert(&mut self, packet: Packet) {
        let key = packet.order_key();
        let pos = self.packets.partition_point(|p| p.order_key() <= key);
        self.packets.insert(pos, packet);
    }
}

/// Bernoulli loss per attempt, optionally per physical channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelModel {
    pub loss_probability: f64,
    pub per_channel: BTreeMap<u16, f64>,
}

impl ChannelModel {
    pub fn lossless() -> Self {
        Self::default()
    }

    pub fn with_loss(p: f64) -> Self {
        Self { loss_probability: p, per_channel: BTreeMap::new() }
    }

    pub fn loss_for(&self, channel: u16) -> f64 {
        self.per_channel.get(&channel).copied().unwrap_or(self.loss_probability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Delivered,
    Lost,
}

/// One attempt on `channel` in slot `asn` over the link with index
/// `link_index`. The draw is keyed by `(seed, asn, link_index)`.
pub fn attempt_transmission(
    model: &ChannelModel,
    rng: &CounterRng,
    asn: u64,
    link_index: u32,
    channel: u16,
) -> Outcome {
    let p = model.loss_for(channel);
    if p <= 0.0 {
        return Outcome::Delivered;
    }
    if rng.draw_unit(Stream::Loss, asn, link_index) < p {
        Outcome::Lost
    } else {
        Outcome::Delivered
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotAction {
    Transmit(Link),
    Listen(Link),
    /// A receive cell exists but PRIL has disabled it.
    Off(Link),
    Idle,
}

/// What the transmitter of a link knows at a cell instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkStatus {
    pub has_frame: bool,
    pub receiver_on: bool,
}

/// Decision of `node` in a slot whose active cells are `active`.
///
/// A transmitter holds back while the receiver is disabled: both ends share
/// the sleep plan, so a frame is never sent into a sleeping receiver.
pub fn slot_action(node: NodeId, active: &[&Cell], status: impl Fn(Link) -> LinkStatus) -> SlotAction {
    for cell in active {
        let link = cell.link;
        if link.tx == node {
            let s = status(link);
            return if s.has_frame && s.receiver_on { SlotAction::Transmit(link) } else { SlotAction::Idle };
        }
        if link.rx == node {
            return if status(link).receiver_on { SlotAction::Listen(link) } else { SlotAction::Off(link) };
        }
    }
    SlotAction::Idle
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// The packet reached its destination at the end of the slot.
    Destination { latency_us: u64 },
    /// The packet must be queued on the next hop.
    Relay { next: Link },
}

/// Where a packet received at the end of a slot (`slot_end_us`) goes next.
pub fn on_delivery(packet: &Packet, flow: &Flow, slot_end_us: u64) -> Delivery {
    let holder = packet.hop + 1;
    if holder + 1 >= flow.path.len() {
        Delivery::Destination { latency_us: slot_end_us - packet.generation_us }
    } else {
        Delivery::Relay { next: Link::new(flow.path[holder], flow.path[holder + 1]) }
    }
}

/// Dynamic state of one directed link.
#[derive(Debug, Clone, Default)]
pub struct LinkState {
    pub queue: PacketQueue,
    /// Receiver plan, mirrored on the transmitter.
    pub plan: RxPlan,
    /// When the last packet of the link's fastest flow entered the queue.
    pub anchor_us: Option<u64>,
}
