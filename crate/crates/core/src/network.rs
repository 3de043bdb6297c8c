//! Compiled run configuration and the per-run state shared by the
//! event-driven engine and the slot-by-slot oracle.
//!
//! Both simulators agree on what happens inside a single cell instance by
//! going through [`RunState::transmit`]; they differ only in how they walk
//! time.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::mac::{attempt_transmission, on_delivery, ChannelModel, Delivery, LinkState, Outcome, Packet};
use crate::metrics::{EnergyAccount, EnergyEvent, EnergyModel, FrameKind};
use crate::pril::{
    apply_sleep_command, first_hop_sleep_count, multi_hop_sleep_command, t_min, MultiHopConfig, RxPlan,
    SleepCommand, Technique,
};
use crate::rng::CounterRng;
use crate::scenario::Scenario;
use crate::schedule::{Cell, Link, LinkTimetable, Slotframe};
use crate::traffic::Flow;

/// IEEE 802.15.4 `macMaxFrameRetries` default.
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone)]
pub struct LinkInfo {
    pub link: Link,
    pub name: String,
    pub timetable: LinkTimetable,
    /// Slot offset to channel offset for this link's cells.
    pub choffsets: BTreeMap<u32, u16>,
    pub technique: Technique,
    pub multi_hop: Option<MultiHopConfig>,
    /// Position of the fastest flow crossing the link.
    pub fastest_flow: Option<usize>,
    pub flows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub frame: Slotframe,
    pub cells: Vec<Cell>,
    pub node_names: Vec<String>,
    pub links: Vec<LinkInfo>,
    pub flows: Vec<Flow>,
    /// Link index of every hop of every flow.
    pub flow_links: Vec<Vec<usize>>,
    pub rng: CounterRng,
    pub seed: u64,
    pub energy: EnergyModel,
    pub channel: ChannelModel,
    pub duration_us: u64,
    pub warmup_us: u64,
    /// Number of whole slots simulated.
    pub horizon_asn: u64,
    /// First slot whose energy and idle listening are accounted.
    pub warmup_asn: u64,
    pub max_retries: u32,
    pub queue_cap: Option<usize>,
}

impl Network {
    /// Build from a validated scenario.
    pub fn compile(s: &Scenario) -> Network {
        let flows = s.resolved_flows();
        let slot_us = s.slotframe.slot_duration_us();
        let links: Vec<LinkInfo> = s
            .links()
            .into_iter()
            .map(|link| {
                let cells = s.cells.iter().filter(|c| c.link == link);
                let choffsets: BTreeMap<u32, u16> = cells.map(|c| (c.slot_offset, c.channel_offset)).collect();
                let timetable = LinkTimetable::new(s.slotframe.num_slots(), choffsets.keys().copied());
                let on_link = s.flows_on(link);
                let fastest = t_min(on_link.iter().map(|&f| (flows[f].id.as_str(), flows[f].nominal_period_us)));
                let technique = if on_link.is_empty() { Technique::None } else { s.technique(link) };
                let multi_hop = match (technique.windows(), fastest) {
                    (Some(r), Some((period, _))) => MultiHopConfig::new(period, r, slot_us).ok(),
                    _ => None,
                };
                LinkInfo {
                    link,
                    name: s.link_name(link),
                    timetable,
                    choffsets,
                    technique,
                    multi_hop,
                    fastest_flow: fastest.map(|(_, i)| on_link[i]),
                    flows: on_link,
                }
            })
            .collect();
        let index_of = |l: Link| links.iter().position(|i| i.link == l).expect("every hop has a cell");
        let flow_links = flows
            .iter()
            .map(|f| f.path.windows(2).map(|w| index_of(Link::new(w[0], w[1]))).collect())
            .collect();
        Network {
            frame: s.slotframe.clone(),
            cells: s.cells.clone(),
            node_names: s.nodes.iter().map(|n| n.name.clone()).collect(),
            flow_links,
            links,
            flows,
            rng: CounterRng::new(s.run.seed),
            seed: s.run.seed,
            energy: s.energy,
            channel: s.channel.clone(),
            duration_us: s.run.duration_us,
            warmup_us: s.run.warmup_us,
            horizon_asn: s.run.duration_us / slot_us,
            warmup_asn: s.run.warmup_us.div_ceil(slot_us),
            max_retries: s.run.max_retries.unwrap_or(DEFAULT_MAX_RETRIES),
            queue_cap: s.run.queue_cap.map(|c| c as usize),
        }
    }

    pub fn slot_us(&self) -> u64 {
        self.frame.slot_duration_us()
    }

    /// Slot in which a packet generated at `t_us` can first be sent.
    pub fn available_asn(&self, t_us: u64) -> u64 {
        self.frame.asn_at_or_after(t_us)
    }

    fn channel_offset(&self, link: usize, asn: u64) -> u16 {
        self.links[link].choffsets[&self.frame.slot_offset(asn)]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub generated: u64,
    pub delivered: u64,
    /// Packets still queued at the end, or generated too late to be sent.
    pub in_flight: u64,
    pub dropped_retry: u64,
    pub dropped_overflow: u64,
    pub attempts: u64,
    pub lost: u64,
    /// Sleep commands that reached their receiver and were applied.
    pub commands: u64,
    pub ignored_commands: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    pub attempts: u64,
    pub delivered: u64,
    pub lost: u64,
    pub commands: u64,
    pub ignored_commands: u64,
    /// Enabled receive instances with nothing to receive, after warm-up.
    pub idle_listens: u64,
    pub max_queue: u64,
    pub max_wait_us: u64,
}

/// A frame that reached a relay and must join the queue of `link`.
#[derive(Debug)]
pub struct Relay {
    pub link: usize,
    pub packet: Packet,
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub links: Vec<LinkState>,
    pub energy: Vec<EnergyAccount>,
    /// End-to-end delays per flow, for packets generated after warm-up.
    pub latencies: Vec<Vec<u64>>,
    pub counters: Counters,
    pub link_stats: Vec<LinkStats>,
    /// Generations that fall in the final partial slot.
    pub late: u64,
}

impl RunState {
    pub fn new(net: &Network) -> Self {
        Self {
            links: vec![LinkState::default(); net.links.len()],
            energy: vec![EnergyAccount::default(); net.node_names.len()],
            latencies: vec![Vec::new(); net.flows.len()],
            counters: Counters::default(),
            link_stats: vec![LinkStats::default(); net.links.len()],
            late: 0,
        }
    }

    /// Queue `packet` on `link`; returns false if it was dropped.
    pub fn enqueue(&mut self, net: &Network, link: usize, packet: Packet) -> bool {
        let state = &mut self.links[link];
        if net.queue_cap.is_some_and(|cap| state.queue.len() >= cap) {
            self.counters.dropped_overflow += 1;
            return false;
        }
        if net.links[link].fastest_flow == Some(packet.flow) {
            state.anchor_us = Some(packet.enqueued_us);
        }
        state.queue.insert(packet);
        let stats = &mut self.link_stats[link];
        stats.max_queue = stats.max_queue.max(state.queue.len() as u64);
        true
    }

    /// Record the generation of packet `seq` of `flow`; returns the first-hop
    /// link index if the packet was queued.
    pub fn generate(&mut self, net: &Network, flow: usize, seq: u64, t_us: u64) -> Option<usize> {
        self.counters.generated += 1;
        let link = net.flow_links[flow][0];
        self.enqueue(net, link, Packet::new(flow, seq, t_us)).then_some(link)
    }

    /// A generation inside the final partial slot: counted, never sent.
    pub fn generate_late(&mut self) {
        self.counters.generated += 1;
        self.late += 1;
    }

    /// Charge `count` idle receive instances on `link`.
    pub fn charge_idle(&mut self, net: &Network, link: usize, count: u64) {
        if count == 0 {
            return;
        }
        self.energy[net.links[link].link.rx.index()].charge(EnergyEvent::IdleListened, count);
        self.link_stats[link].idle_listens += count;
    }

    fn sleep_command(&self, net: &Network, link: usize, asn: u64) -> Option<SleepCommand> {
        let info = &net.links[link];
        let state = &self.links[link];
        let remaining = state.queue.len() - 1;
        match info.technique {
            Technique::None => None,
            Technique::PrilF => {
                if remaining > 0 {
                    return None;
                }
                let now_us = net.frame.slot_start_us(asn);
                let next = info.flows.iter().map(|&f| net.flows[f].next_generation(now_us)).min()?;
                let count = first_hop_sleep_count(&info.timetable, asn, net.available_asn(next));
                (count > 0).then_some(SleepCommand::FirstHopCount(count))
            }
            Technique::PrilM | Technique::PrilMl { .. } => {
                let cfg = info.multi_hop.as_ref()?;
                let anchor = state.anchor_us.map(|t| net.frame.asn_containing(t));
                multi_hop_sleep_command(cfg, anchor, asn, remaining)
            }
        }
    }

    /// One attempt on `link` at the enabled cell instance `asn`; the queue
    /// must be non-empty. Returns a frame to be queued further along its path.
    pub fn transmit(&mut self, net: &Network, link: usize, asn: u64) -> Option<Relay> {
        let info = &net.links[link];
        let cmd = self.sleep_command(net, link, asn);
        let kind = if cmd.is_some() { FrameKind::Command } else { FrameKind::Data };
        if asn >= net.warmup_asn {
            self.energy[info.link.tx.index()].charge(EnergyEvent::Sent(kind), 1);
            self.energy[info.link.rx.index()].charge(EnergyEvent::Received(kind), 1);
        }
        self.counters.attempts += 1;
        self.link_stats[link].attempts += 1;

        let channel = net.frame.physical_channel(asn, net.channel_offset(link, asn));
        let state = &mut self.links[link];
        if attempt_transmission(&net.channel, &net.rng, asn, link as u32, channel) == Outcome::Lost {
            self.counters.lost += 1;
            self.link_stats[link].lost += 1;
            let front = state.queue.front_mut().expect("transmit needs a queued frame");
            front.retries += 1;
            if front.retries > net.max_retries {
                state.queue.pop_front();
                self.counters.dropped_retry += 1;
            }
            return None;
        }

        let mut packet = state.queue.pop_front().expect("transmit needs a queued frame");
        let stats = &mut self.link_stats[link];
        stats.delivered += 1;
        stats.max_wait_us = stats.max_wait_us.max(net.frame.slot_start_us(asn) - packet.enqueued_us);
        // A frame without a command implies more may follow: stay awake.
        state.plan = RxPlan::On;
        if let Some(cmd) = cmd {
            match apply_sleep_command(cmd, asn + 1, info.multi_hop.as_ref()) {
                Ok(plan) => {
                    state.plan = plan;
                    self.counters.commands += 1;
                    stats.commands += 1;
                }
                Err(_) => {
                    self.counters.ignored_commands += 1;
                    stats.ignored_commands += 1;
                }
            }
        }

        let slot_end = net.frame.slot_start_us(asn + 1);
        match on_delivery(&packet, &net.flows[packet.flow], slot_end) {
            Delivery::Destination { latency_us } => {
                self.counters.delivered += 1;
                if packet.generation_us >= net.warmup_us {
                    self.latencies[packet.flow].push(latency_us);
                }
                None
            }
            Delivery::Relay { .. } => {
                packet.hop += 1;
                packet.enqueued_us = slot_end;
                packet.retries = 0;
                Some(Relay { link: net.flow_links[packet.flow][packet.hop], packet })
            }
        }
    }

    /// Close the books: in-flight packets are those still queued plus those
    /// generated in the final partial slot.
    pub fn finish(&mut self) {
        let queued: u64 = self.links.iter().map(|l| l.queue.len() as u64).sum();
        self.counters.in_flight = queued + self.late;
    }
}
