//! Event-driven simulation.
//!
//! Only slots in which something can change are visited: packet
//! availability and enabled cell instances of links with queued frames.
//! Idle listening and disabled instances between events are accounted in
//! closed form from the link timetables.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::network::{Network, RunState};
use crate::pril::RxPlan;
use crate::report::RunReport;
use crate::scenario::Scenario;

const GENERATION: u8 = 0;
const LINK: u8 = 1;

struct Engine<'a> {
    net: &'a Network,
    state: RunState,
    events: BinaryHeap<Reverse<(u64, u8, usize)>>,
    /// Slots of each link already accounted for.
    accounted: Vec<u64>,
    /// Pending link event; older heap entries are stale.
    scheduled: Vec<Option<u64>>,
    next_seq: Vec<u64>,
}

impl<'a> Engine<'a> {
    fn new(net: &'a Network) -> Self {
        let mut e = Engine {
            net,
            state: RunState::new(net),
            events: BinaryHeap::new(),
            accounted: vec![0; net.links.len()],
            scheduled: vec![None; net.links.len()],
            next_seq: vec![0; net.flows.len()],
        };
        for f in 0..net.flows.len() {
            e.push_generation(f);
        }
        e
    }

    /// Queue the availability event of the flow's next packet, or count the
    /// remaining generations if they fall past the last whole slot.
    fn push_generation(&mut self, f: usize) {
        let flow = &self.net.flows[f];
        loop {
            let t = flow.generation_time(self.next_seq[f]);
            if t >= self.net.duration_us {
                return;
            }
            let avail = self.net.available_asn(t);
            if avail < self.net.horizon_asn {
                self.events.push(Reverse((avail, GENERATION, f)));
                return;
            }
            self.state.generate_late();
            self.next_seq[f] += 1;
        }
    }

    fn schedule(&mut self, link: usize, from: u64) {
        let tt = &self.net.links[link].timetable;
        self.scheduled[link] = match self.state.links[link].plan.next_on(tt, from) {
            Some(c) if c < self.net.horizon_asn => {
                self.events.push(Reverse((c, LINK, link)));
                Some(c)
            }
            _ => None,
        };
    }

    /// Advance the link's plan over its instances in `[accounted, to)`,
    /// charging each enabled one as idle listening. Only valid while the
    /// link has nothing it could send in that span.
    fn catch_up(&mut self, link: usize, to: u64) {
        let mut a = self.accounted[link];
        if to <= a {
            return;
        }
        let tt = &self.net.links[link].timetable;
        let w0 = self.net.warmup_asn;
        let mut idle = 0;
        loop {
            let plan = &mut self.state.links[link].plan;
            match plan {
                RxPlan::On => {
                    idle += tt.count_in(a.max(w0), to);
                    break;
                }
                RxPlan::Skip(n) => {
                    let n = u64::from(*n);
                    let available = tt.count_in(a, to);
                    if available < n {
                        *plan = RxPlan::Skip((n - available) as u32);
                        break;
                    }
                    let last = tt.nth_from(a, n - 1).expect("instances counted");
                    *plan = RxPlan::On;
                    a = last + 1;
                }
                RxPlan::Wakes(q) => {
                    let from = q.front().map_or(a, |&w| a.max(w));
                    match tt.next_at_or_after(from) {
                        Some(i) if i < to => {
                            plan.step(i);
                            if i >= w0 {
                                idle += 1;
                            }
                            a = i + 1;
                        }
                        _ => break,
                    }
                }
            }
        }
        self.state.charge_idle(self.net, link, idle);
        self.accounted[link] = to;
    }

    fn on_generation(&mut self, asn: u64, f: usize) {
        let net = self.net;
        let flow = &net.flows[f];
        loop {
            let seq = self.next_seq[f];
            let t = flow.generation_time(seq);
            if t >= net.duration_us || net.available_asn(t) != asn {
                break;
            }
            let link = net.flow_links[f][0];
            if self.state.links[link].queue.is_empty() {
                self.catch_up(link, asn);
            }
            self.state.generate(net, f, seq, t);
            if self.scheduled[link].is_none() && !self.state.links[link].queue.is_empty() {
                self.schedule(link, asn);
            }
            self.next_seq[f] += 1;
        }
        self.push_generation(f);
    }

    fn on_link(&mut self, asn: u64, link: usize) {
        if self.scheduled[link] != Some(asn) {
            return;
        }
        self.scheduled[link] = None;
        self.catch_up(link, asn);
        let on = self.state.links[link].plan.step(asn);
        debug_assert!(on, "link events land on enabled instances");
        self.accounted[link] = asn + 1;
        if let Some(relay) = self.state.transmit(self.net, link, asn) {
            let next = relay.link;
            if self.state.links[next].queue.is_empty() {
                self.catch_up(next, asn + 1);
            }
            self.state.enqueue(self.net, next, relay.packet);
            if self.scheduled[next].is_none() && !self.state.links[next].queue.is_empty() {
                self.schedule(next, asn + 1);
            }
        }
        if !self.state.links[link].queue.is_empty() {
            self.schedule(link, asn + 1);
        }
    }

    fn run(mut self) -> RunState {
        while let Some(Reverse((asn, kind, idx))) = self.events.pop() {
            if kind == GENERATION {
                self.on_generation(asn, idx);
            } else {
                self.on_link(asn, idx);
            }
        }
        for link in 0..self.net.links.len() {
            self.catch_up(link, self.net.horizon_asn);
        }
        self.state.finish();
        self.state
    }
}

/// Simulate a compiled network and return the final state.
pub fn run_network(net: &Network) -> RunState {
    Engine::new(net).run()
}

/// Simulate a validated scenario.
pub fn run(scenario: &Scenario) -> RunReport {
    let net = Network::compile(scenario);
    let state = run_network(&net);
    RunReport::build(&net, &state)
}
