#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;
use tschsim::mac::ChannelModel;
use tschsim::metrics::EnergyModel;
use tschsim::pril::Technique;
use tschsim::report::RunReport;
use tschsim::scenario::{builtin, FlowSpec, NodeSpec, RunSettings, Scenario};
use tschsim::schedule::{Cell, Link, NodeId, Slotframe};

pub const SEC: u64 = 1_000_000;
pub const DAY: u64 = 86_400 * SEC;

/// Every rendered output of a report, for byte-level comparison.
pub fn outputs(r: &RunReport) -> String {
    format!("{}{}{}", r.power_csv(), r.latency_csv(), r.to_json())
}

pub fn fig1(name: &str, duration_us: u64) -> Scenario {
    let mut s = builtin(name).expect("built-in");
    s.run.duration_us = duration_us;
    s
}

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Raw numbers from which a small scenario is assembled.
#[derive(Debug, Clone)]
pub struct Blueprint {
    nodes: usize,
    parents: Vec<u32>,
    flows: Vec<(u32, u32, u32, u64, (u8, i64), (u8, u32))>,
    slot_choice: u8,
    extra_slots: u32,
    channel_offsets: u16,
    cell_bits: Vec<u32>,
    rotate: u32,
    hop_rotate: u16,
    loss_choice: u8,
    per_channel: Option<(u16, u8)>,
    retries: u8,
    cap: u8,
    duration_s: u64,
    warmup_choice: u8,
    seed: u64,
    idle_link: bool,
    cmd_energy: bool,
}

pub fn blueprint() -> impl Strategy<Value = Blueprint> {
    let flow = (0u32..1000, 0u32..1000, 0u32..4, 200u64..120_000, (0u8..3, -40_000i64..40_000), (0u8..3, 0u32..1000));
    (
        (2usize..=6, prop::collection::vec(0u32..1000, 6), prop::collection::vec(flow, 1..=4), 0u8..3, 0u32..12),
        (1u16..=16, prop::collection::vec(0u32..1_000_000, 12), 0u32..1000, 0u16..16, 0u8..5),
        (prop::option::of((0u16..16, 0u8..3)), 0u8..7, 0u8..12, 60u64..=7200, 0u8..4),
        (any::<u64>(), any::<bool>(), any::<bool>()),
    )
        .prop_map(|(a, b, c, d)| Blueprint {
            nodes: a.0,
            parents: a.1,
            flows: a.2,
            slot_choice: a.3,
            extra_slots: a.4,
            channel_offsets: b.0,
            cell_bits: b.1,
            rotate: b.2,
            hop_rotate: b.3,
            loss_choice: b.4,
            per_channel: c.0,
            retries: c.1,
            cap: c.2,
            duration_s: c.3,
            warmup_choice: c.4,
            seed: d.0,
            idle_link: d.1,
            cmd_energy: d.2,
        })
}

impl Blueprint {
    /// A valid scenario with at most six nodes, four flows and two hours.
    pub fn build(&self) -> Scenario {
        let n = self.nodes;
        let parent = |i: usize| (self.parents[i] as usize) % i;
        let nodes: Vec<NodeSpec> = (0..n)
            .map(|i| NodeSpec { name: format!("N{i}"), parent: (i > 0).then(|| NodeId(parent(i) as u32)) })
            .collect();

        let mut flows = Vec::new();
        for (k, &(src, depth, dir, period_ms, (drift_kind, drift), (phase_kind, phase))) in self.flows.iter().enumerate() {
            let source = 1 + (src as usize) % (n - 1);
            let mut up = vec![source];
            while let Some(&last) = up.last() {
                if last == 0 {
                    break;
                }
                up.push(parent(last));
            }
            let hops = 1 + (depth as usize) % (up.len() - 1);
            let mut path: Vec<usize> = up[..=hops].to_vec();
            if dir == 0 {
                path.reverse();
            }
            let period_us = period_ms * 1000;
            flows.push(FlowSpec {
                id: format!("f{k}"),
                path: path.into_iter().map(|i| NodeId(i as u32)).collect(),
                period_us,
                drift_ppb: (drift_kind > 0).then_some(drift),
                phase_us: (phase_kind > 0).then(|| period_us * u64::from(phase) / 1000),
                payload_bytes: 127,
            });
        }

        let mut links: Vec<Link> = Vec::new();
        for f in &flows {
            for w in f.path.windows(2) {
                let l = Link::new(w[0], w[1]);
                if !links.contains(&l) {
                    links.push(l);
                }
            }
        }
        if self.idle_link {
            let l = Link::new(NodeId(0), NodeId(1));
            if !links.contains(&l) {
                links.push(l);
            }
        }

        let mut cell_links = Vec::new();
        for (i, &l) in links.iter().enumerate() {
            let copies = 1 + (self.cell_bits[i % 12] % 2) as usize;
            cell_links.extend(std::iter::repeat(l).take(copies));
        }
        let num_slots = cell_links.len() as u32 + self.extra_slots;
        let cells: Vec<Cell> = cell_links
            .iter()
            .enumerate()
            .map(|(k, &link)| Cell {
                slot_offset: (k as u32 + self.rotate) % num_slots,
                channel_offset: (self.cell_bits[k % 12] / 7 % u32::from(self.channel_offsets)) as u16,
                link,
            })
            .collect();

        let mut scenario = Scenario {
            name: None,
            slotframe: Slotframe::new(
                num_slots,
                [10_000, 15_000, 20_000][self.slot_choice as usize],
                self.channel_offsets,
                (0..16).map(|i| 11 + (i + self.hop_rotate) % 16).collect(),
            )
            .expect("valid slotframe"),
            nodes,
            cells,
            flows,
            pril: Vec::new(),
            channel: ChannelModel {
                loss_probability: [0.0, 0.0, 0.05, 0.2, 0.5][self.loss_choice as usize],
                per_channel: BTreeMap::new(),
            },
            energy: EnergyModel {
                send_cmd_nj: self.cmd_energy.then_some(512_000),
                rec_cmd_nj: self.cmd_energy.then_some(690_000),
                ..EnergyModel::default()
            },
            run: RunSettings {
                duration_us: self.duration_s * SEC,
                seed: self.seed,
                warmup_us: self.duration_s * SEC * u64::from(self.warmup_choice) / 8,
                max_retries: (self.retries < 6).then_some(u32::from(self.retries)),
                queue_cap: (self.cap < 8).then_some(u32::from(self.cap) + 1),
            },
        };
        if let Some((ch, p)) = self.per_channel {
            scenario.channel.per_channel.insert(11 + ch, [0.0, 0.3, 1.0][p as usize]);
        }
        for (i, &l) in links.iter().enumerate() {
            if scenario.flows_on(l).is_empty() {
                continue;
            }
            let pick = self.cell_bits[(i + 5) % 12] / 2 % 5;
            let t = match pick {
                0 => Technique::None,
                1 if scenario.is_first_hop(l) => Technique::PrilF,
                1 | 2 => Technique::PrilM,
                _ => Technique::PrilMl { r: 1 + (self.cell_bits[(i + 7) % 12] % 8) as u8 },
            };
            if t != Technique::None {
                scenario.pril.push((l, t));
            }
        }
        let problems = scenario.validate();
        assert!(problems.is_empty(), "generated scenario is invalid: {problems:?}");
        scenario
    }
}

pub fn small_scenario() -> impl Strategy<Value = Scenario> {
    blueprint().prop_map(|b| b.build())
}
