//! Scenario documents: parsing, validation, rendering, and built-ins.
//!
//! Scenarios are TOML. Durations accept either a number of seconds or a
//! string with a unit suffix (`us`, `ms`, `s`, `min`, `h`, `d`, `y`, where
//! one year is exactly 365 days); they are normalised to integer
//! microseconds on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mac::ChannelModel;
use crate::metrics::EnergyModel;
use crate::pril::Technique;
use crate::rng::{CounterRng, Stream};
use crate::schedule::{validate_schedule, Cell, Link, NodeId, Slotframe};
use crate::traffic::Flow;

/// Upper bound of the default per-flow drift, in parts per billion.
pub const DEFAULT_DRIFT_BOUND_PPB: i64 = 40_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub name: String,
    pub parent: Option<NodeId>,
}

/// Flow as declared; drift and phase default to seed-derived values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSpec {
    pub id: String,
    pub path: Vec<NodeId>,
    pub period_us: u64,
    pub drift_ppb: Option<i64>,
    pub phase_us: Option<u64>,
    pub payload_bytes: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSettings {
    pub duration_us: u64,
    pub seed: u64,
    pub warmup_us: u64,
    /// Failed attempts tolerated per hop before a packet is dropped.
    pub max_retries: Option<u32>,
    pub queue_cap: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub slotframe: Slotframe,
    pub nodes: Vec<NodeSpec>,
    pub cells: Vec<Cell>,
    pub flows: Vec<FlowSpec>,
    /// Per-link technique; links not listed run plain TSCH.
    pub pril: Vec<(Link, Technique)>,
    pub channel: ChannelModel,
    pub energy: EnergyModel,
    pub run: RunSettings,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub context: String,
    pub message: String,
}

impl Problem {
    fn new(context: impl Into<String>, message: impl Into<String>) -> Self {
        Self { context: context.into(), message: message.into() }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.context, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario is not valid TOML: {0}")]
    Syntax(String),
    #[error("invalid scenario:\n{}", format_problems(.0))]
    Invalid(Vec<Problem>),
}

impl ScenarioError {
    pub fn problems(&self) -> &[Problem] {
        match self {
            ScenarioError::Invalid(p) => p,
            ScenarioError::Syntax(_) => &[],
        }
    }
}

fn format_problems(problems: &[Problem]) -> String {
    problems.iter().map(|p| format!("  - {p}")).collect::<Vec<_>>().join("\n")
}

/// Scheduling technique applied uniformly by the `--technique` override.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Tsch,
    /// PRIL-F on first hops, PRIL-M elsewhere.
    PrilM,
    /// PRIL-F on first hops, PRIL-ML with the given `r` elsewhere.
    PrilMl(u8),
}

impl Scenario {
    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].name
    }

    pub fn link_name(&self, link: Link) -> String {
        format!("{}->{}", self.node_name(link.tx), self.node_name(link.rx))
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(|i| NodeId(i as u32))
    }

    /// Distinct links in order of first appearance in the cell list.
    pub fn links(&self) -> Vec<Link> {
        let mut seen = BTreeSet::new();
        self.cells.iter().map(|c| c.link).filter(|l| seen.insert(*l)).collect()
    }

    /// Positions of the flows that traverse `link.tx` and then `link.rx`.
    pub fn flows_on(&self, link: Link) -> Vec<usize> {
        self.flows
            .iter()
            .enumerate()
            .filter(|(_, f)| f.path.windows(2).any(|w| w[0] == link.tx && w[1] == link.rx))
            .map(|(i, _)| i)
            .collect()
    }

    /// Whether every flow crossing `link` starts at its transmitter.
    pub fn is_first_hop(&self, link: Link) -> bool {
        let flows = self.flows_on(link);
        !flows.is_empty() && flows.iter().all(|&f| self.flows[f].path[0] == link.tx)
    }

    pub fn technique(&self, link: Link) -> Technique {
        self.pril.iter().find(|(l, _)| *l == link).map(|(_, t)| *t).unwrap_or_default()
    }

    /// Copy with every link's technique replaced by `preset`.
    pub fn with_preset(&self, preset: Preset) -> Scenario {
        let mut out = self.clone();
        out.pril = match preset {
            Preset::Tsch => Vec::new(),
            Preset::PrilM | Preset::PrilMl(_) => self
                .links()
                .into_iter()
                .filter(|&l| !self.flows_on(l).is_empty())
                .map(|l| {
                    let t = if self.is_first_hop(l) {
                        Technique::PrilF
                    } else if let Preset::PrilMl(r) = preset {
                        Technique::PrilMl { r }
                    } else {
                        Technique::PrilM
                    };
                    (l, t)
                })
                .collect(),
        };
        out
    }

    /// Flows with drift and phase filled in from the seed where unspecified.
    pub fn resolved_flows(&self) -> Vec<Flow> {
        let rng = CounterRng::new(self.run.seed);
        self.flows
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let drift_ppb = f.drift_ppb.unwrap_or_else(|| {
                    let span = (2 * DEFAULT_DRIFT_BOUND_PPB + 1) as u64;
                    rng.draw_below(Stream::Drift, i as u64, 0, span) as i64 - DEFAULT_DRIFT_BOUND_PPB
                });
                let phase_us = f
                    .phase_us
                    .unwrap_or_else(|| rng.draw_below(Stream::Phase, i as u64, 0, f.period_us.max(1)));
                Flow {
                    id: f.id.clone(),
                    path: f.path.clone(),
                    nominal_period_us: f.period_us,
                    drift_ppb,
                    phase_us,
                    payload_bytes: f.payload_bytes,
                }
            })
            .collect()
    }

    /// Every violated invariant; empty when the scenario can be simulated.
    pub fn validate(&self) -> Vec<Problem> {
        let mut out = Vec::new();
        let n_nodes = self.nodes.len();
        let node_ok = |id: NodeId| id.index() < n_nodes;
        let name = |id: NodeId| {
            if node_ok(id) {
                self.nodes[id.index()].name.clone()
            } else {
                format!("#{}", id.0)
            }
        };

        if self.nodes.is_empty() {
            out.push(Problem::new("nodes", "at least one node is required"));
        }
        let mut names = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let ctx = format!("nodes[{i}]");
            if n.name.is_empty() {
                out.push(Problem::new(&ctx, "empty node id"));
            } else if !names.insert(n.name.as_str()) {
                out.push(Problem::new(&ctx, format!("duplicate node id {:?}", n.name)));
            }
            if let Some(p) = n.parent {
                if !node_ok(p) {
                    out.push(Problem::new(&ctx, "parent does not exist"));
                } else if p.index() == i {
                    out.push(Problem::new(&ctx, "node is its own parent"));
                }
            }
        }

        let mut cells_ok = true;
        for (i, c) in self.cells.iter().enumerate() {
            if !node_ok(c.link.tx) || !node_ok(c.link.rx) {
                out.push(Problem::new(format!("cells[{i}]"), "references an unknown node"));
                cells_ok = false;
            }
        }
        if cells_ok {
            for v in validate_schedule(&self.cells, &self.slotframe) {
                out.push(Problem::new("cells", v.to_string()));
            }
        }
        let scheduled: BTreeSet<Link> = self.cells.iter().map(|c| c.link).collect();

        let mut ids = BTreeSet::new();
        for (i, f) in self.flows.iter().enumerate() {
            let ctx = format!("flows[{i}] ({})", f.id);
            if f.id.is_empty() {
                out.push(Problem::new(&ctx, "empty flow id"));
            } else if !ids.insert(f.id.as_str()) {
                out.push(Problem::new(&ctx, "duplicate flow id"));
            }
            if f.path.len() < 2 {
                out.push(Problem::new(&ctx, "path needs at least two nodes"));
            }
            if f.path.iter().any(|&n| !node_ok(n)) {
                out.push(Problem::new(&ctx, "path references an unknown node"));
            } else {
                for w in f.path.windows(2) {
                    if w[0] == w[1] {
                        out.push(Problem::new(&ctx, format!("repeated consecutive node {}", name(w[0]))));
                    } else if !scheduled.contains(&Link::new(w[0], w[1])) {
                        out.push(Problem::new(
                            &ctx,
                            format!("no cell scheduled for hop {}->{}", name(w[0]), name(w[1])),
                        ));
                    }
                }
            }
            if f.period_us == 0 {
                out.push(Problem::new(&ctx, "period must be positive"));
            }
            if let Some(d) = f.drift_ppb {
                if d <= -1_000_000_000 || d >= 1_000_000_000 {
                    out.push(Problem::new(&ctx, "drift must lie strictly within +-1e6 ppm"));
                }
            }
            if let Some(p) = f.phase_us {
                if p >= f.period_us && f.period_us > 0 {
                    out.push(Problem::new(&ctx, "phase must be smaller than the period"));
                }
            }
            if f.payload_bytes > 127 {
                out.push(Problem::new(&ctx, "payload exceeds 127 bytes"));
            }
        }

        let mut configured = BTreeSet::new();
        for (i, (link, tech)) in self.pril.iter().enumerate() {
            let ctx = format!("pril[{i}]");
            if !node_ok(link.tx) || !node_ok(link.rx) {
                out.push(Problem::new(&ctx, "references an unknown node"));
                continue;
            }
            let lname = format!("{}->{}", name(link.tx), name(link.rx));
            if !scheduled.contains(link) {
                out.push(Problem::new(&ctx, format!("link {lname} has no cell")));
            }
            if !configured.insert(*link) {
                out.push(Problem::new(&ctx, format!("link {lname} configured twice")));
            }
            match tech {
                Technique::PrilMl { r: 0 } => out.push(Problem::new(&ctx, "r must be at least 1")),
                Technique::PrilF => {
                    let flows = self.flows_on(*link);
                    if flows.iter().any(|&f| self.flows[f].path.first() != Some(&link.tx)) {
                        out.push(Problem::new(
                            &ctx,
                            format!("pril-f on {lname} requires every crossing flow to start at {}", name(link.tx)),
                        ));
                    }
                }
                _ => {}
            }
        }

        let prob_ok = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !prob_ok(self.channel.loss_probability) {
            out.push(Problem::new("channel", "loss_probability must lie in [0, 1]"));
        }
        for (ch, p) in &self.channel.per_channel {
            if !prob_ok(*p) {
                out.push(Problem::new("channel.per_channel", format!("channel {ch}: probability must lie in [0, 1]")));
            }
            if !self.slotframe.hop_sequence().contains(ch) {
                out.push(Problem::new("channel.per_channel", format!("channel {ch} is not in the hop sequence")));
            }
        }

        if self.run.warmup_us > self.run.duration_us {
            out.push(Problem::new("run", "warm-up exceeds the run duration"));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Durations

const UNITS: &[(&str, u64)] = &[
    ("y", 365 * 86_400_000_000),
    ("d", 86_400_000_000),
    ("h", 3_600_000_000),
    ("min", 60_000_000),
    ("s", 1_000_000),
    ("ms", 1_000),
    ("us", 1),
];

/// Parse `"30d"`, `"10min"`, `"1.5h"`, `"15.26s"`, `"20000us"`; a bare
/// number means seconds. Rounds to the nearest microsecond.
pub fn parse_duration(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let split = t.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let unit = unit.trim();
    let scale = if unit.is_empty() {
        1_000_000
    } else {
        UNITS
            .iter()
            .find(|(u, _)| *u == unit)
            .map(|(_, s)| *s)
            .ok_or_else(|| format!("unknown duration unit {unit:?} in {text:?}"))?
    };
    let (int, frac) = num.split_once('.').unwrap_or((num, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(format!("missing number in duration {text:?}"));
    }
    if frac.len() > 18 {
        return Err(format!("too many decimals in {text:?}"));
    }
    let bad = || format!("malformed duration {text:?}");
    let int: u128 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let frac_val: u128 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let den = 10u128.pow(frac.len() as u32);
    let scale = u128::from(scale);
    let us = int * scale + (frac_val * scale + den / 2) / den;
    u64::try_from(us).map_err(|_| format!("duration {text:?} is too large"))
}

/// Shortest exact rendering with the largest unit that divides evenly.
pub fn format_duration(us: u64) -> String {
    if us == 0 {
        return "0s".into();
    }
    for (unit, scale) in UNITS {
        if us % scale == 0 {
            return format!("{}{unit}", us / scale);
        }
    }
    unreachable!("microseconds always divide")
}

fn seconds_to_us(s: f64) -> Result<u64, String> {
    if !s.is_finite() || s < 0.0 {
        return Err(format!("duration {s} must be a non-negative number of seconds"));
    }
    Ok((s * 1e6).round() as u64)
}

// ---------------------------------------------------------------------------
// Document format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum DurationValue {
    Seconds(f64),
    Text(String),
}

impl DurationValue {
    fn to_us(&self) -> Result<u64, String> {
        match self {
            DurationValue::Seconds(s) => seconds_to_us(*s),
            DurationValue::Text(t) => parse_duration(t),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SeedValue {
    Int(u64),
    Text(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSlotframe {
    num_slots: u32,
    slot_duration_us: u64,
    channel_offsets: u16,
    hop_sequence: Vec<u16>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawNode {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawCell {
    slot: u32,
    choffset: u16,
    from: String,
    to: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFlow {
    id: String,
    source: String,
    path: Vec<String>,
    period_s: DurationValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drift_ppm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_s: Option<DurationValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload_bytes: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPril {
    link: String,
    technique: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawChannel {
    #[serde(default)]
    loss_probability: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    per_channel: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEnergy {
    e_send_uj: f64,
    e_rec_uj: f64,
    e_listen_uj: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e_send_cmd_uj: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e_rec_cmd_uj: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRun {
    duration_s: DurationValue,
    seed: SeedValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    warmup_s: Option<DurationValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    queue_cap: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawScenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    slotframe: RawSlotframe,
    nodes: Vec<RawNode>,
    cells: Vec<RawCell>,
    flows: Vec<RawFlow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pril: Vec<RawPril>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel: Option<RawChannel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy: Option<RawEnergy>,
    run: RawRun,
}

const TOP_KEYS: &[&str] = &["name", "slotframe", "nodes", "cells", "flows", "pril", "channel", "energy", "run"];
const REQUIRED: &[&str] = &["slotframe", "nodes", "cells", "flows", "run"];

fn section_keys(section: &str) -> &'static [&'static str] {
    match section {
        "slotframe" => &["num_slots", "slot_duration_us", "channel_offsets", "hop_sequence"],
        "nodes" => &["id", "parent"],
        "cells" => &["slot", "choffset", "from", "to"],
        "flows" => &["id", "source", "path", "period_s", "drift_ppm", "phase_s", "payload_bytes"],
        "pril" => &["link", "technique", "r"],
        "channel" => &["loss_probability", "per_channel"],
        "energy" => &["e_send_uj", "e_rec_uj", "e_listen_uj", "e_send_cmd_uj", "e_rec_cmd_uj"],
        "run" => &["duration_s", "seed", "warmup_s", "max_retries", "queue_cap"],
        _ => &[],
    }
}

fn check_keys(doc: &toml::Table) -> Vec<Problem> {
    let mut out = Vec::new();
    for key in doc.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            out.push(Problem::new("document", format!("unknown section {key:?}")));
        }
    }
    for req in REQUIRED {
        if !doc.contains_key(*req) {
            out.push(Problem::new("document", format!("missing required section [{req}]")));
        }
    }
    let check_table = |ctx: String, t: &toml::Table, allowed: &[&str], out: &mut Vec<Problem>| {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                out.push(Problem::new(ctx.clone(), format!("unknown key {k:?}")));
            }
        }
    };
    for (key, value) in doc {
        let allowed = section_keys(key);
        match value {
            toml::Value::Table(t) => check_table(key.clone(), t, allowed, &mut out),
            toml::Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    if let toml::Value::Table(t) = item {
                        check_table(format!("{key}[{i}]"), t, allowed, &mut out);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

fn parse_technique(name: &str, r: Option<i64>) -> Result<Technique, String> {
    let needs_no_r = |t: Technique| match r {
        None => Ok(t),
        Some(_) => Err(format!("r only applies to pril-ml, not {name}")),
    };
    match name {
        "none" | "tsch" => needs_no_r(Technique::None),
        "pril-f" => needs_no_r(Technique::PrilF),
        "pril-m" => needs_no_r(Technique::PrilM),
        "pril-ml" => match r {
            None => Err("pril-ml requires r".into()),
            Some(r) if r < 1 => Err(format!("r must be at least 1, got {r}")),
            Some(r) if r > 255 => Err(format!("r must be at most 255, got {r}")),
            Some(r) => Ok(Technique::PrilMl { r: r as u8 }),
        },
        other => Err(format!("unknown technique {other:?}")),
    }
}

fn uj_to_nj(ctx: &str, v: f64, problems: &mut Vec<Problem>) -> u64 {
    if !v.is_finite() || v < 0.0 {
        problems.push(Problem::new(ctx, "energy must be a non-negative number of microjoules"));
        return 0;
    }
    (v * 1000.0).round() as u64
}

/// Parse and validate a scenario document, reporting every problem found.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Syntax(e.to_string()))?;
    let key_problems = check_keys(&doc);
    if !key_problems.is_empty() {
        return Err(ScenarioError::Invalid(key_problems));
    }
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        ScenarioError::Invalid(vec![Problem::new("document", e.to_string().trim().to_string())])
    })?;

    let mut problems = Vec::new();
    let slotframe = match Slotframe::new(
        raw.slotframe.num_slots,
        raw.slotframe.slot_duration_us,
        raw.slotframe.channel_offsets,
        raw.slotframe.hop_sequence.clone(),
    ) {
        Ok(f) => f,
        Err(e) => {
            problems.push(Problem::new("slotframe", e.to_string()));
            Slotframe::standard()
        }
    };

    let index: BTreeMap<&str, NodeId> =
        raw.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), NodeId(i as u32))).collect();
    let resolve = |ctx: &str, name: &str, problems: &mut Vec<Problem>| -> Option<NodeId> {
        let id = index.get(name).copied();
        if id.is_none() {
            problems.push(Problem::new(ctx, format!("unknown node {name:?}")));
        }
        id
    };

    let mut nodes = Vec::new();
    for (i, n) in raw.nodes.iter().enumerate() {
        let parent = match n.parent.as_deref() {
            None | Some("") => None,
            Some(p) => resolve(&format!("nodes[{i}]"), p, &mut problems),
        };
        nodes.push(NodeSpec { name: n.id.clone(), parent });
    }

    let mut cells = Vec::new();
    for (i, c) in raw.cells.iter().enumerate() {
        let ctx = format!("cells[{i}]");
        let tx = resolve(&ctx, &c.from, &mut problems);
        let rx = resolve(&ctx, &c.to, &mut problems);
        if let (Some(tx), Some(rx)) = (tx, rx) {
            cells.push(Cell { slot_offset: c.slot, channel_offset: c.choffset, link: Link::new(tx, rx) });
        }
    }

    let mut flows = Vec::new();
    for (i, f) in raw.flows.iter().enumerate() {
        let ctx = format!("flows[{i}] ({})", f.id);
        let path: Vec<Option<NodeId>> = f.path.iter().map(|n| resolve(&ctx, n, &mut problems)).collect();
        if f.path.first().map(String::as_str) != Some(f.source.as_str()) {
            problems.push(Problem::new(&ctx, format!("source {:?} is not the first node of the path", f.source)));
        }
        let period_us = f.period_s.to_us().unwrap_or_else(|e| {
            problems.push(Problem::new(&ctx, e));
            0
        });
        let phase_us = match &f.phase_s {
            None => None,
            Some(v) => match v.to_us() {
                Ok(p) => Some(p),
                Err(e) => {
                    problems.push(Problem::new(&ctx, e));
                    None
                }
            },
        };
        let drift_ppb = f.drift_ppm.map(|ppm| {
            if !ppm.is_finite() {
                problems.push(Problem::new(&ctx, "drift_ppm must be finite"));
                0
            } else {
                (ppm * 1000.0).round() as i64
            }
        });
        if path.iter().all(Option::is_some) {
            flows.push(FlowSpec {
                id: f.id.clone(),
                path: path.into_iter().flatten().collect(),
                period_us,
                drift_ppb,
                phase_us,
                payload_bytes: f.payload_bytes.unwrap_or(127),
            });
        }
    }

    let mut pril = Vec::new();
    for (i, p) in raw.pril.iter().enumerate() {
        let ctx = format!("pril[{i}]");
        let technique = match parse_technique(&p.technique, p.r) {
            Ok(t) => Some(t),
            Err(e) => {
                problems.push(Problem::new(&ctx, e));
                None
            }
        };
        let Some((from, to)) = p.link.split_once("->") else {
            problems.push(Problem::new(&ctx, format!("link {:?} must look like \"A->B\"", p.link)));
            continue;
        };
        let tx = resolve(&ctx, from.trim(), &mut problems);
        let rx = resolve(&ctx, to.trim(), &mut problems);
        if let (Some(tx), Some(rx), Some(t)) = (tx, rx, technique) {
            pril.push((Link::new(tx, rx), t));
        }
    }

    let channel = match &raw.channel {
        None => ChannelModel::lossless(),
        Some(c) => {
            let mut per_channel = BTreeMap::new();
            for (k, v) in &c.per_channel {
                match k.parse::<u16>() {
                    Ok(ch) => {
                        per_channel.insert(ch, *v);
                    }
                    Err(_) => problems.push(Problem::new("channel.per_channel", format!("{k:?} is not a channel number"))),
                }
            }
            ChannelModel { loss_probability: c.loss_probability, per_channel }
        }
    };

    let energy = match &raw.energy {
        None => EnergyModel::default(),
        Some(e) => EnergyModel {
            send_nj: uj_to_nj("energy.e_send_uj", e.e_send_uj, &mut problems),
            rec_nj: uj_to_nj("energy.e_rec_uj", e.e_rec_uj, &mut problems),
            listen_nj: uj_to_nj("energy.e_listen_uj", e.e_listen_uj, &mut problems),
            send_cmd_nj: e.e_send_cmd_uj.map(|v| uj_to_nj("energy.e_send_cmd_uj", v, &mut problems)),
            rec_cmd_nj: e.e_rec_cmd_uj.map(|v| uj_to_nj("energy.e_rec_cmd_uj", v, &mut problems)),
        },
    };

    let duration = |ctx: &str, v: &DurationValue, problems: &mut Vec<Problem>| {
        v.to_us().unwrap_or_else(|e| {
            problems.push(Problem::new(ctx, e));
            0
        })
    };
    let duration_us = duration("run.duration_s", &raw.run.duration_s, &mut problems);
    let warmup_us = raw.run.warmup_s.as_ref().map_or(0, |w| duration("run.warmup_s", w, &mut problems));
    let seed = match &raw.run.seed {
        SeedValue::Int(s) => *s,
        SeedValue::Text(t) => t.parse().unwrap_or_else(|_| {
            problems.push(Problem::new("run.seed", format!("{t:?} is not an unsigned 64-bit integer")));
            0
        }),
    };

    let scenario = Scenario {
        name: raw.name.clone(),
        slotframe,
        nodes,
        cells,
        flows,
        pril,
        channel,
        energy,
        run: RunSettings {
            duration_us,
            seed,
            warmup_us,
            max_retries: raw.run.max_retries,
            queue_cap: raw.run.queue_cap,
        },
    };
    problems.extend(scenario.validate());
    if problems.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(problems))
    }
}

fn nj_to_uj(nj: u64) -> f64 {
    nj as f64 / 1000.0
}

/// Render a scenario back to its document form.
pub fn render_scenario(s: &Scenario) -> String {
    let node = |id: NodeId| s.nodes[id.index()].name.clone();
    let raw = RawScenario {
        name: s.name.clone(),
        slotframe: RawSlotframe {
            num_slots: s.slotframe.num_slots(),
            slot_duration_us: s.slotframe.slot_duration_us(),
            channel_offsets: s.slotframe.num_channel_offsets(),
            hop_sequence: s.slotframe.hop_sequence().to_vec(),
        },
        nodes: s.nodes.iter().map(|n| RawNode { id: n.name.clone(), parent: n.parent.map(node) }).collect(),
        cells: s
            .cells
            .iter()
            .map(|c| RawCell { slot: c.slot_offset, choffset: c.channel_offset, from: node(c.link.tx), to: node(c.link.rx) })
            .collect(),
        flows: s
            .flows
            .iter()
            .map(|f| RawFlow {
                id: f.id.clone(),
                source: node(f.path[0]),
                path: f.path.iter().map(|&n| node(n)).collect(),
                period_s: DurationValue::Text(format_duration(f.period_us)),
                drift_ppm: f.drift_ppb.map(|d| d as f64 / 1000.0),
                phase_s: f.phase_us.map(|p| DurationValue::Text(format_duration(p))),
                payload_bytes: (f.payload_bytes != 127).then_some(f.payload_bytes),
            })
            .collect(),
        pril: s
            .pril
            .iter()
            .map(|(l, t)| RawPril {
                link: format!("{}->{}", node(l.tx), node(l.rx)),
                technique: t.name().to_string(),
                r: match t {
                    Technique::PrilMl { r } => Some(i64::from(*r)),
                    _ => None,
                },
            })
            .collect(),
        channel: Some(RawChannel {
            loss_probability: s.channel.loss_probability,
            per_channel: s.channel.per_channel.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }),
        energy: Some(RawEnergy {
            e_send_uj: nj_to_uj(s.energy.send_nj),
            e_rec_uj: nj_to_uj(s.energy.rec_nj),
            e_listen_uj: nj_to_uj(s.energy.listen_nj),
            e_send_cmd_uj: s.energy.send_cmd_nj.map(nj_to_uj),
            e_rec_cmd_uj: s.energy.rec_cmd_nj.map(nj_to_uj),
        }),
        run: RawRun {
            duration_s: DurationValue::Text(format_duration(s.run.duration_us)),
            seed: if s.run.seed <= i64::MAX as u64 {
                SeedValue::Int(s.run.seed)
            } else {
                SeedValue::Text(s.run.seed.to_string())
            },
            warmup_s: (s.run.warmup_us > 0).then(|| DurationValue::Text(format_duration(s.run.warmup_us))),
            max_retries: s.run.max_retries,
            queue_cap: s.run.queue_cap,
        },
    };
    toml::to_string(&raw).expect("scenario serialises")
}

// ---------------------------------------------------------------------------
// Built-ins

const FIG1_BASE: &str = r#"
[slotframe]
num_slots = 101
slot_duration_us = 20000
channel_offsets = 16
hop_sequence = [11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26]

[[nodes]]
id = "N0"

[[nodes]]
id = "N1"
parent = "N0"

[[nodes]]
id = "N2"
parent = "N1"

[[nodes]]
id = "N3"
parent = "N1"

[[cells]]
slot = 0
choffset = 0
from = "N2"
to = "N1"

[[cells]]
slot = 1
choffset = 0
from = "N3"
to = "N1"

[[cells]]
slot = 2
choffset = 0
from = "N1"
to = "N0"

[[flows]]
id = "tau0"
source = "N2"
path = ["N2", "N1", "N0"]
period_s = "1min"
drift_ppm = 18.0
phase_s = "7.31s"

[[flows]]
id = "tau1"
source = "N3"
path = ["N3", "N1", "N0"]
period_s = "10min"
drift_ppm = -20.05
phase_s = "283.17s"

[channel]
loss_probability = 0.0

[energy]
e_send_uj = 485.7
e_rec_uj = 651.0
e_listen_uj = 303.3

[run]
duration_s = "365d"
seed = 1
"#;

const FIG1_PRIL_M: &str = r#"
[[pril]]
link = "N2->N1"
technique = "pril-f"

[[pril]]
link = "N3->N1"
technique = "pril-f"

[[pril]]
link = "N1->N0"
technique = "pril-m"
"#;

const FIG1_PRIL_ML_R4: &str = r#"
[[pril]]
link = "N2->N1"
technique = "pril-f"

[[pril]]
link = "N3->N1"
technique = "pril-f"

[[pril]]
link = "N1->N0"
technique = "pril-ml"
r = 4
"#;

pub const BUILTIN_NAMES: &[&str] = &["fig1", "fig1-tsch", "fig1-pril-m", "fig1-pril-ml-r4"];

/// Document text of a built-in scenario. `fig1` is an alias of
/// `fig1-pril-ml-r4`.
pub fn builtin_document(name: &str) -> Option<String> {
    let (label, pril) = match name {
        "fig1" | "fig1-pril-ml-r4" => ("fig1-pril-ml-r4", FIG1_PRIL_ML_R4),
        "fig1-tsch" => ("fig1-tsch", ""),
        "fig1-pril-m" => ("fig1-pril-m", FIG1_PRIL_M),
        _ => return None,
    };
    Some(format!("name = \"{label}\"\n{FIG1_BASE}{pril}"))
}

pub fn builtin(name: &str) -> Option<Scenario> {
    builtin_document(name).map(|doc| load_scenario(&doc).expect("built-in scenarios are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_suffixes() {
        assert_eq!(parse_duration("30d"), Ok(30 * 86_400_000_000));
        assert_eq!(parse_duration("10min"), Ok(600_000_000));
        assert_eq!(parse_duration("1.5h"), Ok(5_400_000_000));
        assert_eq!(parse_duration("1y"), Ok(365 * 86_400_000_000));
        assert_eq!(parse_duration("15.26s"), Ok(15_260_000));
        assert_eq!(parse_duration("20000us"), Ok(20_000));
        assert_eq!(parse_duration("20ms"), Ok(20_000));
        assert_eq!(parse_duration("60"), Ok(60_000_000));
        assert!(parse_duration("5 fortnights").is_err());
        assert!(parse_duration("s").is_err());
        assert!(parse_duration("1.2.3s").is_err());
    }

    #[test]
    fn duration_rendering_is_exact() {
        for us in [0u64, 1, 20_000, 15_260_000, 60_000_000, 86_400_000_000, 365 * 86_400_000_000, 123_456_789] {
            assert_eq!(parse_duration(&format_duration(us)), Ok(us), "{}", format_duration(us));
        }
        assert_eq!(format_duration(600_000_000), "10min");
    }

    #[test]
    fn fig1_builtin_shape() {
        let s = builtin("fig1").unwrap();
        assert_eq!(s.nodes.len(), 4);
        assert_eq!(s.flows.len(), 2);
        assert_eq!(s.cells.len(), 3);
        assert_eq!(s.slotframe.period_us(), 2_020_000);
        let n1 = s.node_by_name("N1").unwrap();
        let n0 = s.node_by_name("N0").unwrap();
        assert_eq!(s.technique(Link::new(n1, n0)), Technique::PrilMl { r: 4 });
        assert_eq!(s.flows_on(Link::new(n1, n0)), vec![0, 1]);
        assert!(!s.is_first_hop(Link::new(n1, n0)));
        assert!(s.is_first_hop(Link::new(s.node_by_name("N2").unwrap(), n1)));
    }

    #[test]
    fn builtins_differ_only_in_pril() {
        let t = builtin("fig1-tsch").unwrap();
        let m = builtin("fig1-pril-m").unwrap();
        let ml = builtin("fig1-pril-ml-r4").unwrap();
        assert!(t.pril.is_empty());
        assert_eq!(t.with_preset(Preset::PrilM).pril, m.pril);
        assert_eq!(t.with_preset(Preset::PrilMl(4)).pril, ml.pril);
        assert_eq!(ml.with_preset(Preset::Tsch).pril, t.pril);
        assert_eq!((t.cells, t.flows, t.run), (ml.cells, ml.flows, ml.run));
    }

    #[test]
    fn render_round_trip() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap();
            assert_eq!(load_scenario(&render_scenario(&s)).unwrap(), s);
        }
        let mut s = builtin("fig1-pril-m").unwrap();
        s.flows[0].drift_ppb = Some(-12_345);
        s.flows[1].phase_us = None;
        s.channel.per_channel.insert(14, 0.25);
        s.energy.send_cmd_nj = Some(512_300);
        s.run.warmup_us = 600_000_000;
        s.run.max_retries = Some(7);
        s.run.seed = u64::MAX;
        assert_eq!(load_scenario(&render_scenario(&s)).unwrap(), s);
    }

    fn fig1_with(replace: &str, with: &str) -> String {
        let doc = builtin_document("fig1").unwrap();
        assert!(doc.contains(replace), "{replace}");
        doc.replacen(replace, with, 1)
    }

    fn problems(doc: &str) -> Vec<String> {
        match load_scenario(doc) {
            Ok(_) => vec![],
            Err(e) => match e {
                ScenarioError::Invalid(p) => p.into_iter().map(|p| p.to_string()).collect(),
                ScenarioError::Syntax(s) => vec![s],
            },
        }
    }

    #[test]
    fn repeated_consecutive_node_is_rejected() {
        let p = problems(&fig1_with(r#"path = ["N2", "N1", "N0"]"#, r#"path = ["N2", "N2"]"#));
        assert!(p.iter().any(|m| m.contains("repeated consecutive node")), "{p:?}");
    }

    #[test]
    fn zero_r_is_rejected() {
        let p = problems(&fig1_with("r = 4", "r = 0"));
        assert!(p.iter().any(|m| m.contains("r must be at least 1")), "{p:?}");
    }

    #[test]
    fn unknown_keys_are_all_reported() {
        let doc = fig1_with("period_s = \"1min\"", "perod_s = \"1min\"\ncolour = 3");
        let p = problems(&doc);
        assert!(p.iter().any(|m| m.contains("flows[0]") && m.contains("perod_s")), "{p:?}");
        assert!(p.iter().any(|m| m.contains("colour")), "{p:?}");
    }

    #[test]
    fn missing_section_and_dangling_reference() {
        let doc = builtin_document("fig1").unwrap();
        let no_run = doc.split("[run]").next().unwrap().to_string();
        assert!(problems(&no_run).iter().any(|m| m.contains("missing required section [run]")));
        let p = problems(&fig1_with("from = \"N1\"", "from = \"N9\""));
        assert!(p.iter().any(|m| m.contains("unknown node \"N9\"")), "{p:?}");
    }

    #[test]
    fn several_semantic_errors_at_once() {
        let doc = fig1_with("loss_probability = 0.0", "loss_probability = 1.5")
            .replacen("phase_s = \"7.31s\"", "phase_s = \"2min\"", 1)
            .replacen("technique = \"pril-m\"", "technique = \"pril-x\"", 1);
        let p = problems(&doc);
        assert!(p.iter().any(|m| m.contains("loss_probability")), "{p:?}");
        assert!(p.iter().any(|m| m.contains("phase must be smaller")), "{p:?}");
        assert!(p.len() >= 2, "{p:?}");
    }

    #[test]
    fn pril_f_requires_first_hop() {
        let p = problems(&fig1_with("technique = \"pril-ml\"\nr = 4", "technique = \"pril-f\""));
        assert!(p.iter().any(|m| m.contains("pril-f on N1->N0")), "{p:?}");
    }

    #[test]
    fn default_drift_and_phase_are_seeded() {
        let mut s = builtin("fig1").unwrap();
        s.flows.iter_mut().for_each(|f| {
            f.drift_ppb = None;
            f.phase_us = None;
        });
        let a = s.resolved_flows();
        assert_eq!(a, s.resolved_flows());
        for f in &a {
            assert!(f.drift_ppb.abs() <= DEFAULT_DRIFT_BOUND_PPB);
            assert!(f.phase_us < f.nominal_period_us);
        }
        s.run.seed += 1;
        assert_ne!(a, s.resolved_flows());
    }
}
