//! Run reports: CSV and JSON rendering, CSV parsing, and output files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::metrics::{latency_summary, power_report, EnergyAccount, LatencySummary, PowerRow, PERCENTILE_METHOD};
use crate::network::{Counters, LinkStats, Network, RunState};

pub const POWER_FILE: &str = "power.csv";
pub const LATENCY_FILE: &str = "latency.csv";
pub const JSON_FILE: &str = "report.json";

const POWER_HEADER: &str = "node,P_send,P_rec,P_listen,P";
const LATENCY_HEADER: &str = "flow,mu,sigma,min,p99,p99_9,p99_99,max,n";
const TOTAL_ROW: &str = "All";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub seed: u64,
    pub duration_us: u64,
    pub warmup_us: u64,
    pub slot_duration_us: u64,
    pub percentile_method: &'static str,
    pub sigma: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub node: String,
    pub counts: EnergyAccount,
    pub power: PowerRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub flow: String,
    pub latency: Option<LatencySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub link: String,
    #[serde(flatten)]
    pub stats: LinkStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub meta: Meta,
    pub nodes: Vec<NodeReport>,
    pub total: PowerRow,
    pub flows: Vec<FlowReport>,
    /// All flows pooled together.
    pub merged: FlowReport,
    pub counters: Counters,
    pub links: Vec<LinkReport>,
}

impl RunReport {
    pub fn build(net: &Network, state: &RunState) -> RunReport {
        let measured_us = net.duration_us - net.warmup_us;
        let power = power_report(&state.energy, &net.energy, measured_us);
        let nodes = net
            .node_names
            .iter()
            .zip(&state.energy)
            .zip(&power.nodes)
            .map(|((name, counts), row)| NodeReport { node: name.clone(), counts: *counts, power: *row })
            .collect();
        let flows = net
            .flows
            .iter()
            .zip(&state.latencies)
            .map(|(f, samples)| FlowReport { flow: f.id.clone(), latency: latency_summary(samples) })
            .collect();
        let pooled: Vec<u64> = state.latencies.iter().flatten().copied().collect();
        let merged = FlowReport {
            flow: net.flows.iter().map(|f| f.id.as_str()).collect::<Vec<_>>().join("+"),
            latency: latency_summary(&pooled),
        };
        let links = net
            .links
            .iter()
            .zip(&state.link_stats)
            .map(|(l, s)| LinkReport { link: l.name.clone(), stats: *s })
            .collect();
        RunReport {
            meta: Meta {
                seed: net.seed,
                duration_us: net.duration_us,
                warmup_us: net.warmup_us,
                slot_duration_us: net.slot_us(),
                percentile_method: PERCENTILE_METHOD,
                sigma: "population",
            },
            nodes,
            total: power.total,
            flows,
            merged,
            counters: state.counters,
            links,
        }
    }

    pub fn node(&self, name: &str) -> Option<&NodeReport> {
        self.nodes.iter().find(|n| n.node == name)
    }

    pub fn flow(&self, id: &str) -> Option<&FlowReport> {
        self.flows.iter().find(|f| f.flow == id)
    }

    /// Power in microwatts, one decimal.
    pub fn power_csv(&self) -> String {
        let mut out = format!("{POWER_HEADER}\n");
        let mut row = |name: &str, p: &PowerRow| {
            let _ = writeln!(out, "{name},{:.1},{:.1},{:.1},{:.1}", p.p_send_uw, p.p_rec_uw, p.p_listen_uw, p.p_uw);
        };
        for n in &self.nodes {
            row(&n.node, &n.power);
        }
        row(TOTAL_ROW, &self.total);
        out
    }

    /// Latency in seconds, three decimals; `NA` for flows without samples.
    pub fn latency_csv(&self) -> String {
        let mut out = format!("{LATENCY_HEADER}\n");
        for f in self.flows.iter().chain(std::iter::once(&self.merged)) {
            match &f.latency {
                None => {
                    let _ = writeln!(out, "{},NA,NA,NA,NA,NA,NA,NA,0", f.flow);
                }
                Some(s) => {
                    let sec = |us: f64| us / 1e6;
                    let _ = writeln!(
                        out,
                        "{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{}",
                        f.flow,
                        sec(s.mean_us),
                        sec(s.sigma_us),
                        sec(s.min_us as f64),
                        sec(s.p99_us as f64),
                        sec(s.p99_9_us as f64),
                        sec(s.p99_99_us as f64),
                        sec(s.max_us as f64),
                        s.n
                    );
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Write the three output files into `dir`, atomically per file. On
    /// failure nothing written by this call is left behind.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let files = [
            (POWER_FILE, self.power_csv()),
            (LATENCY_FILE, self.latency_csv()),
            (JSON_FILE, self.to_json()),
        ];
        let mut written: Vec<PathBuf> = Vec::new();
        for (name, body) in &files {
            let target = dir.join(name);
            let tmp = dir.join(format!(".{name}.tmp"));
            let result = fs::write(&tmp, body).and_then(|_| fs::rename(&tmp, &target));
            if let Err(e) = result {
                let _ = fs::remove_file(&tmp);
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(e);
            }
            written.push(target);
        }
        Ok(())
    }
}

/// One row of `power.csv`, in microwatts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCsvRow {
    pub node: String,
    pub p_send: f64,
    pub p_rec: f64,
    pub p_listen: f64,
    pub p: f64,
}

/// One row of `latency.csv`, in seconds; `None` for `NA` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyCsvRow {
    pub flow: String,
    pub stats: Option<LatencyCsvStats>,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyCsvStats {
    pub mu: f64,
    pub sigma: f64,
    pub min: f64,
    pub p99: f64,
    pub p99_9: f64,
    pub p99_99: f64,
    pub max: f64,
}

fn data_lines<'a>(text: &'a str, header: &str, what: &str) -> Result<impl Iterator<Item = (usize, &'a str)>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => Ok(lines),
        Some((_, h)) => Err(format!("{what}: unexpected header {h:?}")),
        None => Err(format!("{what}: empty file")),
    }
}

fn number(what: &str, line: usize, field: &str) -> Result<f64, String> {
    field.trim().parse().map_err(|_| format!("{what} line {}: {field:?} is not a number", line + 1))
}

pub fn parse_power_csv(text: &str) -> Result<Vec<PowerCsvRow>, String> {
    let what = POWER_FILE;
    data_lines(text, POWER_HEADER, what)?
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(format!("{what} line {}: expected 5 fields", i + 1));
            }
            Ok(PowerCsvRow {
                node: f[0].to_string(),
                p_send: number(what, i, f[1])?,
                p_rec: number(what, i, f[2])?,
                p_listen: number(what, i, f[3])?,
                p: number(what, i, f[4])?,
            })
        })
        .collect()
}

pub fn parse_latency_csv(text: &str) -> Result<Vec<LatencyCsvRow>, String> {
    let what = LATENCY_FILE;
    data_lines(text, LATENCY_HEADER, what)?
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(format!("{what} line {}: expected 9 fields", i + 1));
            }
            let n = f[8].trim().parse().map_err(|_| format!("{what} line {}: bad sample count", i + 1))?;
            let stats = if f[1..8].iter().all(|v| v.trim() == "NA") {
                None
            } else {
                Some(LatencyCsvStats {
                    mu: number(what, i, f[1])?,
                    sigma: number(what, i, f[2])?,
                    min: number(what, i, f[3])?,
                    p99: number(what, i, f[4])?,
                    p99_9: number(what, i, f[5])?,
                    p99_99: number(what, i, f[6])?,
                    max: number(what, i, f[7])?,
                })
            };
            Ok(LatencyCsvRow { flow: f[0].to_string(), stats, n })
        })
        .collect()
}

fn read(dir: &Path, name: &str) -> Result<String, String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn read_power(dir: &Path) -> Result<Vec<PowerCsvRow>, String> {
    parse_power_csv(&read(dir, POWER_FILE)?)
}

pub fn read_latency(dir: &Path) -> Result<Vec<LatencyCsvRow>, String> {
    parse_latency_csv(&read(dir, LATENCY_FILE)?)
}

/// Side-by-side difference (`b - a`) of two output directories.
pub fn compare_dirs(a: &Path, b: &Path) -> Result<String, String> {
    let (pa, pb) = (read_power(a)?, read_power(b)?);
    let (la, lb) = (read_latency(a)?, read_latency(b)?);
    let mut out = String::from("node,dP_send,dP_rec,dP_listen,dP\n");
    for ra in &pa {
        if let Some(rb) = pb.iter().find(|r| r.node == ra.node) {
            let _ = writeln!(
                out,
                "{},{:.1},{:.1},{:.1},{:.1}",
                ra.node,
                rb.p_send - ra.p_send,
                rb.p_rec - ra.p_rec,
                rb.p_listen - ra.p_listen,
                rb.p - ra.p
            );
        }
    }
    out.push_str("\nflow,dmu,dsigma,dmin,dp99,dp99_9,dp99_99,dmax\n");
    for ra in &la {
        let Some(rb) = lb.iter().find(|r| r.flow == ra.flow) else { continue };
        match (ra.stats, rb.stats) {
            (Some(x), Some(y)) => {
                let _ = writeln!(
                    out,
                    "{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
                    ra.flow,
                    y.mu - x.mu,
                    y.sigma - x.sigma,
                    y.min - x.min,
                    y.p99 - x.p99,
                    y.p99_9 - x.p99_9,
                    y.p99_99 - x.p99_99,
                    y.max - x.max
                );
            }
            _ => {
                let _ = writeln!(out, "{},NA,NA,NA,NA,NA,NA,NA", ra.flow);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parsers_accept_rendered_tables() {
        let power = "node,P_send,P_rec,P_listen,P\nN0,0.0,15.3,0.0,15.3\nAll,8.1,15.3,150.1,173.5\n";
        let rows = parse_power_csv(power).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].p_listen, 150.1);
        let lat = "flow,mu,sigma,min,p99,p99_9,p99_99,max,n\ntau0,1.010,0.583,0.020,2.000,2.020,2.020,2.040,525600\ntau1,NA,NA,NA,NA,NA,NA,NA,0\n";
        let rows = parse_latency_csv(lat).unwrap();
        assert_eq!(rows[0].stats.unwrap().max, 2.04);
        assert_eq!(rows[0].n, 525_600);
        assert!(rows[1].stats.is_none());
    }

    #[test]
    fn csv_parsers_reject_garbage() {
        assert!(parse_power_csv("").is_err());
        assert!(parse_power_csv("a,b\n").is_err());
        assert!(parse_power_csv("node,P_send,P_rec,P_listen,P\nN0,x,1,1,1\n").is_err());
        assert!(parse_latency_csv("flow,mu,sigma,min,p99,p99_9,p99_99,max,n\ntau0,1,2\n").is_err());
    }
}
