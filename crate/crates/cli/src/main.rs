use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tschsim::analytic::{compose_predictions, exact_from_printed, Baselines, LinkModel};
use tschsim::engine;
use tschsim::oracle::{oracle_run, DEFAULT_CAP_US};
use tschsim::report::{compare_dirs, read_latency, read_power, RunReport};
use tschsim::scenario::{builtin, load_scenario, parse_duration, Preset, Scenario, BUILTIN_NAMES};

#[derive(Parser)]
#[command(name = "tschsim", version, about = "TSCH network simulator with proactive idle-listening reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write power/latency reports.
    Run {
        #[command(flatten)]
        sim: SimArgs,
        /// Output directory; reports go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form latency and power estimates from measured baselines.
    Predict {
        scenario: String,
        /// Directory holding tsch/{latency,power}.csv and pril-m/power.csv.
        #[arg(long)]
        baselines: PathBuf,
        /// Number of sleep windows; defaults to the scenario's value.
        #[arg(long)]
        r: Option<u8>,
        /// Flow whose latency is predicted; defaults to the slowest relayed flow.
        #[arg(long)]
        flow: Option<String>,
        /// Also write prediction.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-metric differences between two output directories (b - a).
    Compare { a: PathBuf, b: PathBuf },
    /// Run PRIL-ML for a range of r and print one CSV row per value.
    Sweep {
        scenario: String,
        /// Inclusive range such as 1..8, or a single value.
        #[arg(long, default_value = "1..8")]
        r: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<String>,
    },
    /// Run the slot-by-slot reference simulator (short horizons only).
    Oracle {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimArgs {
    /// Scenario file or built-in name (fig1, fig1-tsch, fig1-pril-m, fig1-pril-ml-r4).
    scenario: String,
    #[arg(long, value_enum)]
    technique: Option<TechniqueArg>,
    /// Sleep windows for pril-ml.
    #[arg(long)]
    r: Option<u8>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated time, e.g. 30d, 1y, 2h, 3600.
    #[arg(long)]
    duration: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TechniqueArg {
    Tsch,
    PrilM,
    PrilMl,
}

fn load(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return load_scenario(&text).with_context(|| format!("loading {}", path.display()));
    }
    builtin(arg).ok_or_else(|| {
        anyhow!("{arg:?} is neither a scenario file nor a built-in ({})", BUILTIN_NAMES.join(", "))
    })
}

fn check(s: Scenario) -> Result<Scenario> {
    let problems = s.validate();
    if problems.is_empty() {
        return Ok(s);
    }
    let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
    bail!("invalid scenario after overrides:\n{}", list.join("\n"))
}

impl SimArgs {
    fn scenario(&self) -> Result<Scenario> {
        let mut s = load(&self.scenario)?;
        match (self.technique, self.r) {
            (Some(TechniqueArg::Tsch), _) => s = s.with_preset(Preset::Tsch),
            (Some(TechniqueArg::PrilM), _) => s = s.with_preset(Preset::PrilM),
            (Some(TechniqueArg::PrilMl), r) => s = s.with_preset(Preset::PrilMl(r.unwrap_or(4))),
            (None, Some(r)) => s = s.with_preset(Preset::PrilMl(r)),
            (None, None) => {}
        }
        apply_run_overrides(&mut s, self.seed, self.duration.as_deref())?;
        check(s)
    }
}

fn apply_run_overrides(s: &mut Scenario, seed: Option<u64>, duration: Option<&str>) -> Result<()> {
    if let Some(seed) = seed {
        s.run.seed = seed;
    }
    if let Some(d) = duration {
        s.run.duration_us = parse_duration(d).map_err(|e| anyhow!(e))?;
        s.run.warmup_us = s.run.warmup_us.min(s.run.duration_us);
    }
    Ok(())
}

fn emit(report: &RunReport, out: Option<&Path>) -> Result<()> {
    match out {
        Some(dir) => report.write_to(dir).with_context(|| format!("writing reports to {}", dir.display())),
        None => {
            print!("{}\n{}", report.power_csv(), report.latency_csv());
            Ok(())
        }
    }
}

fn parse_range(text: &str) -> Result<Vec<u8>> {
    let bad = || anyhow!("expected a range like 1..8, got {text:?}");
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (a.trim().parse::<u8>().map_err(|_| bad())?, b.trim_start_matches('=').trim().parse::<u8>().map_err(|_| bad())?),
        None => {
            let v = text.trim().parse::<u8>().map_err(|_| bad())?;
            (v, v)
        }
    };
    if lo == 0 || hi < lo {
        bail!("r range must be non-empty and start at 1 or above, got {text:?}");
    }
    Ok((lo..=hi).collect())
}

fn sweep(s: &Scenario, rs: &[u8]) -> Result<String> {
    let reports: Vec<Result<RunReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = rs
            .iter()
            .map(|&r| {
                scope.spawn(move || -> Result<RunReport> {
                    let s = check(s.with_preset(Preset::PrilMl(r)))?;
                    Ok(engine::run(&s))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut out = String::from("r,P,P_listen");
    for f in &s.flows {
        out.push_str(&format!(",{0}_mu,{0}_max", f.id));
    }
    out.push('\n');
    for (r, report) in rs.iter().zip(reports) {
        let report = report?;
        out.push_str(&format!("{r},{:.1},{:.1}", report.total.p_uw, report.total.p_listen_uw));
        for f in &report.flows {
            match &f.latency {
                Some(l) => out.push_str(&format!(",{:.3},{:.3}", l.mean_us / 1e6, l.max_us as f64 / 1e6)),
                None => out.push_str(",NA,NA"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn predict(s: &Scenario, baselines: &Path, r: Option<u8>, flow: Option<&str>) -> Result<tschsim::analytic::AnalyticPrediction> {
    let relay_links: Vec<_> = s.links().into_iter().filter(|&l| !s.flows_on(l).is_empty() && !s.is_first_hop(l)).collect();
    let configured: Vec<_> = relay_links.iter().copied().filter(|&l| s.technique(l).windows().is_some()).collect();
    let links = if configured.is_empty() { relay_links } else { configured };
    if links.is_empty() {
        bail!("scenario has no relay link to which PRIL-M or PRIL-ML could apply");
    }
    let models = links
        .iter()
        .map(|&l| {
            let on = s.flows_on(l);
            let t_min = on.iter().map(|&f| s.flows[f].period_us).min().expect("relay link carries flows");
            let r = r.or(s.technique(l).windows()).unwrap_or(4);
            LinkModel { t_min_us: t_min, r, e_listen_nj: s.energy.listen_nj }
        })
        .collect::<Vec<_>>();

    let main = links[0];
    let flow_id = match flow {
        Some(f) => f.to_string(),
        None => {
            let on = s.flows_on(main);
            let slowest = on.iter().copied().max_by_key(|&f| (s.flows[f].period_us, std::cmp::Reverse(f))).expect("flows");
            s.flows[slowest].id.clone()
        }
    };
    let tsch_latency = read_latency(&baselines.join("tsch")).map_err(|e| anyhow!(e))?;
    let row = tsch_latency
        .iter()
        .find(|r| r.flow == flow_id)
        .ok_or_else(|| anyhow!("flow {flow_id:?} missing from the TSCH latency baseline"))?;
    let stats = row.stats.ok_or_else(|| anyhow!("TSCH baseline has no samples for {flow_id:?}"))?;
    read_power(&baselines.join("tsch")).map_err(|e| anyhow!(e))?;
    let pril_m = read_power(&baselines.join("pril-m")).map_err(|e| anyhow!(e))?;
    let total = pril_m
        .iter()
        .find(|r| r.node == "All")
        .ok_or_else(|| anyhow!("PRIL-M power baseline lacks the All row"))?;
    let rx = s.node_name(main.rx);
    let rx_row = pril_m
        .iter()
        .find(|r| r.node == rx)
        .ok_or_else(|| anyhow!("PRIL-M power baseline lacks node {rx}"))?;
    let base = Baselines {
        tsch_mean_s: exact_from_printed(stats.mu, 3),
        tsch_max_s: exact_from_printed(stats.max, 3),
        pril_m_power_uw: exact_from_printed(total.p, 1),
        pril_m_listen_uw: exact_from_printed(rx_row.p_listen, 1),
    };
    compose_predictions(&base, &models).map_err(|e| anyhow!(e))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { sim, out } => emit(&engine::run(&sim.scenario()?), out.as_deref()),
        Command::Oracle { sim, out } => {
            let report = oracle_run(&sim.scenario()?, DEFAULT_CAP_US)?;
            emit(&report, out.as_deref())
        }
        Command::Predict { scenario, baselines, r, flow, out } => {
            let s = load(&scenario)?;
            let p = predict(&s, &baselines, r, flow.as_deref())?;
            print!("{}", p.render_text());
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                let body = serde_json::to_string_pretty(&p.table())? + "\n";
                fs::write(dir.join("prediction.json"), body)?;
            }
            Ok(())
        }
        Command::Compare { a, b } => {
            print!("{}", compare_dirs(&a, &b).map_err(|e| anyhow!(e))?);
            Ok(())
        }
        Command::Sweep { scenario, r, seed, duration } => {
            let mut s = load(&scenario)?;
            apply_run_overrides(&mut s, seed, duration.as_deref())?;
            print!("{}", sweep(&s, &parse_range(&r)?)?);
            Ok(())
        }
    }
}
