//! Reference simulator that visits every slot.
//!
//! It shares the per-instance transmit logic with the engine but none of
//! its event bookkeeping, so agreement between the two checks the
//! closed-form accounting and the scheduling of events.

use thiserror::Error;

use crate::network::{Network, RunState};
use crate::report::RunReport;
use crate::scenario::Scenario;
use crate::schedule::cells_in_slot;

/// Two simulated hours.
pub const DEFAULT_CAP_US: u64 = 2 * 3_600_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("the reference simulator is limited to {cap_us} us of simulated time, scenario asks for {duration_us} us")]
    TooLong { duration_us: u64, cap_us: u64 },
}

pub fn oracle_network(net: &Network) -> RunState {
    let mut state = RunState::new(net);
    let mut next_seq = vec![0u64; net.flows.len()];
    let link_of = |cell_link| net.links.iter().position(|l| l.link == cell_link).expect("cell link");
    for asn in 0..net.horizon_asn {
        for (f, flow) in net.flows.iter().enumerate() {
            loop {
                let t = flow.generation_time(next_seq[f]);
                if t >= net.duration_us || net.available_asn(t) != asn {
                    break;
                }
                state.generate(net, f, next_seq[f], t);
                next_seq[f] += 1;
            }
        }
        for cell in cells_in_slot(&net.cells, &net.frame, asn) {
            let link = link_of(cell.link);
            if !state.links[link].plan.step(asn) {
                continue;
            }
            if state.links[link].queue.is_empty() {
                if asn >= net.warmup_asn {
                    state.charge_idle(net, link, 1);
                }
                continue;
            }
            if let Some(relay) = state.transmit(net, link, asn) {
                state.enqueue(net, relay.link, relay.packet);
            }
        }
    }
    for (f, flow) in net.flows.iter().enumerate() {
        while flow.generation_time(next_seq[f]) < net.duration_us {
            state.generate_late();
            next_seq[f] += 1;
        }
    }
    state.finish();
    state
}

/// Run the reference simulator, refusing durations beyond `cap_us`.
pub fn oracle_run(scenario: &Scenario, cap_us: u64) -> Result<RunReport, OracleError> {
    if scenario.run.duration_us > cap_us {
        return Err(OracleError::TooLong { duration_us: scenario.run.duration_us, cap_us });
    }
    let net = Network::compile(scenario);
    let state = oracle_network(&net);
    Ok(RunReport::build(&net, &state))
}
