mod common;

use common::*;
use proptest::prelude::*;
use tschsim::engine::run;
use tschsim::pril::Technique;
use tschsim::scenario::{builtin_document, load_scenario, render_scenario, ScenarioError};

const LINE: &str = r#"
name = "line"

[slotframe]
num_slots = 7
slot_duration_us = 10000
channel_offsets = 4
hop_sequence = [15, 20, 25, 26]

[[nodes]]
id = "sink"

[[nodes]]
id = "relay"
parent = "sink"

[[nodes]]
id = "leaf"
parent = "relay"

[[cells]]
slot = 1
choffset = 3
from = "leaf"
to = "relay"

[[cells]]
slot = 4
choffset = 0
from = "relay"
to = "sink"

[[cells]]
slot = 6
choffset = 1
from = "relay"
to = "sink"

[[flows]]
id = "fast"
source = "leaf"
path = ["leaf", "relay", "sink"]
period_s = 2.5
drift_ppm = -3.5

[[flows]]
id = "slow"
source = "relay"
path = ["relay", "sink"]
period_s = "30s"
phase_s = "1500ms"
payload_bytes = 40

[[pril]]
link = "leaf->relay"
technique = "pril-f"

[[pril]]
link = "relay->sink"
technique = "pril-ml"
r = 3

[channel]
loss_probability = 0.1
per_channel = { "25" = 0.5 }

[energy]
e_send_uj = 485.7
e_rec_uj = 651.0
e_listen_uj = 303.3
e_send_cmd_uj = 490.0

[run]
duration_s = "1h"
seed = 42
warmup_s = "5min"
max_retries = 4
queue_cap = 16
"#;

#[test]
fn full_featured_file_loads_and_runs() {
    let s = load_scenario(LINE).unwrap();
    assert_eq!(s.flows[0].period_us, 2_500_000);
    assert_eq!(s.flows[0].drift_ppb, Some(-3_500));
    assert_eq!(s.flows[1].phase_us, Some(1_500_000));
    assert_eq!(s.flows[1].payload_bytes, 40);
    assert_eq!(s.pril[1].1, Technique::PrilMl { r: 3 });
    assert_eq!(s.channel.loss_for(25), 0.5);
    assert_eq!(s.energy.send_cmd_nj, Some(490_000));
    assert_eq!(s.run.warmup_us, 300 * SEC);
    let r = run(&s);
    assert!(r.counters.delivered > 1000);
    assert!(r.counters.commands > 0);
    assert_eq!(load_scenario(&render_scenario(&s)).unwrap(), s);
}

#[test]
fn pril_f_on_a_shared_relay_link_is_rejected() {
    let doc = LINE.replace("link = \"relay->sink\"\ntechnique = \"pril-ml\"\nr = 3", "link = \"relay->sink\"\ntechnique = \"pril-f\"");
    let err = load_scenario(&doc).unwrap_err();
    assert!(err.to_string().contains("pril-f on relay->sink"), "{err}");
}

#[test]
fn malformed_toml_is_a_syntax_error() {
    assert!(matches!(load_scenario("[slotframe\nnum_slots = 3"), Err(ScenarioError::Syntax(_))));
}

#[test]
fn type_errors_mention_the_location() {
    let doc = LINE.replace("num_slots = 7", "num_slots = \"seven\"");
    let err = load_scenario(&doc).unwrap_err().to_string();
    assert!(err.contains("num_slots"), "{err}");
}

#[test]
fn missing_cell_and_bad_schedule_are_reported_together() {
    let doc = LINE
        .replace("slot = 6\nchoffset = 1", "slot = 9\nchoffset = 1")
        .replace("from = \"leaf\"\nto = \"relay\"", "from = \"leaf\"\nto = \"sink\"");
    let err = load_scenario(&doc).unwrap_err();
    let text: Vec<String> = err.problems().iter().map(|p| p.to_string()).collect();
    assert!(text.iter().any(|m| m.contains("slot offset 9")), "{text:?}");
    assert!(text.iter().any(|m| m.contains("no cell scheduled for hop leaf->relay")), "{text:?}");
}

#[test]
fn builtin_documents_are_plain_scenarios() {
    let doc = builtin_document("fig1-pril-m").unwrap();
    assert!(load_scenario(&doc).is_ok());
    assert!(builtin_document("fig2").is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn render_then_load_is_identity(s in small_scenario()) {
        let text = render_scenario(&s);
        prop_assert_eq!(load_scenario(&text).unwrap(), s);
    }
}
