//! Deterministic discrete-event simulator for IEEE 802.15.4 TSCH networks
//! with proactive reduction of idle listening (PRIL-F, PRIL-M, PRIL-ML).
//!
//! The usual entry points are [`scenario::load_scenario`] or
//! [`scenario::builtin`], then [`engine::run`], which returns a
//! [`report::RunReport`].

pub mod analytic;
pub mod engine;
pub mod mac;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod pril;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod schedule;
pub mod traffic;
