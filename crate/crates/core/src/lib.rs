//! Packet-level simulation of gateway flood mitigation.
//!
//! The pipeline is `traffic` → optional [`qdtp`] pacing → attack detector
//! ([`detector`]) with adaptive drop/skip mitigation ([`aam`]) → server.
//! [`costmodel`] holds the analytic cost of mitigation and its optimum skip
//! length; [`sim`] runs whole scenarios and seeded replications.

pub mod aam;
pub mod costmodel;
pub mod detector;
pub mod error;
pub mod qdtp;
pub mod sim;
pub mod time;
pub mod traffic;

pub use aam::{run_mitigation, AamConfig, Episode, MitigationOutcome};
pub use costmodel::{CostParams, CostReport};
pub use detector::{DetectorConfig, Verdict, WindowVerdict};
pub use error::{Error, Result};
pub use qdtp::{QdtpConfig, QdtpState};
pub use sim::{run_replications, run_scenario, Scenario, SimResult};
pub use time::Nanos;
pub use traffic::{BenignSourceConfig, FloodConfig, Label, PacketRecord, XDistribution};

/// CSV writer that never emits serde-derived headers; every writer in this
/// crate writes its header row explicitly, so empty tables still carry one.
pub(crate) fn csv_writer<W: std::io::Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out)
}
