//! Shared fixtures for the criterion benches.

use gateway_shield::time::{millis, secs};
use gateway_shield::traffic::{generate_benign, generate_flood, merge_traces, XDistribution};
use gateway_shield::{BenignSourceConfig, FloodConfig, PacketRecord};

/// Benign telemetry with one flood of `x` packets at 15k packets/s.
pub fn flood_trace(x: u64, seed: u64) -> Vec<PacketRecord> {
    let benign = generate_benign(
        &BenignSourceConfig::periodic(millis(100), 10),
        secs(30),
        seed,
    )
    .expect("valid benign config");
    let flood = FloodConfig {
        start_time: secs(1),
        x_distribution: XDistribution::Constant(x),
        attack_fraction: 0.9,
        attack_rate: 15_000.0,
    };
    let (attack, _) = generate_flood(&flood, seed ^ 0x5eed).expect("valid flood config");
    merge_traces(&[benign, attack]).expect("generated traces are sorted")
}
