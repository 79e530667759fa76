//! Quasi-deterministic transmission pacing.
//!
//! The forwarder releases the packet that arrived at `a(n+1)` at
//! `t(n+1) = max(t(n) + D, a(n+1))` with `t(0) = a(0)`, so consecutive
//! departures are never closer than `D`. The per-packet shaping delay obeys
//! `Q(0) = 0`, `Q(n+1) = max(0, Q(n) + D - (a(n+1) - a(n)))`.

use std::io;

use crate::error::{Error, Result};
use crate::time::Nanos;
use crate::traffic::{Label, PacketRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QdtpConfig {
    /// Minimum spacing `D` between departures. Zero makes the shaper a
    /// pass-through.
    pub d_spacing: Nanos,
}

impl QdtpConfig {
    pub const fn new(d_spacing: Nanos) -> Self {
        QdtpConfig { d_spacing }
    }
}

/// Running state of one forwarder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QdtpState {
    pub last_departure: Option<Nanos>,
    pub last_arrival: Option<Nanos>,
    pub forwarded_count: u64,
}

impl QdtpState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Departure time for a packet arriving at `arrival`, and the updated state.
    pub fn forward_one(self, cfg: &QdtpConfig, arrival: Nanos) -> Result<(Nanos, QdtpState)> {
        if let Some(prev) = self.last_arrival {
            if arrival < prev {
                return Err(Error::Ordering(format!(
                    "arrival {arrival} precedes previous arrival {prev}"
                )));
            }
        }
        let departure = match self.last_departure {
            None => arrival,
            Some(t) => arrival.max(t + cfg.d_spacing),
        };
        Ok((
            departure,
            QdtpState {
                last_departure: Some(departure),
                last_arrival: Some(arrival),
                forwarded_count: self.forwarded_count + 1,
            },
        ))
    }
}

/// A packet after pacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapedPacket {
    pub packet: PacketRecord,
    pub departure: Nanos,
    pub delay: Nanos,
}

/// Paces a sorted trace.
pub fn shape_trace(trace: &[PacketRecord], cfg: &QdtpConfig) -> Result<Vec<ShapedPacket>> {
    let mut state = QdtpState::new();
    trace
        .iter()
        .map(|p| {
            let (departure, next) = state.forward_one(cfg, p.arrival)?;
            state = next;
            Ok(ShapedPacket {
                packet: *p,
                departure,
                delay: departure - p.arrival,
            })
        })
        .collect()
}

/// Shaping delays computed from interarrival times alone.
///
/// `interarrivals[k]` is `a(k+1) - a(k)`, so the result has one more entry
/// than the input; the first delay is always zero.
pub fn delay_recursion(interarrivals: &[i64], cfg: &QdtpConfig) -> Result<Vec<Nanos>> {
    let mut delays = Vec::with_capacity(interarrivals.len() + 1);
    let mut q: Nanos = 0;
    delays.push(q);
    for (k, &gap) in interarrivals.iter().enumerate() {
        let gap = u64::try_from(gap)
            .map_err(|_| Error::Ordering(format!("negative interarrival {gap} at index {k}")))?;
        q = (q + cfg.d_spacing).saturating_sub(gap);
        delays.push(q);
    }
    Ok(delays)
}

/// Interarrival times `a(n+1) - a(n)` of a trace.
pub fn interarrivals(trace: &[PacketRecord]) -> Vec<i64> {
    trace
        .windows(2)
        .map(|w| w[1].arrival as i64 - w[0].arrival as i64)
        .collect()
}

/// Number of consecutive departure pairs closer than `D`.
pub fn spacing_violations(shaped: &[ShapedPacket], cfg: &QdtpConfig) -> usize {
    shaped
        .windows(2)
        .filter(|w| w[1].departure < w[0].departure + cfg.d_spacing)
        .count()
}

/// Writes `seq,arrival_ns,departure_ns,delay_ns,label`.
pub fn write_shaped_csv<W: io::Write>(shaped: &[ShapedPacket], out: W) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Row {
        seq: u64,
        arrival_ns: Nanos,
        departure_ns: Nanos,
        delay_ns: Nanos,
        label: Label,
    }
    let mut w = crate::csv_writer(out);
    w.write_record(["seq", "arrival_ns", "departure_ns", "delay_ns", "label"])?;
    for s in shaped {
        w.serialize(Row {
            seq: s.packet.seq,
            arrival_ns: s.packet.arrival,
            departure_ns: s.departure,
            delay_ns: s.delay,
            label: s.packet.label,
        })?;
    }
    w.flush()?;
    Ok(())
}
