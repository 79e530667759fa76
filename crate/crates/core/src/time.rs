//! Simulation time. All event times are integer nanoseconds so that event
//! ordering is exact and reproducible across platforms.

/// Nanoseconds since the start of a trace.
pub type Nanos = u64;

pub const NANOS_PER_MICRO: Nanos = 1_000;
pub const NANOS_PER_MILLI: Nanos = 1_000_000;
pub const NANOS_PER_SEC: Nanos = 1_000_000_000;

pub const fn millis(ms: u64) -> Nanos {
    ms * NANOS_PER_MILLI
}

pub const fn secs(s: u64) -> Nanos {
    s * NANOS_PER_SEC
}

/// Converts a nanosecond quantity (integral or expected value) to milliseconds.
pub fn to_millis(ns: f64) -> f64 {
    ns / NANOS_PER_MILLI as f64
}
