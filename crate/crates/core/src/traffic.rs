//! Reproducible packet arrival traces: periodic (or Poisson) benign telemetry
//! plus flood bursts with a random total size.

use std::fmt;
use std::io;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{Nanos, NANOS_PER_SEC};

/// Source id stamped on every packet of a flood burst. Benign telemetry
/// sources are numbered from 0.
pub const FLOOD_SOURCE_ID: u32 = 10_000;

/// Ground-truth label of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Benign,
    Attack,
}

impl Label {
    pub fn is_attack(self) -> bool {
        self == Label::Attack
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Benign => "BENIGN",
            Label::Attack => "ATTACK",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "BENIGN" => Ok(Label::Benign),
            "ATTACK" => Ok(Label::Attack),
            other => Err(Error::input(format!("unknown label {other:?}"))),
        }
    }
}

/// One packet of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub seq: u64,
    #[serde(rename = "arrival_ns")]
    pub arrival: Nanos,
    pub label: Label,
    pub source_id: u32,
}

/// Arrival process of a single benign source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenignArrivals {
    /// One packet every `period` nanoseconds.
    Periodic { period: Nanos },
    /// Exponential interarrivals with the given mean.
    Poisson { mean_interarrival: Nanos },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenignSourceConfig {
    pub arrivals: BenignArrivals,
    pub source_count: u32,
    /// Each packet is delayed by an independent uniform draw in `[0, jitter]`.
    pub jitter: Nanos,
}

impl BenignSourceConfig {
    pub fn periodic(period: Nanos, source_count: u32) -> Self {
        BenignSourceConfig {
            arrivals: BenignArrivals::Periodic { period },
            source_count,
            jitter: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_count == 0 {
            return Err(Error::config("benign source_count must be >= 1"));
        }
        let period = match self.arrivals {
            BenignArrivals::Periodic { period } => period,
            BenignArrivals::Poisson { mean_interarrival } => mean_interarrival,
        };
        if period == 0 {
            return Err(Error::config("benign period must be > 0"));
        }
        Ok(())
    }
}

/// Distribution of the total number of packets `X` in one flood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XDistribution {
    Constant(u64),
    /// Uniform over the integers `lo..=hi`.
    Uniform {
        lo: u64,
        hi: u64,
    },
    /// Geometric on `{1, 2, ...}` with the given mean.
    Geometric {
        mean: f64,
    },
}

impl XDistribution {
    /// The default replication distribution: uniform on `[0.5 E[X], 1.5 E[X]]`.
    pub fn uniform_around(expected: u64) -> Self {
        XDistribution::Uniform {
            lo: (expected / 2).max(1),
            hi: expected + expected / 2,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            XDistribution::Constant(x) => x as f64,
            XDistribution::Uniform { lo, hi } => (lo as f64 + hi as f64) / 2.0,
            XDistribution::Geometric { mean } => mean,
        }
    }

    /// Largest value the distribution can produce, or `None` if unbounded.
    pub fn max(&self) -> Option<u64> {
        match *self {
            XDistribution::Constant(x) => Some(x),
            XDistribution::Uniform { hi, .. } => Some(hi),
            XDistribution::Geometric { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            XDistribution::Constant(x) if x >= 1 => Ok(()),
            XDistribution::Uniform { lo, hi } if lo >= 1 && lo <= hi => Ok(()),
            XDistribution::Geometric { mean } if mean >= 1.0 && mean.is_finite() => Ok(()),
            other => Err(Error::config(format!(
                "flood size distribution {other:?} must produce at least one packet"
            ))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            XDistribution::Constant(x) => x,
            XDistribution::Uniform { lo, hi } => rng.random_range(lo..=hi),
            XDistribution::Geometric { mean } => {
                if mean <= 1.0 {
                    return 1;
                }
                // rand_distr counts failures before the first success.
                let geo = Geometric::new(1.0 / mean).expect("p in (0, 1)");
                geo.sample(rng).saturating_add(1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloodConfig {
    pub start_time: Nanos,
    pub x_distribution: XDistribution,
    /// Probability that a burst packet is malicious.
    pub attack_fraction: f64,
    /// Packets per second during the burst.
    pub attack_rate: f64,
}

impl FloodConfig {
    pub fn validate(&self) -> Result<()> {
        self.x_distribution.validate()?;
        if !(self.attack_fraction > 0.0 && self.attack_fraction <= 1.0) {
            return Err(Error::config(format!(
                "attack_fraction must lie in (0, 1], got {}",
                self.attack_fraction
            )));
        }
        if !(self.attack_rate > 0.0 && self.attack_rate.is_finite()) {
            return Err(Error::config(format!(
                "attack_rate must be positive, got {}",
                self.attack_rate
            )));
        }
        Ok(())
    }

    /// Arrival offset of the `i`-th burst packet relative to `start_time`.
    pub fn offset_of(&self, i: u64) -> Nanos {
        (i as f64 * NANOS_PER_SEC as f64 / self.attack_rate).floor() as Nanos
    }

    /// Time at which a burst of `x` packets has fully arrived.
    pub fn end_time(&self, x: u64) -> Nanos {
        self.start_time + self.offset_of(x)
    }
}

/// Generates benign telemetry in `[0, horizon)`.
///
/// Periodic sources are phase-shifted evenly across one period, so source `k`
/// of `n` first fires at `k * period / n`.
pub fn generate_benign(
    cfg: &BenignSourceConfig,
    horizon: Nanos,
    seed: u64,
) -> Result<Vec<PacketRecord>> {
    cfg.validate()?;
    if horizon == 0 {
        return Err(Error::config("horizon must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for source in 0..cfg.source_count {
        match cfg.arrivals {
            BenignArrivals::Periodic { period } => {
                let phase = period * source as u64 / cfg.source_count as u64;
                let mut t = phase;
                while t < horizon {
                    let jitter = draw_jitter(&mut rng, cfg.jitter);
                    if t + jitter < horizon {
                        out.push(packet(t + jitter, Label::Benign, source));
                    }
                    t += period;
                }
            }
            BenignArrivals::Poisson { mean_interarrival } => {
                let exp = Exp::new(1.0 / mean_interarrival as f64).expect("positive rate");
                let mut t = exp.sample(&mut rng);
                while t < horizon as f64 {
                    let at = t as Nanos + draw_jitter(&mut rng, cfg.jitter);
                    if at < horizon {
                        out.push(packet(at, Label::Benign, source));
                    }
                    t += exp.sample(&mut rng);
                }
            }
        }
    }
    out.sort_by_key(|p| (p.arrival, p.source_id));
    renumber(&mut out);
    Ok(out)
}

/// Generates one flood burst. Returns the packets and the realized size `X`.
pub fn generate_flood(cfg: &FloodConfig, seed: u64) -> Result<(Vec<PacketRecord>, u64)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = cfg.x_distribution.sample(&mut rng);
    let trace = (0..x)
        .map(|i| {
            let label = if rng.random::<f64>() < cfg.attack_fraction {
                Label::Attack
            } else {
                Label::Benign
            };
            PacketRecord {
                seq: i,
                arrival: cfg.start_time + cfg.offset_of(i),
                label,
                source_id: FLOOD_SOURCE_ID,
            }
        })
        .collect();
    Ok((trace, x))
}

/// Merges sorted traces into one sorted trace with contiguous `seq`.
///
/// Equal timestamps are ordered by input index, then by original `seq`.
pub fn merge_traces(traces: &[Vec<PacketRecord>]) -> Result<Vec<PacketRecord>> {
    for (idx, trace) in traces.iter().enumerate() {
        check_sorted(trace).map_err(|e| match e {
            Error::Invariant(msg) => Error::Invariant(format!("input {idx}: {msg}")),
            other => other,
        })?;
    }
    let mut merged: Vec<(usize, PacketRecord)> = traces
        .iter()
        .enumerate()
        .flat_map(|(idx, t)| t.iter().map(move |p| (idx, *p)))
        .collect();
    merged.sort_by_key(|(idx, p)| (p.arrival, *idx, p.seq));
    let mut out: Vec<PacketRecord> = merged.into_iter().map(|(_, p)| p).collect();
    renumber(&mut out);
    Ok(out)
}

/// Fails with [`Error::Invariant`] if arrival times decrease anywhere.
pub fn check_sorted(trace: &[PacketRecord]) -> Result<()> {
    match trace.windows(2).position(|w| w[1].arrival < w[0].arrival) {
        Some(i) => Err(Error::Invariant(format!(
            "trace not sorted: seq {} arrives at {} after seq {} at {}",
            trace[i + 1].seq,
            trace[i + 1].arrival,
            trace[i].seq,
            trace[i].arrival
        ))),
        None => Ok(()),
    }
}

/// Writes a trace as `seq,arrival_ns,label,source_id`.
pub fn write_trace_csv<W: io::Write>(trace: &[PacketRecord], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record(["seq", "arrival_ns", "label", "source_id"])?;
    for p in trace {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]. The header row is mandatory.
pub fn read_trace_csv<R: io::Read>(input: R) -> Result<Vec<PacketRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let expected = ["seq", "arrival_ns", "label", "source_id"];
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

fn draw_jitter(rng: &mut ChaCha8Rng, jitter: Nanos) -> Nanos {
    if jitter == 0 {
        0
    } else {
        rng.random_range(0..=jitter)
    }
}

fn packet(arrival: Nanos, label: Label, source_id: u32) -> PacketRecord {
    PacketRecord {
        seq: 0,
        arrival,
        label,
        source_id,
    }
}

fn renumber(trace: &mut [PacketRecord]) {
    for (i, p) in trace.iter_mut().enumerate() {
        p.seq = i as u64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::secs;

    fn arrivals(trace: &[PacketRecord]) -> Vec<Nanos> {
        trace.iter().map(|p| p.arrival).collect()
    }

    #[test]
    fn periodic_single_source() {
        let cfg = BenignSourceConfig::periodic(secs(1), 1);
        let t = generate_benign(&cfg, secs(3), 7).unwrap();
        assert_eq!(arrivals(&t), vec![0, secs(1), secs(2)]);
        assert!(t.iter().all(|p| p.label == Label::Benign));
        assert_eq!(t.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn two_offset_sources() {
        let cfg = BenignSourceConfig::periodic(secs(1), 2);
        let t = generate_benign(&cfg, secs(2), 7).unwrap();
        let half = secs(1) / 2;
        assert_eq!(arrivals(&t), vec![0, half, secs(1), secs(1) + half]);
        assert_eq!(
            t.iter().map(|p| p.source_id).collect::<Vec<_>>(),
            vec![0, 1, 0, 1]
        );
    }

    #[test]
    fn rejects_bad_benign_config() {
        let cfg = BenignSourceConfig::periodic(secs(1), 0);
        assert!(matches!(
            generate_benign(&cfg, secs(1), 0),
            Err(Error::InvalidConfig(_))
        ));
        let cfg = BenignSourceConfig::periodic(secs(1), 1);
        assert!(matches!(
            generate_benign(&cfg, 0, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn jitter_and_poisson_stay_sorted_and_bounded() {
        let cfg = BenignSourceConfig {
            arrivals: BenignArrivals::Poisson {
                mean_interarrival: 10_000,
            },
            source_count: 3,
            jitter: 5_000,
        };
        let t = generate_benign(&cfg, 10_000_000, 3).unwrap();
        assert!(!t.is_empty());
        check_sorted(&t).unwrap();
        assert!(t.iter().all(|p| p.arrival < 10_000_000));
        assert_eq!(t, generate_benign(&cfg, 10_000_000, 3).unwrap());
    }

    #[test]
    fn flood_all_attack_when_fraction_is_one() {
        let cfg = FloodConfig {
            start_time: secs(1),
            x_distribution: XDistribution::Constant(1000),
            attack_fraction: 1.0,
            attack_rate: 10_000.0,
        };
        let (t, x) = generate_flood(&cfg, 1).unwrap();
        assert_eq!(x, 1000);
        assert_eq!(t.len(), 1000);
        assert!(t.iter().all(|p| p.label == Label::Attack));
        assert_eq!(t[0].arrival, secs(1));
        assert!(t.last().unwrap().arrival < cfg.end_time(x));
        check_sorted(&t).unwrap();
    }

    #[test]
    fn degenerate_uniform() {
        let cfg = FloodConfig {
            start_time: 0,
            x_distribution: XDistribution::Uniform { lo: 10, hi: 10 },
            attack_fraction: 0.5,
            attack_rate: 100.0,
        };
        for seed in 0..20 {
            assert_eq!(generate_flood(&cfg, seed).unwrap().1, 10);
        }
    }

    #[test]
    fn geometric_sizes_are_positive_with_matching_mean() {
        let dist = XDistribution::Geometric { mean: 50.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let draws: Vec<u64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&x| x >= 1));
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        // sd of a geometric with mean 50 is ~49.5; 4 standard errors.
        assert!(
            (mean - 50.0).abs() < 4.0 * 49.5 / (n as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn invalid_flood_configs() {
        let good = FloodConfig {
            start_time: 0,
            x_distribution: XDistribution::Constant(5),
            attack_fraction: 0.5,
            attack_rate: 100.0,
        };
        for bad in [
            FloodConfig {
                attack_fraction: 0.0,
                ..good
            },
            FloodConfig {
                attack_fraction: 1.5,
                ..good
            },
            FloodConfig {
                x_distribution: XDistribution::Constant(0),
                ..good
            },
            FloodConfig {
                x_distribution: XDistribution::Uniform { lo: 5, hi: 4 },
                ..good
            },
            FloodConfig {
                attack_rate: 0.0,
                ..good
            },
        ] {
            assert!(generate_flood(&bad, 0).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn merge_cases() {
        assert!(merge_traces(&[vec![], vec![]]).unwrap().is_empty());

        let a = vec![
            packet(0, Label::Benign, 0),
            packet(secs(2), Label::Benign, 0),
        ];
        let b = vec![packet(secs(1), Label::Attack, 1)];
        let m = merge_traces(&[a, b]).unwrap();
        assert_eq!(arrivals(&m), vec![0, secs(1), secs(2)]);
        assert_eq!(m.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![0, 1, 2]);

        let a = vec![packet(5, Label::Benign, 0)];
        let b = vec![packet(5, Label::Attack, 1)];
        let m = merge_traces(&[a, b]).unwrap();
        assert_eq!(m[0].source_id, 0);
        assert_eq!(m[1].source_id, 1);
    }

    #[test]
    fn merge_rejects_unsorted() {
        let a = vec![packet(5, Label::Benign, 0), packet(1, Label::Benign, 0)];
        assert!(matches!(merge_traces(&[a]), Err(Error::Invariant(_))));
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let cfg = BenignSourceConfig::periodic(1000, 2);
        let t = generate_benign(&cfg, 10_000, 1).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("seq,arrival_ns,label,source_id\n0,0,BENIGN,0\n"));
        assert_eq!(read_trace_csv(&buf[..]).unwrap(), t);

        let missing_header = "0,0,BENIGN,0\n1,5,ATTACK,1\n";
        assert!(matches!(
            read_trace_csv(missing_header.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad_row = "seq,arrival_ns,label,source_id\n0,0,BENIGN,0\n1,x,ATTACK,1\n";
        match read_trace_csv(bad_row.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
