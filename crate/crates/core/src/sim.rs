//! Discrete-event engine for the gateway pipeline
//! `arrivals -> [pacing forwarder] -> detector queue -> detector/mitigation -> server`.
//!
//! The detector serves one packet at a time for `tau` (optionally jittered).
//! Without the forwarder, arrivals join the detector queue directly. With
//! mitigation enabled, packets the mitigator skips are dropped at the earliest
//! stage they occupy (detector queue, then forwarder queue, then on arrival),
//! so the packet sequence seen by the mitigator is exactly the arrival order
//! and a simulation reproduces [`run_mitigation`](crate::aam::run_mitigation)
//! on the same trace and detector seed.

use std::collections::VecDeque;
use std::io;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aam::{AamConfig, Action, MitigationOutcome, Mitigator, Mode};
use crate::costmodel::{self, CostParams};
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::qdtp::QdtpConfig;
use crate::time::{millis, to_millis, Nanos};
use crate::traffic::{
    generate_benign, generate_flood, merge_traces, BenignSourceConfig, FloodConfig, PacketRecord,
};

const STREAM_BENIGN: u64 = 0;
const STREAM_DETECTOR: u64 = 1;
const STREAM_JITTER: u64 = 2;
const STREAM_REPLICATIONS: u64 = 3;
const STREAM_FLOOD_BASE: u64 = 16;

/// Deterministically derives an independent seed for one component.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// How the skip length is chosen when an episode starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkipPolicy {
    /// Always use `AamConfig::skip_m`.
    #[default]
    Fixed,
    /// Recompute the cost-optimal `m*` from the `E[X]` of the most recently
    /// started flood.
    OptimalPerEpisode,
}

/// What the engine records in [`SimResult::samples`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeriesMode {
    /// Every change of a queue length plus the fixed cadence.
    #[default]
    Events,
    /// Fixed cadence only.
    Cadence,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub benign: Option<BenignSourceConfig>,
    pub floods: Vec<FloodConfig>,
    /// `None` is the baseline without the pacing forwarder.
    pub qdtp: Option<QdtpConfig>,
    pub detector: DetectorConfig,
    /// `None` runs detection only: every packet is inspected and forwarded.
    pub aam: Option<AamConfig>,
    pub skip_policy: SkipPolicy,
    pub cost: CostWeights,
    /// Detector service time is `tau * (1 + u)` with `u ~ U(-j, j)`.
    pub service_jitter: f64,
    pub horizon: Nanos,
    pub seed: u64,
    pub series: SeriesMode,
    pub sample_period: Nanos,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            benign: None,
            floods: Vec::new(),
            qdtp: None,
            detector: DetectorConfig::default(),
            aam: None,
            skip_policy: SkipPolicy::Fixed,
            cost: CostWeights::default(),
            service_jitter: 0.0,
            horizon: 0,
            seed: 0,
            series: SeriesMode::Events,
            sample_period: millis(100),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be > 0"));
        }
        if let Some(b) = &self.benign {
            b.validate()?;
        }
        for (i, f) in self.floods.iter().enumerate() {
            f.validate()?;
            let size = f
                .x_distribution
                .max()
                .unwrap_or(f.x_distribution.mean().ceil() as u64);
            if f.end_time(size) > self.horizon {
                return Err(Error::config(format!(
                    "flood {i} may run until {} ns, past the horizon {} ns",
                    f.end_time(size),
                    self.horizon
                )));
            }
        }
        self.detector.validate()?;
        if let Some(aam) = &self.aam {
            aam.validate(&self.detector)?;
        }
        if !(0.0..1.0).contains(&self.service_jitter) {
            return Err(Error::config(format!(
                "service_jitter must lie in [0, 1), got {}",
                self.service_jitter
            )));
        }
        if self.series != SeriesMode::Off && self.sample_period == 0 {
            return Err(Error::config("sample_period must be > 0"));
        }
        if self.skip_policy == SkipPolicy::OptimalPerEpisode {
            if self.aam.is_none() || self.floods.is_empty() {
                return Err(Error::config(
                    "per-episode skip selection needs mitigation and at least one flood",
                ));
            }
            if self.cost.alpha <= 0.0 {
                return Err(Error::config("per-episode skip selection needs alpha > 0"));
            }
        }
        Ok(())
    }

    /// Seed of the detector RNG used by [`run_scenario`].
    pub fn detector_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_DETECTOR) ^ self.detector.seed
    }

    /// Builds the merged arrival trace. Returns it with the realized flood sizes.
    pub fn build_trace(&self) -> Result<(Vec<PacketRecord>, Vec<u64>)> {
        let mut traces = Vec::with_capacity(self.floods.len() + 1);
        if let Some(b) = &self.benign {
            traces.push(generate_benign(
                b,
                self.horizon,
                derive_seed(self.seed, STREAM_BENIGN),
            )?);
        }
        let mut sizes = Vec::with_capacity(self.floods.len());
        for (i, f) in self.floods.iter().enumerate() {
            let (t, x) = generate_flood(f, derive_seed(self.seed, STREAM_FLOOD_BASE + i as u64))?;
            traces.push(t);
            sizes.push(x);
        }
        Ok((merge_traces(&traces)?, sizes))
    }

    /// Cost parameters for analytic comparison: weights from the scenario,
    /// `tau` and `W` from the detector, `f` and `E[X]` from flood `idx`.
    pub fn cost_params(&self, idx: usize) -> Result<CostParams> {
        let w = self.detector.window_w;
        let (f, ex) = match self.floods.get(idx) {
            Some(fl) => (fl.attack_fraction, fl.x_distribution.mean().max(w as f64)),
            None => (1.0, w as f64),
        };
        CostParams::new(
            self.cost.alpha,
            self.cost.beta,
            f,
            ex,
            self.detector.tau_inspect,
            w,
        )
    }

    /// `m*` for every flood, in flood order.
    pub fn optimal_skips(&self) -> Result<Vec<u64>> {
        (0..self.floods.len())
            .map(|i| costmodel::optimal_m(&self.cost_params(i)?))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueSample {
    pub t: Nanos,
    pub sqf_queue: u64,
    pub ad_queue: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Queue lengths over time. The detector queue counts waiting packets
    /// plus the one in service.
    pub samples: Vec<QueueSample>,
    pub outcome: MitigationOutcome,
    pub realized_x: Vec<u64>,
    /// Realized `K`, nanoseconds.
    pub k_realized: Nanos,
    /// Realized `Omega`, nanoseconds.
    pub omega_realized: Nanos,
    /// `alpha K + beta Omega`, nanoseconds.
    pub realized_cost: f64,
    pub peak_ad_queue: u64,
    pub peak_sqf_queue: u64,
    /// Largest number of inspected packets held awaiting a window verdict.
    pub peak_window_buffer: u64,
    /// Time from the first flood's start until both queues are empty again.
    pub drain_time: Option<Nanos>,
    pub last_service_completion: Nanos,
    pub forwarded_to_server: u64,
}

impl SimResult {
    pub fn sqf_queue_series(&self) -> impl Iterator<Item = (Nanos, u64)> + '_ {
        self.samples.iter().map(|s| (s.t, s.sqf_queue))
    }

    pub fn ad_queue_series(&self) -> impl Iterator<Item = (Nanos, u64)> + '_ {
        self.samples.iter().map(|s| (s.t, s.ad_queue))
    }
}

/// Realized `K = tau W ceil(benign_dropped / W)`: every benign packet dropped
/// is re-sent and re-inspected in windows of `W`.
pub fn realized_reprocessing(outcome: &MitigationOutcome, w: u32, tau: Nanos) -> Nanos {
    tau * w as Nanos * outcome.dropped_benign.div_ceil(w as u64)
}

/// `alpha K_realized + beta Omega_realized` in nanoseconds. Only
/// mitigating-mode windows count toward `Omega`.
pub fn realized_cost(outcome: &MitigationOutcome, p: &CostParams) -> f64 {
    let k = realized_reprocessing(outcome, p.w, p.tau);
    p.alpha * k as f64 + p.beta * outcome.inspection_time_omega as f64
}

struct Engine<'a> {
    s: &'a Scenario,
    trace: Vec<PacketRecord>,
    next_arrival: usize,
    now: Nanos,
    sqf_queue: VecDeque<PacketRecord>,
    sqf_last_departure: Option<Nanos>,
    ad_queue: VecDeque<PacketRecord>,
    in_service: Option<(PacketRecord, Nanos)>,
    mitigator: Option<Mitigator>,
    detector_rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
    flood_starts: Vec<Nanos>,
    flood_skips: Vec<u64>,
    samples: Vec<QueueSample>,
    next_tick: Nanos,
    last_sample: Option<(u64, u64)>,
    peak_ad: u64,
    peak_sqf: u64,
    peak_held: u64,
    drain_armed: bool,
    drain_time: Option<Nanos>,
    last_completion: Nanos,
    forwarded: u64,
    consumed_plain: u64,
    inspected_plain: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    // Declaration order is the tie-break order at equal times.
    ServiceDone,
    SqfRelease,
    Arrival,
}

impl<'a> Engine<'a> {
    fn sqf_len(&self) -> u64 {
        self.sqf_queue.len() as u64
    }

    fn ad_len(&self) -> u64 {
        self.ad_queue.len() as u64 + self.in_service.is_some() as u64
    }

    fn next_event(&self) -> Option<(Nanos, Event)> {
        let mut best: Option<(Nanos, Event)> = None;
        let mut consider = |t: Nanos, e: Event| {
            if best.map_or(true, |b| (t, e) < b) {
                best = Some((t, e));
            }
        };
        if let Some((_, done)) = self.in_service {
            consider(done, Event::ServiceDone);
        }
        if let (Some(cfg), Some(head)) = (self.s.qdtp, self.sqf_queue.front()) {
            let t = match self.sqf_last_departure {
                None => head.arrival,
                Some(last) => head.arrival.max(last + cfg.d_spacing),
            };
            consider(t.max(self.now), Event::SqfRelease);
        }
        if let Some(p) = self.trace.get(self.next_arrival) {
            consider(p.arrival, Event::Arrival);
        }
        best
    }

    fn skipping(&self) -> bool {
        self.mitigator
            .as_ref()
            .is_some_and(|m| m.state().will_skip())
    }

    fn push_to_mitigator(&mut self, p: PacketRecord) -> Result<()> {
        let Some(mit) = self.mitigator.as_mut() else {
            self.consumed_plain += 1;
            self.inspected_plain += 1;
            self.forwarded += 1;
            return Ok(());
        };
        if self.s.skip_policy == SkipPolicy::OptimalPerEpisode && mit.state().mode() == Mode::Normal
        {
            let idx = self
                .flood_starts
                .iter()
                .rposition(|&start| start <= self.now)
                .unwrap_or(0);
            mit.cfg.skip_m = self.flood_skips[idx];
        }
        for action in mit.push(p, &mut self.detector_rng)? {
            if let Action::Forward(_) = action {
                self.forwarded += 1;
            }
        }
        let held = mit.state().pending().len() as u64;
        self.peak_held = self.peak_held.max(held);
        Ok(())
    }

    /// Drops skipped packets in stream order: detector queue first, then the
    /// forwarder queue. Future arrivals are handled as they arrive.
    fn apply_skips(&mut self) -> Result<()> {
        while self.skipping() {
            let next = if let Some(p) = self.ad_queue.pop_front() {
                p
            } else if let Some(p) = self.sqf_queue.pop_front() {
                p
            } else {
                break;
            };
            self.push_to_mitigator(next)?;
        }
        Ok(())
    }

    fn start_service(&mut self) {
        if self.in_service.is_some() {
            return;
        }
        if let Some(p) = self.ad_queue.pop_front() {
            let tau = self.s.detector.tau_inspect;
            let service = if self.s.service_jitter > 0.0 {
                let j = self.s.service_jitter;
                let u: f64 = self.jitter_rng.random_range(-j..=j);
                ((tau as f64) * (1.0 + u)).round() as Nanos
            } else {
                tau
            };
            self.in_service = Some((p, self.now + service.max(1)));
        }
    }

    fn record(&mut self) {
        let (sqf, ad) = (self.sqf_len(), self.ad_len());
        self.peak_sqf = self.peak_sqf.max(sqf);
        self.peak_ad = self.peak_ad.max(ad);
        if self.drain_armed && self.drain_time.is_none() && sqf == 0 && ad == 0 {
            self.drain_time = Some(self.now - self.flood_starts[0]);
        }
        if self.s.series == SeriesMode::Events && self.last_sample != Some((sqf, ad)) {
            self.samples.push(QueueSample {
                t: self.now,
                sqf_queue: sqf,
                ad_queue: ad,
            });
        }
        self.last_sample = Some((sqf, ad));
    }

    /// Emits cadence samples strictly before `until` using the lengths that
    /// held since the previous event.
    fn ticks_until(&mut self, until: Nanos) {
        if self.s.series == SeriesMode::Off {
            return;
        }
        let (sqf, ad) = self.last_sample.unwrap_or((0, 0));
        while self.next_tick < until {
            self.samples.push(QueueSample {
                t: self.next_tick,
                sqf_queue: sqf,
                ad_queue: ad,
            });
            self.next_tick += self.s.sample_period;
        }
    }

    fn run(mut self, realized_x: Vec<u64>) -> Result<SimResult> {
        while let Some((t, event)) = self.next_event() {
            self.ticks_until(t);
            self.now = t;
            match event {
                Event::ServiceDone => {
                    let (p, done) = self.in_service.take().expect("service in progress");
                    self.last_completion = done;
                    self.push_to_mitigator(p)?;
                }
                Event::SqfRelease => {
                    let p = self
                        .sqf_queue
                        .pop_front()
                        .expect("forwarder queue non-empty");
                    self.sqf_last_departure = Some(self.now);
                    self.ad_queue.push_back(p);
                }
                Event::Arrival => {
                    let p = self.trace[self.next_arrival];
                    self.next_arrival += 1;
                    if !self.flood_starts.is_empty() && p.arrival >= self.flood_starts[0] {
                        self.drain_armed = true;
                    }
                    if self.s.qdtp.is_some() {
                        self.sqf_queue.push_back(p);
                    } else {
                        self.ad_queue.push_back(p);
                    }
                }
            }
            self.apply_skips()?;
            // A packet arriving while a skip is pending and both queues are
            // empty was dropped by apply_skips; nothing else to do here.
            self.start_service();
            self.record();
        }
        if self.s.series != SeriesMode::Off {
            self.samples.push(QueueSample {
                t: self.now,
                sqf_queue: 0,
                ad_queue: 0,
            });
            self.samples.dedup();
        }

        let outcome = match self.mitigator.take() {
            Some(mit) => {
                let (outcome, flushed) = mit.finish();
                self.forwarded += flushed.len() as u64;
                outcome
            }
            None => MitigationOutcome {
                consumed: self.consumed_plain,
                forwarded_total: self.consumed_plain,
                inspection_time_total: self.inspected_plain * self.s.detector.tau_inspect,
                ..MitigationOutcome::default()
            },
        };
        let w = self.s.detector.window_w;
        let tau = self.s.detector.tau_inspect;
        let k_realized = realized_reprocessing(&outcome, w, tau);
        let omega_realized = outcome.inspection_time_omega;
        let realized_cost =
            self.s.cost.alpha * k_realized as f64 + self.s.cost.beta * omega_realized as f64;
        Ok(SimResult {
            samples: self.samples,
            outcome,
            realized_x,
            k_realized,
            omega_realized,
            realized_cost,
            peak_ad_queue: self.peak_ad,
            peak_sqf_queue: self.peak_sqf,
            peak_window_buffer: self.peak_held,
            drain_time: self.drain_time,
            last_service_completion: self.last_completion,
            forwarded_to_server: self.forwarded,
        })
    }
}

/// Runs one scenario to completion: every generated packet is forwarded,
/// dropped, or left in a trailing partial window.
pub fn run_scenario(s: &Scenario) -> Result<SimResult> {
    s.validate()?;
    let (trace, realized_x) = s.build_trace()?;
    run_trace(s, trace, realized_x)
}

/// Runs the engine over a pre-built trace (which must be sorted).
pub fn run_trace(
    s: &Scenario,
    trace: Vec<PacketRecord>,
    realized_x: Vec<u64>,
) -> Result<SimResult> {
    s.validate()?;
    crate::traffic::check_sorted(&trace)?;
    let mitigator = match s.aam {
        Some(cfg) => Some(Mitigator::new(cfg, s.detector)?),
        None => None,
    };
    let flood_skips = if s.skip_policy == SkipPolicy::OptimalPerEpisode {
        s.optimal_skips()?
    } else {
        Vec::new()
    };
    let engine = Engine {
        s,
        trace,
        next_arrival: 0,
        now: 0,
        sqf_queue: VecDeque::new(),
        sqf_last_departure: None,
        ad_queue: VecDeque::new(),
        in_service: None,
        mitigator,
        detector_rng: ChaCha8Rng::seed_from_u64(s.detector_seed()),
        jitter_rng: ChaCha8Rng::seed_from_u64(derive_seed(s.seed, STREAM_JITTER)),
        flood_starts: s.floods.iter().map(|f| f.start_time).collect(),
        flood_skips,
        samples: Vec::new(),
        next_tick: 0,
        last_sample: None,
        peak_ad: 0,
        peak_sqf: 0,
        peak_held: 0,
        drain_armed: false,
        drain_time: None,
        last_completion: 0,
        forwarded: 0,
        consumed_plain: 0,
        inspected_plain: 0,
    };
    engine.run(realized_x)
}

/// Per-replication summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSummary {
    pub rep: usize,
    pub seed: u64,
    pub realized_x: u64,
    pub n: u64,
    pub delta: u64,
    pub benign_dropped: u64,
    pub omega: Nanos,
    pub k: Nanos,
    pub cost: f64,
    pub peak_ad_queue: u64,
    pub peak_sqf_queue: u64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replications {
    /// Mean realized cost, nanoseconds.
    pub mean_cost: f64,
    /// Half-width of the normal-approximation 95% interval; 0 for one run.
    pub ci95: f64,
    pub per_rep: Vec<RepSummary>,
}

/// Seeds of the `reps` replications derived from `seed`.
pub fn replication_seeds(seed: u64, reps: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_REPLICATIONS);
    (0..reps).map(|_| rng.next_u64()).collect()
}

/// Runs `reps` independent replications in parallel and reduces their costs.
pub fn run_replications(s: &Scenario, reps: usize) -> Result<Replications> {
    if reps == 0 {
        return Err(Error::input("reps must be >= 1"));
    }
    s.validate()?;
    let seeds = replication_seeds(s.seed, reps);
    let per_rep = seeds
        .par_iter()
        .enumerate()
        .map(|(rep, &seed)| {
            let scenario = Scenario {
                seed,
                series: SeriesMode::Off,
                ..s.clone()
            };
            let r = run_scenario(&scenario)?;
            Ok(RepSummary {
                rep,
                seed,
                realized_x: r.realized_x.iter().sum(),
                n: r.outcome.mitigation_windows_n,
                delta: r.outcome.dropped_total,
                benign_dropped: r.outcome.dropped_benign,
                omega: r.omega_realized,
                k: r.k_realized,
                cost: r.realized_cost,
                peak_ad_queue: r.peak_ad_queue,
                peak_sqf_queue: r.peak_sqf_queue,
                episodes: r.outcome.attack_episodes.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let costs: Vec<f64> = per_rep.iter().map(|r| r.cost).collect();
    let (mean_cost, ci95) = mean_ci95(&costs);
    Ok(Replications {
        mean_cost,
        ci95,
        per_rep,
    })
}

/// Sample mean and the half-width `1.96 s / sqrt(n)` (0 when `n < 2`).
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Writes `t_ns,sqf_queue,ad_queue`.
pub fn write_series_csv<W: io::Write>(samples: &[QueueSample], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record(["t_ns", "sqf_queue", "ad_queue"])?;
    for s in samples {
        w.serialize((s.t, s.sqf_queue, s.ad_queue))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rep,seed,realized_x,n,delta,benign_dropped,omega_ms,k_ms,cost_ms`.
pub fn write_replications_csv<W: io::Write>(reps: &[RepSummary], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record([
        "rep",
        "seed",
        "realized_x",
        "n",
        "delta",
        "benign_dropped",
        "omega_ms",
        "k_ms",
        "cost_ms",
    ])?;
    for r in reps {
        w.serialize((
            r.rep,
            r.seed,
            r.realized_x,
            r.n,
            r.delta,
            r.benign_dropped,
            to_millis(r.omega as f64),
            to_millis(r.k as f64),
            to_millis(r.cost),
        ))?;
    }
    w.flush()?;
    Ok(())
}
