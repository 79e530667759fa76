//! Adaptive attack mitigation.
//!
//! In normal operation the detector tests consecutive `W`-packet windows and
//! forwards every window that is voted benign. A window voted ATTACK is
//! dropped and the mitigator enters the mitigating mode: it drops the next
//! `m` packets unseen, then tests another window. ATTACK windows are dropped
//! and the skip repeats; the first NO-ATTACK window is forwarded and ends the
//! episode.

use std::io;

use rand::Rng;

use crate::detector::{window_verdict, DetectorConfig, Verdict, WindowVerdict};
use crate::error::{Error, Result};
use crate::time::Nanos;
use crate::traffic::{Label, PacketRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AamConfig {
    pub window_w: u32,
    /// Packets dropped unseen between mitigation windows.
    pub skip_m: u64,
    /// Forward a trailing partial window untested when the stream ends.
    pub flush_trailing: bool,
}

impl AamConfig {
    pub fn new(window_w: u32, skip_m: u64) -> Self {
        AamConfig {
            window_w,
            skip_m,
            flush_trailing: false,
        }
    }

    pub fn validate(&self, det: &DetectorConfig) -> Result<()> {
        if self.window_w == 0 {
            return Err(Error::config("aam window_w must be >= 1"));
        }
        if self.skip_m == 0 {
            return Err(Error::config("aam skip_m must be >= 1"));
        }
        if self.window_w != det.window_w {
            return Err(Error::config(format!(
                "aam window_w ({}) differs from detector window_w ({})",
                self.window_w, det.window_w
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Normal,
    Mitigating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Forward(PacketRecord),
    Drop(PacketRecord),
    /// A window was classified; `mode` is the mode it was tested in.
    Tested {
        verdict: WindowVerdict,
        mode: Mode,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AamState {
    mode: Mode,
    pending: Vec<PacketRecord>,
    skip_remaining: u64,
    active_m: u64,
    last_seq: Option<u64>,
}

impl Default for AamState {
    fn default() -> Self {
        AamState {
            mode: Mode::Normal,
            pending: Vec::new(),
            skip_remaining: 0,
            active_m: 0,
            last_seq: None,
        }
    }
}

impl AamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Packets held for the window currently being filled.
    pub fn pending(&self) -> &[PacketRecord] {
        &self.pending
    }

    pub fn skip_remaining(&self) -> u64 {
        self.skip_remaining
    }

    /// True if the next packet will be dropped without inspection.
    pub fn will_skip(&self) -> bool {
        self.skip_remaining > 0
    }

    /// Skip length of the current episode (zero before the first episode).
    pub fn active_skip(&self) -> u64 {
        self.active_m
    }

    /// Advances the state machine by one packet.
    ///
    /// `cfg.skip_m` is latched when an episode starts; changing it mid-episode
    /// only affects later episodes.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        cfg: &AamConfig,
        det: &DetectorConfig,
        packet: PacketRecord,
        rng: &mut R,
    ) -> Result<Vec<Action>> {
        if let Some(prev) = self.last_seq {
            if packet.seq <= prev {
                return Err(Error::Ordering(format!(
                    "packet seq {} supplied after seq {prev}",
                    packet.seq
                )));
            }
        }
        if cfg.window_w != det.window_w {
            return Err(Error::config("aam and detector window sizes differ"));
        }
        self.last_seq = Some(packet.seq);

        if self.skip_remaining > 0 {
            self.skip_remaining -= 1;
            return Ok(vec![Action::Drop(packet)]);
        }

        self.pending.push(packet);
        if self.pending.len() < cfg.window_w as usize {
            return Ok(Vec::new());
        }

        let truths: Vec<Label> = self.pending.iter().map(|p| p.label).collect();
        let verdict = window_verdict(det, &truths, self.pending[0].seq, rng)?;
        let tested_in = self.mode;
        let mut actions = Vec::with_capacity(self.pending.len() + 1);
        actions.push(Action::Tested {
            verdict,
            mode: tested_in,
        });
        match verdict.verdict {
            Verdict::Attack => {
                actions.extend(self.pending.drain(..).map(Action::Drop));
                if tested_in == Mode::Normal {
                    self.active_m = cfg.skip_m;
                }
                self.mode = Mode::Mitigating;
                self.skip_remaining = self.active_m;
            }
            Verdict::NoAttack => {
                actions.extend(self.pending.drain(..).map(Action::Forward));
                self.mode = Mode::Normal;
            }
        }
        Ok(actions)
    }

    /// Forwards the trailing partial window untested.
    pub fn flush(&mut self) -> Vec<Action> {
        self.pending.drain(..).map(Action::Forward).collect()
    }
}

/// One mitigation episode: from the first ATTACK window to the NO-ATTACK
/// window that ends it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Episode {
    pub start_seq: u64,
    pub end_seq: u64,
    /// Skip length used throughout the episode.
    pub skip_m: u64,
    /// Windows tested in mitigating mode, including the final NO-ATTACK one.
    pub n_windows: u64,
    pub delta_dropped: u64,
    pub benign_dropped: u64,
    /// Inspection time spent on the `n_windows` mitigation windows.
    pub omega: Nanos,
    /// False if the stream ended mid-episode.
    pub closed: bool,
}

/// Counters accumulated over a mitigation run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MitigationOutcome {
    pub consumed: u64,
    pub windows_tested_total: u64,
    /// Windows tested in mitigating mode (realized `N`).
    pub mitigation_windows_n: u64,
    /// Realized `delta`.
    pub dropped_total: u64,
    pub dropped_benign: u64,
    pub forwarded_total: u64,
    /// Packets left in the partial window when the stream ended.
    pub buffered: u64,
    /// Inspection time over every tested window.
    pub inspection_time_total: Nanos,
    /// Inspection time over mitigation windows only (realized `Omega`).
    pub inspection_time_omega: Nanos,
    pub attack_episodes: Vec<Episode>,
}

impl MitigationOutcome {
    /// Folds the actions of one step (or a flush) into the counters.
    pub fn record(&mut self, actions: &[Action], window_w: u32) {
        for action in actions {
            match *action {
                Action::Forward(_) => self.forwarded_total += 1,
                Action::Drop(p) => {
                    self.dropped_total += 1;
                    let benign = p.label == Label::Benign;
                    if benign {
                        self.dropped_benign += 1;
                    }
                    if let Some(ep) = self.open_episode() {
                        ep.delta_dropped += 1;
                        ep.benign_dropped += benign as u64;
                        ep.end_seq = ep.end_seq.max(p.seq);
                    }
                }
                Action::Tested { verdict, mode } => {
                    self.windows_tested_total += 1;
                    self.inspection_time_total += verdict.inspection_cost;
                    let window_end = verdict.window_start_seq + window_w as u64 - 1;
                    match mode {
                        Mode::Normal => {
                            if verdict.verdict == Verdict::Attack {
                                self.attack_episodes.push(Episode {
                                    start_seq: verdict.window_start_seq,
                                    end_seq: window_end,
                                    skip_m: 0,
                                    n_windows: 0,
                                    delta_dropped: 0,
                                    benign_dropped: 0,
                                    omega: 0,
                                    closed: false,
                                });
                            }
                        }
                        Mode::Mitigating => {
                            self.mitigation_windows_n += 1;
                            self.inspection_time_omega += verdict.inspection_cost;
                            if let Some(ep) = self.open_episode() {
                                ep.n_windows += 1;
                                ep.omega += verdict.inspection_cost;
                                ep.end_seq = ep.end_seq.max(window_end);
                                if verdict.verdict == Verdict::NoAttack {
                                    ep.closed = true;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn open_episode(&mut self) -> Option<&mut Episode> {
        self.attack_episodes.last_mut().filter(|e| !e.closed)
    }

    pub(crate) fn set_episode_skip(&mut self, skip_m: u64) {
        if let Some(ep) = self.attack_episodes.last_mut() {
            if ep.skip_m == 0 {
                ep.skip_m = skip_m;
            }
        }
    }

    /// Packets dropped, forwarded or still buffered equal packets consumed.
    pub fn is_conserved(&self) -> bool {
        self.dropped_total + self.forwarded_total + self.buffered == self.consumed
    }
}

/// Drives an [`AamState`] and keeps the running [`MitigationOutcome`].
#[derive(Debug, Clone)]
pub struct Mitigator {
    pub cfg: AamConfig,
    pub det: DetectorConfig,
    state: AamState,
    outcome: MitigationOutcome,
}

impl Mitigator {
    pub fn new(cfg: AamConfig, det: DetectorConfig) -> Result<Self> {
        cfg.validate(&det)?;
        det.validate()?;
        Ok(Mitigator {
            cfg,
            det,
            state: AamState::new(),
            outcome: MitigationOutcome::default(),
        })
    }

    pub fn state(&self) -> &AamState {
        &self.state
    }

    pub fn outcome(&self) -> &MitigationOutcome {
        &self.outcome
    }

    pub fn push<R: Rng + ?Sized>(
        &mut self,
        packet: PacketRecord,
        rng: &mut R,
    ) -> Result<Vec<Action>> {
        let actions = self.state.step(&self.cfg, &self.det, packet, rng)?;
        self.outcome.consumed += 1;
        self.outcome.record(&actions, self.cfg.window_w);
        if self.state.mode() == Mode::Mitigating {
            self.outcome.set_episode_skip(self.state.active_skip());
        }
        self.outcome.buffered = self.state.pending().len() as u64;
        Ok(actions)
    }

    /// Ends the stream. The trailing partial window is forwarded untested if
    /// `cfg.flush_trailing` is set and otherwise reported as buffered.
    pub fn finish(mut self) -> (MitigationOutcome, Vec<Action>) {
        let actions = if self.cfg.flush_trailing {
            self.state.flush()
        } else {
            Vec::new()
        };
        self.outcome.record(&actions, self.cfg.window_w);
        self.outcome.buffered = self.state.pending().len() as u64;
        (self.outcome, actions)
    }
}

/// Runs the mitigation state machine over a sorted trace. The detector RNG is
/// seeded from `seed`.
pub fn run_mitigation(
    trace: &[PacketRecord],
    cfg: &AamConfig,
    det: &DetectorConfig,
    seed: u64,
) -> Result<MitigationOutcome> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut mitigator = Mitigator::new(*cfg, *det)?;
    for p in trace {
        mitigator.push(*p, &mut rng)?;
    }
    Ok(mitigator.finish().0)
}

/// Writes `episode,start_seq,end_seq,n_windows,delta_dropped,benign_dropped,omega_ns`.
pub fn write_episodes_csv<W: io::Write>(episodes: &[Episode], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record([
        "episode",
        "start_seq",
        "end_seq",
        "n_windows",
        "delta_dropped",
        "benign_dropped",
        "omega_ns",
    ])?;
    for (i, e) in episodes.iter().enumerate() {
        w.serialize((
            i,
            e.start_seq,
            e.end_seq,
            e.n_windows,
            e.delta_dropped,
            e.benign_dropped,
            e.omega,
        ))?;
    }
    w.flush()?;
    Ok(())
}
