//! Attack detector modelled as a confusion matrix with a fixed per-packet
//! inspection time and a majority vote over `W`-packet windows.
//!
//! Detector errors are independent per packet. The caller owns the RNG and
//! threads it through every call, so separate streams never interact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::time::{millis, Nanos};
use crate::traffic::Label;

pub const DEFAULT_TPR: f64 = 0.9971;
pub const DEFAULT_TNR: f64 = 0.9848;
pub const DEFAULT_TAU: Nanos = millis(3);
pub const DEFAULT_WINDOW: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// P(classified ATTACK | truth ATTACK).
    pub tpr: f64,
    /// P(classified BENIGN | truth BENIGN).
    pub tnr: f64,
    /// Inspection time per packet.
    pub tau_inspect: Nanos,
    pub window_w: u32,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            tpr: DEFAULT_TPR,
            tnr: DEFAULT_TNR,
            tau_inspect: DEFAULT_TAU,
            window_w: DEFAULT_WINDOW,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    /// A detector that never errs.
    pub fn perfect(tau_inspect: Nanos, window_w: u32) -> Self {
        DetectorConfig {
            tpr: 1.0,
            tnr: 1.0,
            tau_inspect,
            window_w,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tpr) || !(0.0..=1.0).contains(&self.tnr) {
            return Err(Error::config(format!(
                "tpr/tnr must lie in [0, 1], got {}/{}",
                self.tpr, self.tnr
            )));
        }
        if self.tau_inspect == 0 {
            return Err(Error::config("tau_inspect must be > 0"));
        }
        if self.window_w == 0 {
            return Err(Error::config("window_w must be >= 1"));
        }
        Ok(())
    }

    /// Inspection cost of one full window, `W * tau`.
    pub fn window_cost(&self) -> Nanos {
        self.window_w as Nanos * self.tau_inspect
    }

    /// The RNG stream a standalone detector draws from.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Attack,
    NoAttack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowVerdict {
    pub verdict: Verdict,
    pub attack_votes: u32,
    pub window_start_seq: u64,
    pub inspection_cost: Nanos,
}

/// Classifies one packet. Exactly one uniform draw is consumed per call.
pub fn classify_packet<R: Rng + ?Sized>(cfg: &DetectorConfig, truth: Label, rng: &mut R) -> Label {
    let u: f64 = rng.random();
    match truth {
        Label::Attack if u < cfg.tpr => Label::Attack,
        Label::Attack => Label::Benign,
        Label::Benign if u < cfg.tnr => Label::Benign,
        Label::Benign => Label::Attack,
    }
}

/// Strict majority: ATTACK iff more than `floor(W / 2)` votes. Ties forward.
pub fn majority(attack_votes: u32, window_w: u32) -> Verdict {
    if attack_votes > window_w / 2 {
        Verdict::Attack
    } else {
        Verdict::NoAttack
    }
}

/// Classifies a full window and takes the majority vote.
pub fn window_verdict<R: Rng + ?Sized>(
    cfg: &DetectorConfig,
    truths: &[Label],
    window_start_seq: u64,
    rng: &mut R,
) -> Result<WindowVerdict> {
    if truths.len() != cfg.window_w as usize {
        return Err(Error::input(format!(
            "window holds {} packets, expected {}",
            truths.len(),
            cfg.window_w
        )));
    }
    let attack_votes = truths
        .iter()
        .filter(|&&t| classify_packet(cfg, t, rng).is_attack())
        .count() as u32;
    Ok(WindowVerdict {
        verdict: majority(attack_votes, cfg.window_w),
        attack_votes,
        window_start_seq,
        inspection_cost: cfg.window_cost(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn perfect_detector_echoes_truth() {
        let cfg = DetectorConfig::perfect(DEFAULT_TAU, 20);
        let mut r = rng();
        for _ in 0..1000 {
            assert_eq!(classify_packet(&cfg, Label::Attack, &mut r), Label::Attack);
            assert_eq!(classify_packet(&cfg, Label::Benign, &mut r), Label::Benign);
        }
    }

    #[test]
    fn zero_tnr_flags_every_benign_packet() {
        let cfg = DetectorConfig {
            tnr: 0.0,
            ..DetectorConfig::default()
        };
        let mut r = rng();
        assert!((0..1000).all(|_| classify_packet(&cfg, Label::Benign, &mut r) == Label::Attack));
    }

    #[test]
    fn tpr_frequency_within_three_sigma() {
        let cfg = DetectorConfig::default();
        let mut r = rng();
        let trials = 1_000_000u32;
        let hits = (0..trials)
            .filter(|_| classify_packet(&cfg, Label::Attack, &mut r).is_attack())
            .count() as f64;
        let p = 0.9971;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let freq = hits / trials as f64;
        assert!((freq - p).abs() <= 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn window_majority_and_ties() {
        let cfg = DetectorConfig::perfect(DEFAULT_TAU, 20);
        let mut r = rng();
        let mut truths = vec![Label::Attack; 12];
        truths.extend(vec![Label::Benign; 8]);
        let v = window_verdict(&cfg, &truths, 100, &mut r).unwrap();
        assert_eq!(v.verdict, Verdict::Attack);
        assert_eq!(v.attack_votes, 12);
        assert_eq!(v.window_start_seq, 100);
        assert_eq!(v.inspection_cost, 20 * DEFAULT_TAU);

        let mut truths = vec![Label::Attack; 10];
        truths.extend(vec![Label::Benign; 10]);
        let v = window_verdict(&cfg, &truths, 0, &mut r).unwrap();
        assert_eq!(v.verdict, Verdict::NoAttack);
        assert_eq!(v.attack_votes, 10);
    }

    #[test]
    fn single_packet_window() {
        let cfg = DetectorConfig::perfect(DEFAULT_TAU, 1);
        let v = window_verdict(&cfg, &[Label::Attack], 0, &mut rng()).unwrap();
        assert_eq!(v.verdict, Verdict::Attack);
        assert_eq!(v.inspection_cost, DEFAULT_TAU);
    }

    #[test]
    fn wrong_window_length() {
        let cfg = DetectorConfig::perfect(DEFAULT_TAU, 4);
        assert!(matches!(
            window_verdict(&cfg, &[Label::Attack; 3], 0, &mut rng()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn perfect_window_is_majority_function_exhaustively() {
        for w in 1..=8u32 {
            let cfg = DetectorConfig::perfect(DEFAULT_TAU, w);
            for mask in 0u32..(1 << w) {
                let truths: Vec<Label> = (0..w)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            Label::Attack
                        } else {
                            Label::Benign
                        }
                    })
                    .collect();
                let v = window_verdict(&cfg, &truths, 0, &mut rng()).unwrap();
                let ones = mask.count_ones();
                assert_eq!(v.attack_votes, ones);
                let expected = if 2 * ones > w {
                    Verdict::Attack
                } else {
                    Verdict::NoAttack
                };
                assert_eq!(v.verdict, expected, "w={w} mask={mask:b}");
            }
        }
    }

    #[test]
    fn verdicts_reproducible_per_seed() {
        let cfg = DetectorConfig {
            tpr: 0.7,
            tnr: 0.6,
            ..DetectorConfig::default()
        };
        let truths: Vec<Label> = (0..20)
            .map(|i| {
                if i % 3 == 0 {
                    Label::Benign
                } else {
                    Label::Attack
                }
            })
            .collect();
        let run = || {
            let mut r = cfg.rng();
            (0..50)
                .map(|i| window_verdict(&cfg, &truths, i, &mut r).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        for bad in [
            DetectorConfig {
                tpr: 1.1,
                ..Default::default()
            },
            DetectorConfig {
                tnr: -0.1,
                ..Default::default()
            },
            DetectorConfig {
                tau_inspect: 0,
                ..Default::default()
            },
            DetectorConfig {
                window_w: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
