//! Analytic cost of adaptive mitigation and its optimal skip length.
//!
//! For an attack of `X` packets (mean `E[X]`), window `W`, skip `m`,
//! inspection time `tau` and malicious fraction `f`:
//!
//! ```text
//! N     = ceil((X - W) / (m + W))       E[N]     ~ (E[X] - W) / (m + W) + 1/2
//! Omega = N tau W                       E[Omega] ~ tau W E[N]
//! delta = W + N (m + W)                 E[delta] ~ E[X] + (m + W) / 2
//! K     = tau W ceil((fX + delta - X) / W)
//!                                       E[K]     ~ tau (f E[X] + m/2 + W)
//! C     = alpha E[K] + beta E[Omega]
//! ```
//!
//! `dC/dm` vanishes at `m* = sqrt(2 (beta/alpha) W (E[X] - W)) - W`, which
//! depends on neither `tau` nor `f`.
//!
//! Expectations are real-valued nanoseconds; the exact per-attack quantities
//! are integer nanoseconds.

use std::io;

use crate::error::{Error, Result};
use crate::time::{to_millis, Nanos};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Weight of re-inspecting benign packets dropped by mistake.
    pub alpha: f64,
    /// Weight of inspection overhead during the attack.
    pub beta: f64,
    /// Malicious fraction of the attack traffic.
    pub f: f64,
    /// Mean attack size `E[X]` in packets.
    pub expected_x: f64,
    pub tau: Nanos,
    pub w: u32,
}

impl CostParams {
    pub fn new(alpha: f64, beta: f64, f: f64, expected_x: f64, tau: Nanos, w: u32) -> Result<Self> {
        let p = CostParams {
            alpha,
            beta,
            f,
            expected_x,
            tau,
            w,
        };
        p.validate()?;
        Ok(p)
    }

    /// Weights may individually be zero (single-term costs) but not both.
    pub fn validate(&self) -> Result<()> {
        let weight_ok = |v: f64| v.is_finite() && v >= 0.0;
        if !weight_ok(self.alpha) || !weight_ok(self.beta) || self.alpha + self.beta == 0.0 {
            return Err(Error::input(format!(
                "cost weights must be non-negative and not both zero (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        if !(self.f > 0.0 && self.f <= 1.0) {
            return Err(Error::input(format!(
                "f must lie in (0, 1], got {}",
                self.f
            )));
        }
        if self.w == 0 {
            return Err(Error::input("W must be >= 1"));
        }
        if !(self.expected_x.is_finite() && self.expected_x >= self.w as f64) {
            return Err(Error::input(format!(
                "E[X] ({}) must be at least W ({})",
                self.expected_x, self.w
            )));
        }
        Ok(())
    }

    fn w(&self) -> f64 {
        self.w as f64
    }

    fn tau(&self) -> f64 {
        self.tau as f64
    }

    /// `E[X] - W`, the part of the attack left after the first window.
    fn remainder(&self) -> f64 {
        self.expected_x - self.w()
    }
}

/// Expected quantities at one skip length. Times are nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub at_m: u64,
    pub e_n: f64,
    pub e_omega: f64,
    pub e_delta: f64,
    pub e_k: f64,
    pub c_total: f64,
}

impl CostReport {
    pub fn e_omega_ms(&self) -> f64 {
        to_millis(self.e_omega)
    }

    pub fn e_k_ms(&self) -> f64 {
        to_millis(self.e_k)
    }

    pub fn c_total_ms(&self) -> f64 {
        to_millis(self.c_total)
    }
}

fn check_m(m: u64) -> Result<()> {
    if m == 0 {
        Err(Error::input("skip length m must be >= 1"))
    } else {
        Ok(())
    }
}

/// First-order approximation of `E[N]`.
pub fn expected_windows(p: &CostParams, m: u64) -> Result<f64> {
    check_m(m)?;
    Ok(p.remainder() / (m as f64 + p.w()) + 0.5)
}

/// `N = ceil((X - W) / (m + W))` for a realized attack size.
pub fn exact_windows(x: u64, w: u32, m: u64) -> Result<u64> {
    check_m(m)?;
    let w = w as u64;
    if x < w {
        return Err(Error::input(format!("X ({x}) must be at least W ({w})")));
    }
    Ok((x - w).div_ceil(m + w))
}

/// `E[Omega]` in nanoseconds.
pub fn expected_overhead(p: &CostParams, m: u64) -> Result<f64> {
    Ok(p.tau() * p.w() * expected_windows(p, m)?)
}

/// `Omega = N tau W` for a realized window count.
pub fn exact_overhead(n: u64, w: u32, tau: Nanos) -> Nanos {
    n * w as Nanos * tau
}

/// `E[delta]`, expected packets dropped.
pub fn expected_drops(p: &CostParams, m: u64) -> Result<f64> {
    check_m(m)?;
    Ok(p.expected_x + (m as f64 + p.w()) / 2.0)
}

/// `delta = W + N (m + W)` for a realized window count.
pub fn exact_drops(n: u64, w: u32, m: u64) -> u64 {
    w as u64 + n * (m + w as u64)
}

/// `E[K]` in nanoseconds.
pub fn expected_reprocessing(p: &CostParams, m: u64) -> Result<f64> {
    check_m(m)?;
    Ok(p.tau() * (p.f * p.expected_x + m as f64 / 2.0 + p.w()))
}

/// `K = tau W ceil((fX + delta - X) / W)`, floored at zero.
pub fn exact_reprocessing(x: u64, delta: u64, f: f64, w: u32, tau: Nanos) -> Nanos {
    let lost = f * x as f64 + delta as f64 - x as f64;
    let windows = (lost / w as f64).ceil().max(0.0) as u64;
    tau * w as Nanos * windows
}

/// `C = alpha E[K] + beta E[Omega]` with every intermediate expectation.
pub fn total_cost(p: &CostParams, m: u64) -> Result<CostReport> {
    let e_k = expected_reprocessing(p, m)?;
    let e_omega = expected_overhead(p, m)?;
    Ok(CostReport {
        at_m: m,
        e_n: expected_windows(p, m)?,
        e_omega,
        e_delta: expected_drops(p, m)?,
        e_k,
        c_total: p.alpha * e_k + p.beta * e_omega,
    })
}

/// Stationary point of the continuous cost, before rounding and clamping.
pub fn continuous_optimum(p: &CostParams) -> Result<f64> {
    p.validate()?;
    if p.alpha == 0.0 {
        return Err(Error::input("optimal m is unbounded when alpha = 0"));
    }
    Ok((2.0 * (p.beta / p.alpha) * p.w() * p.remainder()).sqrt() - p.w())
}

/// `m*` rounded to the nearest integer and clamped to at least 1.
pub fn optimal_m(p: &CostParams) -> Result<u64> {
    Ok(clamp_m(continuous_optimum(p)?))
}

/// True when the unclamped optimum lies below 1 and [`optimal_m`] clamps it.
pub fn optimum_is_clamped(p: &CostParams) -> Result<bool> {
    Ok(continuous_optimum(p)?.round() < 1.0)
}

fn clamp_m(m: f64) -> u64 {
    m.round().max(1.0) as u64
}

/// Minimum of the continuous cost, in nanoseconds:
///
/// ```text
/// C* = alpha tau [f E[X] + sqrt(beta/(2 alpha) W (E[X]-W)) + W/2]
///    + beta tau W [(E[X]-W) / sqrt(2 (beta/alpha) W (E[X]-W)) + 1/2]
/// ```
///
/// When `E[X] = W` or `beta = 0` the second bracket is `0/0`; its limit is 0.
pub fn optimal_cost(p: &CostParams) -> Result<f64> {
    p.validate()?;
    if p.alpha == 0.0 {
        return Err(Error::input("optimal cost is undefined when alpha = 0"));
    }
    let (a, b, w, tau, rem) = (p.alpha, p.beta, p.w(), p.tau(), p.remainder());
    let reprocessing = a * tau * (p.f * p.expected_x + (b / (2.0 * a) * w * rem).sqrt() + w / 2.0);
    let root = (2.0 * (b / a) * w * rem).sqrt();
    let ratio = if root > 0.0 { rem / root } else { 0.0 };
    let overhead = b * tau * w * (ratio + 0.5);
    Ok(reprocessing + overhead)
}

/// Exhaustive minimiser of [`total_cost`] over `m` in `1..=m_max`; ties go to
/// the smallest `m`. Returns `(m, cost_ns)`.
pub fn brute_force_m(p: &CostParams, m_max: u64) -> Result<(u64, f64)> {
    check_m(m_max)?;
    p.validate()?;
    let mut best = (1, f64::INFINITY);
    for m in 1..=m_max {
        let c = total_cost(p, m)?.c_total;
        if c < best.1 {
            best = (m, c);
        }
    }
    Ok(best)
}

/// Cost of one realized attack of `x` packets using the exact (ceiling)
/// accounting, in nanoseconds.
pub fn exact_cost(p: &CostParams, x: u64, m: u64) -> Result<f64> {
    let n = exact_windows(x, p.w, m)?;
    let delta = exact_drops(n, p.w, m);
    let k = exact_reprocessing(x, delta, p.f, p.w, p.tau);
    let omega = exact_overhead(n, p.w, p.tau);
    Ok(p.alpha * k as f64 + p.beta * omega as f64)
}

/// Minimiser of the mean [`exact_cost`] over sampled attack sizes. Use this
/// where the first-order approximation is poor (`m + W` comparable to
/// `E[X] - W`).
pub fn brute_force_m_exact(p: &CostParams, xs: &[u64], m_max: u64) -> Result<(u64, f64)> {
    check_m(m_max)?;
    if xs.is_empty() {
        return Err(Error::input("no attack sizes supplied"));
    }
    let mut best = (1, f64::INFINITY);
    for m in 1..=m_max {
        let mut sum = 0.0;
        for &x in xs {
            sum += exact_cost(p, x, m)?;
        }
        let mean = sum / xs.len() as f64;
        if mean < best.1 {
            best = (m, mean);
        }
    }
    Ok(best)
}

/// `m*` as a function of `E[X]` for a fixed `beta/alpha`.
pub fn mstar_curve(w: u32, beta_over_alpha: f64, ex_values: &[f64]) -> Result<Vec<(f64, u64)>> {
    if !(beta_over_alpha.is_finite() && beta_over_alpha >= 0.0) {
        return Err(Error::input(format!(
            "beta/alpha must be non-negative, got {beta_over_alpha}"
        )));
    }
    ex_values
        .iter()
        .map(|&ex| {
            let p = CostParams {
                alpha: 1.0,
                beta: beta_over_alpha,
                f: 1.0,
                expected_x: ex,
                tau: 1,
                w,
            };
            Ok((ex, optimal_m(&p)?))
        })
        .collect()
}

/// Writes the m-sweep as `m,e_n,e_omega_ms,e_k_ms,c_total_ms`.
pub fn write_sweep_csv<W: io::Write>(reports: &[CostReport], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record(["m", "e_n", "e_omega_ms", "e_k_ms", "c_total_ms"])?;
    for r in reports {
        w.serialize((r.at_m, r.e_n, r.e_omega_ms(), r.e_k_ms(), r.c_total_ms()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `(E[X], beta/alpha, m*)` rows as `ex,beta_over_alpha,m_star`.
pub fn write_curve_csv<W: io::Write>(rows: &[(f64, f64, u64)], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record(["ex", "beta_over_alpha", "m_star"])?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
