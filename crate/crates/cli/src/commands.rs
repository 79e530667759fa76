//! Subcommand implementations. Each writes its CSV artifacts into an output
//! directory and a short report to `log`, and returns a summary for callers
//! that want the numbers without parsing text.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gateway_shield::aam::write_episodes_csv;
use gateway_shield::costmodel::{self, write_sweep_csv, CostParams};
use gateway_shield::qdtp::{shape_trace, spacing_violations, write_shaped_csv};
use gateway_shield::sim::{
    run_replications, run_scenario, write_replications_csv, write_series_csv, SkipPolicy,
};
use gateway_shield::time::{to_millis, Nanos};
use gateway_shield::traffic::read_trace_csv;
use gateway_shield::{AamConfig, QdtpConfig, Scenario};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Record of one invocation, written next to its outputs as `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_path: Option<String>,
    pub output_dir: String,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn write(&self) -> CliResult<()> {
        let text = toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))?;
        let path = Path::new(&self.output_dir).join("manifest.toml");
        fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn create(path: PathBuf) -> CliResult<BufWriter<File>> {
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io { path, source })
}

fn say(log: &mut dyn Write, line: String) -> CliResult<()> {
    writeln!(log, "{line}").map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeSummary {
    pub packets: usize,
    pub max_delay: Nanos,
    pub violations: usize,
}

pub fn cmd_shape(
    trace_csv: &Path,
    d_spacing: Nanos,
    out_dir: &Path,
    log: &mut dyn Write,
) -> CliResult<ShapeSummary> {
    let file = File::open(trace_csv).map_err(|source| CliError::Io {
        path: trace_csv.to_path_buf(),
        source,
    })?;
    let trace = read_trace_csv(BufReader::new(file))?;
    let cfg = QdtpConfig::new(d_spacing);
    let shaped = shape_trace(&trace, &cfg)?;
    ensure_dir(out_dir)?;
    write_shaped_csv(&shaped, create(out_dir.join("shaped.csv"))?)?;
    let summary = ShapeSummary {
        packets: shaped.len(),
        max_delay: shaped.iter().map(|s| s.delay).max().unwrap_or(0),
        violations: spacing_violations(&shaped, &cfg),
    };
    say(
        log,
        format!(
            "packets={} max_delay_ms={} spacing_violations={}",
            summary.packets,
            to_millis(summary.max_delay as f64),
            summary.violations
        ),
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSummary {
    pub m_star: u64,
    pub clamped: bool,
    pub c_star_ms: f64,
    pub brute_force_m: u64,
}

/// Default sweep range: comfortably past the optimum, never shorter than 200.
pub fn default_m_max(m_star: u64, w: u32) -> u64 {
    (4 * (m_star + w as u64)).max(200)
}

pub fn cmd_optimize(
    p: &CostParams,
    m_max: Option<u64>,
    verify: bool,
    out_dir: &Path,
    log: &mut dyn Write,
) -> CliResult<OptimizeSummary> {
    let m_star = costmodel::optimal_m(p)?;
    let clamped = costmodel::optimum_is_clamped(p)?;
    let c_star_ms = to_millis(costmodel::optimal_cost(p)?);
    let m_max = m_max.unwrap_or_else(|| default_m_max(m_star, p.w));
    let reports = (1..=m_max)
        .map(|m| costmodel::total_cost(p, m))
        .collect::<gateway_shield::Result<Vec<_>>>()?;
    let (brute_force_m, _) = costmodel::brute_force_m(p, m_max)?;
    ensure_dir(out_dir)?;
    write_sweep_csv(&reports, create(out_dir.join("sweep.csv"))?)?;

    if clamped {
        eprintln!("warning: optimum below 1, m* clamped to 1");
    }
    say(
        log,
        format!("m_star={m_star} c_star_ms={c_star_ms} brute_force_m={brute_force_m}"),
    )?;
    if verify && m_star.abs_diff(brute_force_m) > 1 {
        return Err(CliError::Verify(format!(
            "m*={m_star} but exhaustive sweep over 1..={m_max} gives {brute_force_m}"
        )));
    }
    Ok(OptimizeSummary {
        m_star,
        clamped,
        c_star_ms,
        brute_force_m,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub peak_ad_queue: u64,
    pub peak_sqf_queue: u64,
    pub drain_time: Option<Nanos>,
    pub episode_skips: Vec<u64>,
    pub mean_cost_ms: f64,
    pub ci95_ms: f64,
}

pub fn cmd_simulate(
    s: &Scenario,
    reps: usize,
    out_dir: &Path,
    log: &mut dyn Write,
) -> CliResult<SimulateSummary> {
    let run = run_scenario(s)?;
    let reps = run_replications(s, reps)?;
    ensure_dir(out_dir)?;
    write_series_csv(&run.samples, create(out_dir.join("series.csv"))?)?;
    write_episodes_csv(
        &run.outcome.attack_episodes,
        create(out_dir.join("episodes.csv"))?,
    )?;
    write_replications_csv(&reps.per_rep, create(out_dir.join("replications.csv"))?)?;

    let summary = SimulateSummary {
        peak_ad_queue: run.peak_ad_queue,
        peak_sqf_queue: run.peak_sqf_queue,
        drain_time: run.drain_time,
        episode_skips: run
            .outcome
            .attack_episodes
            .iter()
            .map(|e| e.skip_m)
            .collect(),
        mean_cost_ms: to_millis(reps.mean_cost),
        ci95_ms: to_millis(reps.ci95),
    };
    say(
        log,
        format!(
            "peak_ad_queue={} peak_sqf_queue={}",
            summary.peak_ad_queue, summary.peak_sqf_queue
        ),
    )?;
    match summary.drain_time {
        Some(t) => say(log, format!("drain_time_s={}", t as f64 / 1e9))?,
        None => say(log, "drain_time_s=none".into())?,
    }
    for (i, e) in run.outcome.attack_episodes.iter().enumerate() {
        say(
            log,
            format!(
                "episode {i}: seq {}..={} m={} windows={} dropped={}",
                e.start_seq, e.end_seq, e.skip_m, e.n_windows, e.delta_dropped
            ),
        )?;
    }
    say(
        log,
        format!(
            "mean_cost_ms={} ci95_ms={} reps={}",
            summary.mean_cost_ms,
            summary.ci95_ms,
            reps.per_rep.len()
        ),
    )?;
    Ok(summary)
}

/// Parses `lo:hi:step` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> CliResult<Vec<u64>> {
    let bad = |msg: &str| CliError::Config(format!("m grid {spec:?}: {msg}"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad("not an integer"));
    let grid: Vec<u64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, step] = parts[..] else {
            return Err(bad("expected lo:hi:step"));
        };
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if step == 0 {
            return Err(bad("step must be > 0"));
        }
        (lo..=hi).step_by(step as usize).collect()
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(num)
            .collect::<CliResult<_>>()?
    };
    if grid.is_empty() {
        return Err(bad("empty grid"));
    }
    if grid.contains(&0) {
        return Err(bad("m must be >= 1"));
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m: u64,
    pub analytic_ms: f64,
    pub sim_mean_ms: f64,
    pub sim_ci95_ms: f64,
}

/// Runs the scenario once per `m` with a fixed skip length. The analytic
/// column uses the first flood's `f` and `E[X]`.
pub fn cmd_sweep(
    s: &Scenario,
    grid: &[u64],
    reps: usize,
    out_dir: &Path,
    log: &mut dyn Write,
) -> CliResult<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(CliError::Config("empty m grid".into()));
    }
    if s.floods.is_empty() {
        return Err(CliError::Config("sweep needs at least one flood".into()));
    }
    let p = s.cost_params(0)?;
    let flush = s.aam.is_some_and(|a| a.flush_trailing);
    let mut rows = Vec::with_capacity(grid.len());
    for &m in grid {
        let scenario = Scenario {
            aam: Some(AamConfig {
                window_w: s.detector.window_w,
                skip_m: m,
                flush_trailing: flush,
            }),
            skip_policy: SkipPolicy::Fixed,
            ..s.clone()
        };
        let reps = run_replications(&scenario, reps)?;
        rows.push(SweepRow {
            m,
            analytic_ms: costmodel::total_cost(&p, m)?.c_total_ms(),
            sim_mean_ms: to_millis(reps.mean_cost),
            sim_ci95_ms: to_millis(reps.ci95),
        });
    }
    ensure_dir(out_dir)?;
    let mut out = create(out_dir.join("cost_vs_m.csv"))?;
    let io_err = |source| CliError::Io {
        path: out_dir.join("cost_vs_m.csv"),
        source,
    };
    writeln!(out, "m,analytic_c_ms,sim_mean_ms,sim_ci95_ms").map_err(io_err)?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.m, r.analytic_ms, r.sim_mean_ms, r.sim_ci95_ms
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;

    let best = rows
        .iter()
        .min_by(|a, b| a.sim_mean_ms.total_cmp(&b.sim_mean_ms))
        .expect("grid is non-empty");
    let m_star = costmodel::optimal_m(&p).ok();
    say(
        log,
        format!(
            "simulated_argmin_m={} analytic_m_star={}",
            best.m,
            m_star.map_or("undefined".into(), |m| m.to_string())
        ),
    )?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("20:100:20").unwrap(), vec![20, 40, 60, 80, 100]);
        assert_eq!(parse_grid("5, 7,9").unwrap(), vec![5, 7, 9]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("10:5:1").is_err());
        assert!(parse_grid("1:5:0").is_err());
        assert!(parse_grid("0,4").is_err());
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn default_sweep_range_covers_optimum() {
        assert_eq!(default_m_max(178, 20), 792);
        assert_eq!(default_m_max(1, 20), 200);
    }
}
