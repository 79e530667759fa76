use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gateway_shield::costmodel::CostParams;
use gateway_shield::time::NANOS_PER_MILLI;
use gateway_shield::Nanos;
use gateway_shield_cli::commands::{
    cmd_optimize, cmd_shape, cmd_simulate, cmd_sweep, ensure_dir, parse_grid, RunManifest,
};
use gateway_shield_cli::{CliError, CliResult, ScenarioFile};

/// Flood-mitigation simulator for IoT gateways.
#[derive(Debug, Parser)]
#[command(name = "gateway-shield", version)]
struct Cli {
    /// Directory for CSV outputs and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pace a trace CSV and write `shaped.csv`.
    Shape {
        trace: PathBuf,
        /// Minimum departure spacing in milliseconds.
        #[arg(long, default_value_t = 3.0)]
        d_ms: f64,
    },
    /// Compute the optimal skip length and write the cost sweep `sweep.csv`.
    Optimize {
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Malicious fraction of attack traffic.
        #[arg(long, default_value_t = 1.0)]
        f: f64,
        /// Expected attack size in packets.
        #[arg(long)]
        ex: f64,
        #[arg(long, default_value_t = 3.0)]
        tau_ms: f64,
        #[arg(long, default_value_t = 20)]
        w: u32,
        /// Largest m in the sweep.
        #[arg(long)]
        m_max: Option<u64>,
        /// Fail with exit code 4 unless m* is within 1 of the exhaustive argmin.
        #[arg(long)]
        verify: bool,
    },
    /// Run a scenario: `series.csv`, `episodes.csv`, `replications.csv`.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        reps: usize,
    },
    /// Simulated and analytic cost per skip length: `cost_vs_m.csv`.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `lo:hi:step` or a comma-separated list.
        #[arg(long)]
        m_grid: String,
        #[arg(long, default_value_t = 30)]
        reps: usize,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, env = "GATEWAY_SHIELD_SEED")]
    seed: Option<u64>,
    /// Scenario override, e.g. `--set flood.0.rate_pps=8000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Forward a trailing partial window instead of leaving it buffered.
    #[arg(long)]
    flush: bool,
}

impl RunArgs {
    fn load(&self) -> CliResult<gateway_shield::Scenario> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if self.flush {
            overrides.push("aam.flush_trailing=true".into());
        }
        ScenarioFile::load(&self.scenario, &overrides)?.to_scenario()
    }

    fn manifest(&self, command: &str, out: &Path, seed: u64) -> RunManifest {
        RunManifest {
            command: command.into(),
            scenario_path: Some(self.scenario.display().to_string()),
            output_dir: out.display().to_string(),
            overrides: self.overrides.clone(),
            seed: Some(seed),
        }
    }
}

fn ms(value: f64, flag: &str) -> CliResult<Nanos> {
    if !value.is_finite() || value < 0.0 {
        return Err(CliError::Config(format!("--{flag} must be non-negative")));
    }
    Ok((value * NANOS_PER_MILLI as f64).round() as Nanos)
}

fn run(cli: Cli) -> CliResult<()> {
    let out = cli.out.as_path();
    let mut stdout = io::stdout().lock();
    let manifest = match &cli.command {
        Command::Shape { trace, d_ms } => {
            cmd_shape(trace, ms(*d_ms, "d-ms")?, out, &mut stdout)?;
            let m = RunManifest {
                command: "shape".into(),
                scenario_path: Some(trace.display().to_string()),
                output_dir: out.display().to_string(),
                overrides: Vec::new(),
                seed: None,
            };
            m
        }
        Command::Optimize {
            alpha,
            beta,
            f,
            ex,
            tau_ms,
            w,
            m_max,
            verify,
        } => {
            let p = CostParams::new(*alpha, *beta, *f, *ex, ms(*tau_ms, "tau-ms")?, *w)?;
            ensure_dir(out)?;
            let result = cmd_optimize(&p, *m_max, *verify, out, &mut stdout);
            let m = RunManifest {
                command: "optimize".into(),
                scenario_path: None,
                output_dir: out.display().to_string(),
                overrides: Vec::new(),
                seed: None,
            };
            m.write()?;
            result?;
            return Ok(());
        }
        Command::Simulate { run, reps } => {
            let s = run.load()?;
            cmd_simulate(&s, *reps, out, &mut stdout)?;
            run.manifest("simulate", out, s.seed)
        }
        Command::Sweep { run, m_grid, reps } => {
            let grid = parse_grid(m_grid)?;
            let s = run.load()?;
            cmd_sweep(&s, &grid, *reps, out, &mut stdout)?;
            run.manifest("sweep", out, s.seed)
        }
    };
    manifest.write()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
