use std::path::PathBuf;
use std::process::ExitCode;

use abc_cli::{fluid, wifi, RunOverrides};
use abc_sim::fluid::Verdict;
use abc_sim::types::SimTime;
use abc_sim::wifi_estimator::EstimatorMode;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "abcsim", version, about = "Packet-level ABC congestion control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (or its sweep) and write logs to OUT.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override `run.duration_s`.
        #[arg(long)]
        duration: Option<f64>,
        /// Worker threads for sweeps; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Integrate the fluid model.
    Fluid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override `fluid.horizon_s`.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run the Wi-Fi capacity estimator on a MAC trace.
    WifiEstimate {
        /// CSV trace: time_us,b,S_bits,R_bps,M,T_IA_us[,user].
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        trace: Option<PathBuf>,
        /// Station profiles to generate a trace from.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Shared)]
        mode: Mode,
        #[arg(long, default_value_t = 40.0)]
        window_ms: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Shared,
    PerUser,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Command::Run {
            config,
            out,
            seed,
            duration,
            jobs,
        } => {
            let o = RunOverrides {
                seed,
                duration_s: duration,
            };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
            let results = pool.install(|| abc_cli::run_scenario(&config, &out, &o))?;
            for r in &results {
                println!("{}: {}", r.point.label(), r.dir.display());
            }
        }
        Command::Validate { config } => {
            let (_, points) = abc_cli::validate(&config, &RunOverrides::default())?;
            println!(
                "{}: ok ({} run{})",
                config.display(),
                points.len(),
                if points.len() == 1 { "" } else { "s" }
            );
        }
        Command::Fluid { config, out, duration } => match fluid::run(&config, &out, duration)? {
            Verdict::Converged { settling_time } => println!("converged after {settling_time:.3} s"),
            Verdict::Oscillating => println!("oscillating"),
        },
        Command::WifiEstimate {
            trace,
            config,
            out,
            mode,
            window_ms,
            seed,
            duration,
        } => {
            if !(window_ms.is_finite() && window_ms > 0.0) {
                anyhow::bail!("--window-ms must be positive");
            }
            let opts = wifi::Options {
                mode: match mode {
                    Mode::Shared => EstimatorMode::Shared,
                    Mode::PerUser => EstimatorMode::PerUser,
                },
                window: SimTime::from_secs_f64(window_ms / 1e3),
                seed,
                duration_s: duration,
            };
            let source = match (&trace, &config) {
                (Some(t), _) => wifi::Source::Trace(t),
                (None, Some(c)) => wifi::Source::Config(c),
                (None, None) => unreachable!("clap requires one"),
            };
            let est = wifi::run(source, &out, &opts)?;
            println!(
                "{} user(s), estimates in {}",
                est.len(),
                out.join("estimates.csv").display()
            );
        }
    }
    Ok(())
}
