use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hbf_core::channel::{derive_seed, export_channels, generate_geometric_channel, import_channels, ChannelFormat, PathRule};
use hbf_core::SolverConfig;
use hbf_sim::records::{write_records, write_summary, RecordFormat};
use hbf_sim::run::{init_seed, solve_one};
use hbf_sim::spec::{load_spec, Algorithm, Overrides, Scenario};
use hbf_sim::{run_convergence, run_sweep, SimError};

#[derive(Parser)]
#[command(name = "hbf", version, about = "Hybrid beamforming solvers and Monte Carlo sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep spec and write one record per solve.
    Sweep {
        spec: PathBuf,
        /// Record file (.csv or .json); defaults to `output` in the sweep spec.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-point mean sum rates as CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Write mean per-iteration sum-rate traces for a single-point spec.
    Convergence {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Design a beamformer for one channel from a channel file.
    Design {
        #[arg(long)]
        channel: PathBuf,
        /// Index of the channel within the file.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value = "su")]
        scenario: Scenario,
        #[arg(long)]
        algo: Algorithm,
        #[arg(long)]
        na: usize,
        #[arg(long)]
        ns: usize,
        #[arg(long, default_value_t = 1.0)]
        power: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw geometric channels and write them to a channel file.
    GenChannels {
        #[arg(long)]
        nt: usize,
        /// Receive antennas, or users for multi-user channels.
        #[arg(long)]
        nr: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        paths: usize,
        #[arg(long, default_value_t = 1.0)]
        noise_power: f64,
        /// json or binary; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<ChannelFormat>,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr: Option<Vec<f64>>,
    /// Comma-separated transmit antenna counts.
    #[arg(long, value_delimiter = ',')]
    nt: Option<Vec<usize>>,
    /// Comma-separated algorithm tags.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<Algorithm>>,
    /// Write zero wall times so reruns are byte-identical.
    #[arg(long)]
    deterministic: bool,
}

impl OverrideArgs {
    fn load(self, path: &Path) -> Result<hbf_sim::SweepSpec, SimError> {
        let spec = load_spec(path)?;
        let mut spec = Overrides {
            seed: self.seed,
            realizations: self.realizations,
            snr_db: self.snr,
            nt: self.nt,
            algorithms: self.algo,
        }
        .apply(spec)?;
        if self.deterministic {
            spec.timing = false;
        }
        Ok(spec)
    }
}

enum Failure {
    Spec(anyhow::Error),
    Solver(anyhow::Error),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Spec(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Spec(e)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Spec(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn output_path(out: Option<PathBuf>, spec_output: &Option<PathBuf>) -> anyhow::Result<PathBuf> {
    out.or_else(|| spec_output.clone())
        .context("no output path: pass --out or set `output` in the sweep spec")
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep { spec, out, summary, overrides } => {
            let spec = overrides.load(&spec)?;
            let out = output_path(out, &spec.output)?;
            let result = run_sweep(&spec)?;
            write_records(&result.records, &out, RecordFormat::from_path(&out))
                .with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = summary {
                write_summary(&result.records, &path).with_context(|| format!("writing {}", path.display()))?;
            }
            if result.failures > 0 {
                return Err(Failure::Solver(anyhow::anyhow!(
                    "{} of {} solves failed (recorded with NaN sum_rate)",
                    result.failures,
                    result.records.len()
                )));
            }
            Ok(())
        }
        Command::Convergence { spec, out, overrides } => {
            let spec = overrides.load(&spec)?;
            let out = output_path(out, &spec.output)?;
            let result = run_convergence(&spec)?;
            result.write_csv(&out).with_context(|| format!("writing {}", out.display()))?;
            if result.failures > 0 {
                return Err(Failure::Solver(anyhow::anyhow!("{} solves failed", result.failures)));
            }
            Ok(())
        }
        Command::Design { channel, index, scenario, algo, na, ns, power, seed, out } => {
            let channels = import_channels(&channel, ChannelFormat::from_path(&channel))
                .with_context(|| format!("reading {}", channel.display()))?;
            let ch = channels
                .get(index)
                .with_context(|| format!("{} holds {} channels, no index {index}", channel.display(), channels.len()))?;
            if !algo.supports(scenario) {
                return Err(Failure::Spec(anyhow::anyhow!("algorithm `{algo}` is not available for scenario {scenario}")));
            }
            let cfg = SolverConfig::new(power, ch.noise_power).with_seed(init_seed(derive_seed(seed, index as u64)));
            let outcome = solve_one(scenario, algo, &ch.matrix, na, ns, &cfg).map_err(|e| Failure::Solver(e.into()))?;
            let json = serde_json::to_string_pretty(&outcome).context("serializing outcome")?;
            std::fs::write(&out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
        Command::GenChannels { nt, nr, count, seed, paths, noise_power, format, force, out } => {
            if noise_power.is_nan() || noise_power <= 0.0 {
                return Err(Failure::Spec(anyhow::anyhow!("noise power must be positive")));
            }
            let rule = PathRule::Sampled { num_paths: paths };
            let channels = (0..count)
                .map(|r| {
                    let mut ch = generate_geometric_channel(derive_seed(seed, r as u64), nt, nr, &rule)?;
                    ch.noise_power = noise_power;
                    Ok(ch)
                })
                .collect::<hbf_core::Result<Vec<_>>>()
                .context("generating channels")?;
            let format = format.unwrap_or_else(|| ChannelFormat::from_path(&out));
            export_channels(&channels, &out, format, force).with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
    }
}
