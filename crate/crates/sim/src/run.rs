//! Sweep and convergence runs.
//!
//! Realization `r` uses seed `derive_seed(master_seed, r)` for its channel
//! draw and `derive_seed(that, 1)` as the solver initialization seed, so every
//! algorithm and every SNR point of a realization sees the same channel and
//! the same starting beamformer.

use std::path::Path;
use std::time::Instant;

use hbf_core::channel::{derive_seed, generate_geometric_channel, import_channels, ChannelFormat, PathRule};
use hbf_core::hybrid::PartitionSpec;
use hbf_core::mu::{self, MuChannelSet};
use hbf_core::{su, CMat, SolverConfig, SolverOutcome};
use rayon::prelude::*;

use crate::records::ResultRecord;
use crate::spec::{Algorithm, ChannelSource, Scenario, SweepPoint, SweepSpec, SweptAxis, DEFAULT_REALIZATIONS};
use crate::SimError;

const INIT_STREAM: u64 = 1;

pub fn realization_seed(master_seed: u64, index: usize) -> u64 {
    derive_seed(master_seed, index as u64)
}

pub fn init_seed(realization_seed: u64) -> u64 {
    derive_seed(realization_seed, INIT_STREAM)
}

/// `N0 = P / 10^(snr/10)`.
pub fn noise_power_for_snr(power: f64, snr_db: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

/// Runs one algorithm on one channel (`nr x nt`, or `nu x nt` with rows `h_k^H`).
pub fn solve_one(
    scenario: Scenario,
    algorithm: Algorithm,
    h: &CMat,
    na: usize,
    ns: usize,
    cfg: &SolverConfig,
) -> hbf_core::Result<SolverOutcome> {
    let (p, n0) = (cfg.power, cfg.noise_power);
    let partition = || PartitionSpec::new(h.ncols(), na, ns);
    match scenario {
        Scenario::Su => match algorithm {
            Algorithm::DigitalSvd => su::digital_svd_baseline(h, p, n0, ns),
            Algorithm::AnalogSvd => su::analog_single_stream(h, p, n0),
            Algorithm::FaWmmse => su::solve_fa_wmmse(h, &partition()?, cfg),
            Algorithm::SaWmmse => su::solve_sa_wmmse(h, &partition()?, cfg),
            Algorithm::TxRxZf => su::txrx_zf(h, &partition()?, cfg),
            Algorithm::DigitalWmmse => su::digital_wmmse(h, ns, cfg),
            other => Err(hbf_core::Error::InvalidArgument(format!("`{other}` is a multi-user algorithm"))),
        },
        Scenario::Mu => {
            let ch = MuChannelSet::new(h.clone(), n0)?;
            match algorithm {
                Algorithm::DigitalWmmse => mu::digital_mu_wmmse(&ch, cfg),
                Algorithm::DigitalZf => mu::digital_mu_zf(&ch, p),
                Algorithm::FaWmmse => mu::solve_mu_fa_wmmse(&ch, &partition()?, cfg),
                Algorithm::SaWmmse => mu::solve_mu_sa_wmmse(&ch, &partition()?, cfg),
                Algorithm::SaZf => mu::mu_subarray_zf(&ch, &partition()?, p),
                other => Err(hbf_core::Error::InvalidArgument(format!("`{other}` is a single-user algorithm"))),
            }
        }
    }
}

/// A channel for one realization at one sweep point, with its noise power.
struct Draw {
    matrix: CMat,
    noise_power: f64,
}

enum Channels {
    Geometric { num_paths: usize },
    File(Vec<hbf_core::channel::ChannelRealization>),
}

impl Channels {
    fn draw(&self, spec: &SweepSpec, point: &SweepPoint, seed: u64, index: usize) -> Result<Draw, SimError> {
        match self {
            Channels::Geometric { num_paths } => {
                let snr = point.snr_db.expect("geometric sweeps carry an SNR");
                let rule = PathRule::Sampled { num_paths: *num_paths };
                let ch = generate_geometric_channel(seed, point.nt, point.nr, &rule)?;
                Ok(Draw { matrix: ch.matrix, noise_power: noise_power_for_snr(spec.power, snr) })
            }
            Channels::File(list) => {
                let ch = &list[index];
                Ok(Draw { matrix: ch.matrix.clone(), noise_power: ch.noise_power })
            }
        }
    }
}

struct Prepared {
    points: Vec<SweepPoint>,
    realizations: usize,
    channels: Channels,
}

fn prepare(spec: &SweepSpec) -> Result<Prepared, SimError> {
    spec.validate()?;
    let points = spec.points()?;
    let (channels, realizations) = match &spec.channel_source {
        ChannelSource::Geometric => (
            Channels::Geometric { num_paths: spec.num_paths },
            spec.realizations.unwrap_or(DEFAULT_REALIZATIONS),
        ),
        ChannelSource::File(path) => {
            let list = load_channel_file(path)?;
            if matches!(spec.swept_axis()?, SweptAxis::Nt | SweptAxis::Nr) {
                return Err(SimError::Spec("file channels fix nt and nr; they cannot be swept".into()));
            }
            let r = spec.realizations.unwrap_or(list.len());
            if r > list.len() {
                return Err(SimError::Spec(format!(
                    "{r} realizations requested but {} holds {} channels",
                    path.display(),
                    list.len()
                )));
            }
            let p = &points[0];
            for (i, ch) in list.iter().take(r).enumerate() {
                if ch.n_rx() != p.nr || ch.n_tx() != p.nt {
                    return Err(SimError::Spec(format!(
                        "channel {i} in {} is {}x{}, spec expects {}x{}",
                        path.display(),
                        ch.n_rx(),
                        ch.n_tx(),
                        p.nr,
                        p.nt
                    )));
                }
            }
            (Channels::File(list), r)
        }
    };
    Ok(Prepared { points, realizations, channels })
}

fn load_channel_file(path: &Path) -> Result<Vec<hbf_core::channel::ChannelRealization>, SimError> {
    import_channels(path, ChannelFormat::from_path(path))
        .map_err(|e| SimError::Spec(format!("channel file {}: {e}", path.display())))
}

fn solver_config(spec: &SweepSpec, noise_power: f64, seed: u64) -> SolverConfig {
    let mut cfg = SolverConfig::new(spec.power, noise_power).with_seed(init_seed(seed));
    spec.solver.apply(&mut cfg);
    cfg
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Ordered by sweep point, then algorithm (spec order), then realization.
    pub records: Vec<ResultRecord>,
    /// Solves that returned an error (their records carry NaN rates).
    pub failures: usize,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput, SimError> {
    let prep = prepare(spec)?;
    let jobs: Vec<(usize, usize)> = (0..prep.points.len())
        .flat_map(|p| (0..prep.realizations).map(move |r| (p, r)))
        .collect();
    let results: Vec<Vec<ResultRecord>> = jobs
        .par_iter()
        .map(|&(p, r)| realization_records(spec, &prep, p, r))
        .collect::<Result<_, _>>()?;

    let n_alg = spec.algorithms.len();
    let mut records = Vec::with_capacity(results.len() * n_alg);
    for point in results.chunks(prep.realizations) {
        for a in 0..n_alg {
            records.extend(point.iter().map(|per_alg| per_alg[a].clone()));
        }
    }
    let failures = records.iter().filter(|r| r.sum_rate.is_nan()).count();
    Ok(SweepOutput { records, failures })
}

fn realization_records(spec: &SweepSpec, prep: &Prepared, p: usize, r: usize) -> Result<Vec<ResultRecord>, SimError> {
    let point = &prep.points[p];
    let seed = realization_seed(spec.master_seed, r);
    let draw = prep.channels.draw(spec, point, seed, r)?;
    let cfg = solver_config(spec, draw.noise_power, seed);
    let snr_db = point.snr_db.unwrap_or_else(|| 10.0 * (spec.power / draw.noise_power).log10());
    Ok(spec
        .algorithms
        .iter()
        .map(|&alg| {
            let start = Instant::now();
            let outcome = solve_one(spec.scenario, alg, &draw.matrix, point.na, point.ns, &cfg);
            let wall_time_ms = if spec.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let (sum_rate, iterations, converged) = match &outcome {
                Ok(o) => (o.sum_rate, o.iterations, o.converged),
                Err(_) => (f64::NAN, 0, false),
            };
            ResultRecord {
                scenario: spec.scenario,
                algorithm: alg,
                nt: point.nt,
                nr_or_nu: point.nr,
                ns: point.ns,
                na: point.na,
                snr_db,
                realization_index: r,
                seed,
                sum_rate,
                iterations,
                converged,
                wall_time_ms,
            }
        })
        .collect())
}

/// Per-iteration sum-rate traces of a single-point spec.
#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub algorithms: Vec<Algorithm>,
    /// `traces[a][r]`; empty for failed solves. Closed-form baselines
    /// contribute their final rate as a one-entry trace.
    pub traces: Vec<Vec<Vec<f64>>>,
    pub failures: usize,
}

impl ConvergenceRun {
    /// Mean over realizations, each trace padded with its last value to the
    /// longest length. Failed solves are left out of the mean.
    pub fn mean_traces(&self) -> Vec<Vec<f64>> {
        let len = self.traces.iter().flatten().map(Vec::len).max().unwrap_or(0);
        self.traces
            .iter()
            .map(|runs| {
                let ok: Vec<&Vec<f64>> = runs.iter().filter(|t| !t.is_empty()).collect();
                (0..len)
                    .map(|i| {
                        let sum: f64 = ok.iter().map(|t| t[i.min(t.len() - 1)]).sum();
                        if ok.is_empty() {
                            f64::NAN
                        } else {
                            sum / ok.len() as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// CSV with an `iteration` column (from 1) and one mean-trace column per algorithm.
    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        let mean = self.mean_traces();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        let mut header = vec!["iteration".to_string()];
        header.extend(self.algorithms.iter().map(|a| a.tag().to_string()));
        w.write_record(&header)?;
        let len = mean.first().map_or(0, Vec::len);
        for i in 0..len {
            let mut row = vec![(i + 1).to_string()];
            row.extend(mean.iter().map(|t| t[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_convergence(spec: &SweepSpec) -> Result<ConvergenceRun, SimError> {
    let prep = prepare(spec)?;
    if prep.points.len() != 1 {
        return Err(SimError::Spec("convergence runs take a single sweep point".into()));
    }
    let point = prep.points[0];
    let per_realization: Vec<Vec<Option<Vec<f64>>>> = (0..prep.realizations)
        .into_par_iter()
        .map(|r| {
            let seed = realization_seed(spec.master_seed, r);
            let draw = prep.channels.draw(spec, &point, seed, r)?;
            let cfg = solver_config(spec, draw.noise_power, seed);
            Ok(spec
                .algorithms
                .iter()
                .map(|&alg| {
                    solve_one(spec.scenario, alg, &draw.matrix, point.na, point.ns, &cfg).ok().map(|o| {
                        if o.trace.is_empty() {
                            vec![o.sum_rate]
                        } else {
                            o.trace
                        }
                    })
                })
                .collect())
        })
        .collect::<Result<_, SimError>>()?;
    let mut failures = 0;
    let traces = (0..spec.algorithms.len())
        .map(|a| {
            per_realization
                .iter()
                .map(|runs| {
                    runs[a].clone().unwrap_or_else(|| {
                        failures += 1;
                        Vec::new()
                    })
                })
                .collect()
        })
        .collect();
    Ok(ConvergenceRun { algorithms: spec.algorithms.clone(), traces, failures })
}
