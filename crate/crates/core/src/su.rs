//! Single-user MIMO beamformer design for the partially connected transmitter.
//!
//! - [`solve_fa_wmmse`]: full-array hybrid WMMSE (dense digital precoder).
//! - [`solve_sa_wmmse`]: subarray hybrid WMMSE (one stream per subarray).
//! - [`txrx_zf`]: iterative transmit/receive zero-forcing with waterfilling.
//! - [`digital_svd_baseline`], [`analog_single_stream`], [`digital_wmmse`]:
//!   reference designs without the hybrid constraint.

use crate::hybrid::{DigitalPrecoder, HybridBeamformer, PartitionSpec, ProcessingMode};
use crate::linalg::{right_inverse, sorted_svd};
use crate::metrics::{ReceiveCombiner, StreamWeights};
use crate::outcome::{Precoder, SolverConfig, SolverOutcome};
use crate::wmmse::{self, Receiver, Schedule};
use crate::{c64, CMat, CVec, Error, Result};

pub use crate::wmmse::DEAD_ROW;

/// Result of a closed-form analog update.
#[derive(Debug, Clone)]
pub struct AnalogUpdate {
    pub vectors: Vec<CVec>,
    /// Lagrange multiplier of the power constraint.
    pub alpha: f64,
    /// Subarrays left unchanged because their digital row is (numerically) zero.
    pub skipped: usize,
}

impl From<wmmse::AnalogStep> for AnalogUpdate {
    fn from(s: wmmse::AnalogStep) -> Self {
        Self { vectors: s.vectors, alpha: s.alpha, skipped: s.skipped }
    }
}

/// Rate-optimal MMSE combiner `M = (H V V^H H^H + N0 I)^{-1} H V` with `V = A D`.
pub fn mmse_receiver(h: &CMat, hb: &HybridBeamformer, noise_power: f64) -> Result<CMat> {
    crate::metrics::mmse_combiner(h, &crate::hybrid::effective_precoder(hb), noise_power)
}

/// Digital precoder for fixed analog stage, combiner and weights, with its multiplier.
pub fn fa_update_digital(
    h: &CMat,
    partition: &PartitionSpec,
    analog: &[CVec],
    m: &CMat,
    w: &StreamWeights,
    cfg: &SolverConfig,
) -> Result<(CMat, f64)> {
    wmmse::update_digital(h, partition, analog, m, w, cfg.power, cfg.bisect_tol)
}

/// Analog vectors for fixed digital precoder, combiner and weights (full-array mode).
pub fn fa_update_analog(
    h: &CMat,
    hb: &HybridBeamformer,
    m: &CMat,
    w: &StreamWeights,
    cfg: &SolverConfig,
) -> Result<AnalogUpdate> {
    wmmse::update_analog_full(
        h,
        &hb.partition,
        &hb.analog.subarray_vectors,
        &hb.digital.matrix,
        m,
        w,
        cfg.power,
        cfg.bisect_tol,
    )
    .map(Into::into)
}

/// Analog vectors with the identity digital stage (subarray mode).
pub fn sa_update_analog(
    h: &CMat,
    partition: &PartitionSpec,
    m: &CMat,
    w: &StreamWeights,
    cfg: &SolverConfig,
) -> Result<AnalogUpdate> {
    wmmse::update_analog_sub(h, partition, m, w, cfg.power, cfg.bisect_tol).map(Into::into)
}

fn check_channel(h: &CMat, partition: &PartitionSpec) -> Result<()> {
    if h.ncols() != partition.nt {
        return Err(Error::Dimension(format!(
            "channel has {} transmit antennas, partition expects {}",
            h.ncols(),
            partition.nt
        )));
    }
    Ok(())
}

/// Full-array hybrid WMMSE.
pub fn solve_fa_wmmse(h: &CMat, partition: &PartitionSpec, cfg: &SolverConfig) -> Result<SolverOutcome> {
    check_channel(h, partition)?;
    if partition.ns > h.nrows().min(partition.na) {
        return Err(Error::InvalidArgument(format!(
            "{} streams exceed min(nr={}, na={})",
            partition.ns,
            h.nrows(),
            partition.na
        )));
    }
    let init = HybridBeamformer::initial(*partition, ProcessingMode::FullArray, cfg.power, cfg.init_seed)?;
    solve_fa_wmmse_from(h, init, cfg)
}

/// Full-array hybrid WMMSE from a caller-supplied starting point.
pub fn solve_fa_wmmse_from(h: &CMat, init: HybridBeamformer, cfg: &SolverConfig) -> Result<SolverOutcome> {
    let (hb, trace, converged, skipped) =
        wmmse::run(h, init, cfg, Receiver::Joint, Schedule { digital: true, analog: true })?;
    wmmse::finish(h, Precoder::Hybrid(hb), cfg.noise_power, Receiver::Joint, trace, converged, skipped)
}

/// Subarray hybrid WMMSE.
pub fn solve_sa_wmmse(h: &CMat, partition: &PartitionSpec, cfg: &SolverConfig) -> Result<SolverOutcome> {
    check_channel(h, partition)?;
    if partition.ns != partition.na {
        return Err(Error::InvalidArgument(format!(
            "subarray processing needs ns = na, got ns={} na={}",
            partition.ns, partition.na
        )));
    }
    let init = HybridBeamformer::initial(*partition, ProcessingMode::Subarray, cfg.power, cfg.init_seed)?;
    let (hb, trace, converged, _) =
        wmmse::run(h, init, cfg, Receiver::Joint, Schedule { digital: false, analog: true })?;
    wmmse::finish(h, Precoder::Hybrid(hb), cfg.noise_power, Receiver::Joint, trace, converged, 0)
}

/// Fully digital WMMSE, initialized like the hybrid solver with one antenna per RF chain.
pub fn digital_wmmse(h: &CMat, ns: usize, cfg: &SolverConfig) -> Result<SolverOutcome> {
    let v0 = wmmse::digital_initial(h.ncols(), ns, cfg)?;
    digital_wmmse_from(h, v0, cfg)
}

pub fn digital_wmmse_from(h: &CMat, v0: CMat, cfg: &SolverConfig) -> Result<SolverOutcome> {
    if h.ncols() != v0.nrows() {
        return Err(Error::Dimension("initial precoder rows must match transmit antennas".into()));
    }
    wmmse::solve_digital(h, v0, cfg, Receiver::Joint)
}

// ---------------------------------------------------------------------------
// Waterfilling

/// Powers `P_i = max(mu - N0 / eps_i, 0)` summing to `P`, and the water level `mu`.
pub fn waterfill_with_level(gains: &[f64], power: f64, noise_power: f64) -> Result<(Vec<f64>, f64)> {
    if !(power > 0.0) || !(noise_power > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power {power} and noise {noise_power} must be positive"
        )));
    }
    if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidArgument("gains must be finite and non-negative".into()));
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::InvalidArgument("waterfilling needs at least one positive gain".into()));
    }
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let floors: Vec<f64> = order.iter().map(|&i| noise_power / gains[i]).collect();
    let mut active = order.len();
    let mut level = 0.0;
    while active > 0 {
        level = (power + floors[..active].iter().sum::<f64>()) / active as f64;
        if level > floors[active - 1] {
            break;
        }
        active -= 1;
    }
    let mut powers = vec![0.0; gains.len()];
    for (slot, &i) in order.iter().take(active).enumerate() {
        powers[i] = level - floors[slot];
    }
    Ok((powers, level))
}

pub fn waterfill(gains: &[f64], power: f64, noise_power: f64) -> Result<Vec<f64>> {
    waterfill_with_level(gains, power, noise_power).map(|(p, _)| p)
}

fn loaded_rates(gains: &[f64], powers: &[f64], n0: f64) -> Vec<f64> {
    gains.iter().zip(powers).map(|(g, p)| (1.0 + p * g / n0).log2()).collect()
}

// ---------------------------------------------------------------------------
// Transmit-receive zero forcing

/// Per-subarray ZF step: for each subarray `i`,
/// `V_i = (M^H H_i)^+ = H_i^H M (M^H H_i H_i^H M)^{-1}`; its `i`-th column, normalized,
/// becomes the subarray-`i` block of column `i` of the returned `nt x ns` matrix.
pub fn txrx_zf_precoder(h: &CMat, partition: &PartitionSpec, m: &CMat) -> Result<CMat> {
    let ns = partition.ns;
    let mut vbar = CMat::zeros(partition.nt, ns);
    for i in 0..ns {
        let eff = m.adjoint() * partition.sub_channel(h, i);
        let vi = right_inverse(&eff, "subarray ZF precoder")?;
        let col = vi.column(i);
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(Error::Singular(format!("subarray {i} ZF beam vanished")));
        }
        vbar.view_mut((i * partition.n, i), (partition.n, 1)).copy_from(&(col / c64::new(norm, 0.0)));
    }
    Ok(vbar)
}

/// ZF combiner `M = H V (V^H H^H H V)^{-1}`, so that `M^H H V = I` (columns not normalized).
pub fn txrx_zf_combiner(h: &CMat, vbar: &CMat) -> Result<CMat> {
    right_inverse(&(h * vbar).adjoint(), "ZF combiner")
}

fn normalize_columns(m: &mut CMat) {
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col.unscale_mut(norm);
        }
    }
}

/// Subarray transmit-receive ZF: combiner initialized from the left singular
/// vectors, alternating per-subarray ZF precoders and ZF combiners, then
/// waterfilling over the resulting interference-free streams.
pub fn txrx_zf(h: &CMat, partition: &PartitionSpec, cfg: &SolverConfig) -> Result<SolverOutcome> {
    cfg.validate()?;
    check_channel(h, partition)?;
    let ns = partition.ns;
    if ns != partition.na {
        return Err(Error::InvalidArgument("transmit-receive ZF needs ns = na".into()));
    }
    if partition.n < ns || h.nrows() < ns {
        return Err(Error::Infeasible(format!(
            "ZF needs n >= ns and nr >= ns (n={}, nr={}, ns={ns})",
            partition.n,
            h.nrows()
        )));
    }
    let n0 = cfg.noise_power;
    let mut m = sorted_svd(h).u.columns(0, ns).into_owned();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut prev: Option<f64> = None;
    let mut vbar = CMat::zeros(partition.nt, ns);
    let mut gains = vec![0.0; ns];
    let mut powers = vec![0.0; ns];
    for _ in 0..cfg.max_iters {
        vbar = txrx_zf_precoder(h, partition, &m)?;
        m = txrx_zf_combiner(h, &vbar)?;
        normalize_columns(&mut m);
        let g = m.adjoint() * h * &vbar;
        gains = (0..ns).map(|i| g[(i, i)].norm_sqr()).collect();
        powers = waterfill(&gains, cfg.power, n0)?;
        let rate: f64 = loaded_rates(&gains, &powers, n0).iter().sum();
        trace.push(rate);
        if let Some(p) = prev {
            if (rate - p).abs() <= cfg.rel_tol * p.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        prev = Some(rate);
    }
    let analog: Vec<CVec> = (0..ns)
        .map(|i| vbar.view((i * partition.n, i), (partition.n, 1)).column(0) * c64::new(powers[i].sqrt(), 0.0))
        .collect();
    let hb = HybridBeamformer::new(*partition, analog, DigitalPrecoder::identity(ns))?;
    let rates = loaded_rates(&gains, &powers, n0);
    Ok(SolverOutcome {
        precoder: Precoder::Hybrid(hb),
        combiner: ReceiveCombiner::Joint(m),
        sum_rate: rates.iter().sum(),
        rates,
        iterations: trace.len(),
        trace,
        converged,
        skipped_updates: 0,
    })
}

// ---------------------------------------------------------------------------
// Unconstrained baselines

/// Fully digital SVD precoding with waterfilling over the top `ns` modes.
pub fn digital_svd_baseline(h: &CMat, power: f64, noise_power: f64, ns: usize) -> Result<SolverOutcome> {
    if ns == 0 {
        return Err(Error::InvalidArgument("ns must be at least 1".into()));
    }
    let svd = sorted_svd(h);
    let modes = ns.min(svd.singular_values.len());
    let mut gains: Vec<f64> = svd.singular_values[..modes].iter().map(|s| s * s).collect();
    gains.resize(ns, 0.0);
    let powers = waterfill(&gains, power, noise_power)?;
    let mut v = CMat::zeros(h.ncols(), ns);
    let mut m = CMat::zeros(h.nrows(), ns);
    for (i, p) in powers.iter().enumerate().take(modes) {
        v.set_column(i, &(svd.v.column(i) * c64::new(p.sqrt(), 0.0)));
        m.set_column(i, &svd.u.column(i));
    }
    let rates = loaded_rates(&gains, &powers, noise_power);
    Ok(SolverOutcome {
        precoder: Precoder::Dense(v),
        combiner: ReceiveCombiner::Joint(m),
        sum_rate: rates.iter().sum(),
        rates,
        trace: Vec::new(),
        iterations: 0,
        converged: true,
        skipped_updates: 0,
    })
}

/// Single-stream beamforming along the dominant singular pair with full power.
pub fn analog_single_stream(h: &CMat, power: f64, noise_power: f64) -> Result<SolverOutcome> {
    digital_svd_baseline(h, power, noise_power, 1)
}
