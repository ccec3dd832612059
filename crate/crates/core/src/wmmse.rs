//! Alternating WMMSE engine shared by the single-user and multi-user solvers.
//!
//! Both scenarios are written in the single-user form `s_hat = M^H (H V s + z)`:
//! for multiple single-antenna users the rows of `H` are `h_k^H` and the
//! receiver is the diagonal `M = diag(conj(m_k))`. With that, one update
//! routine per variable serves both.
//!
//! Each precoder update minimizes the Lagrangian
//! `tr(W E) + alpha (power - P)` exactly. After a diagonal change of
//! variables it takes the form `(C^H C + alpha I) x = b` with the transmit
//! power equal to `||x||^2`, solved spectrally by [`ShiftedSystem`].

use crate::hybrid::{bisect_multiplier, effective_precoder, HybridBeamformer, PartitionSpec, ProcessingMode};
use crate::linalg::{total_power, ShiftedSystem};
use crate::metrics::{self, ReceiveCombiner, StreamRates, StreamWeights};
use crate::outcome::{Precoder, SolverConfig, SolverOutcome};
use crate::{c64, CMat, CVec, Error, Result};

/// `||d_i||^2` below which a subarray carries no stream and keeps its analog vector.
pub const DEAD_ROW: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Receiver {
    /// Joint `nr x ns` MMSE combiner (single user).
    Joint,
    /// Independent scalar receivers (one single-antenna user per row of `H`).
    PerUser,
}

pub(crate) fn receiver_matrix(h: &CMat, v: &CMat, n0: f64, kind: Receiver) -> Result<CMat> {
    match kind {
        Receiver::Joint => metrics::mmse_combiner(h, v, n0),
        Receiver::PerUser => {
            let ms = metrics::mu_mmse_scalars(h, v, n0)?;
            Ok(per_user_matrix(&ms))
        }
    }
}

/// `diag(conj(m_k))`, the combiner matrix of scalar receivers `m_k y_k`.
pub(crate) fn per_user_matrix(ms: &[c64]) -> CMat {
    let mut m = CMat::zeros(ms.len(), ms.len());
    for (k, z) in ms.iter().enumerate() {
        m[(k, k)] = z.conj();
    }
    m
}

pub(crate) fn stream_errors(h: &CMat, v: &CMat, m: &CMat, n0: f64) -> Result<Vec<f64>> {
    let e = metrics::su_error_matrix(h, v, m, n0)?;
    Ok((0..e.nrows()).map(|i| e[(i, i)].re).collect())
}

pub(crate) fn rates(h: &CMat, v: &CMat, n0: f64, kind: Receiver) -> Result<StreamRates> {
    match kind {
        Receiver::Joint => metrics::su_stream_rates(h, v, n0),
        Receiver::PerUser => metrics::mu_user_rates(h, v, n0),
    }
}

/// `W^{1/2} M^H`.
fn weighted_receiver(m: &CMat, w: &StreamWeights) -> CMat {
    let mut r = m.adjoint();
    for (i, wi) in w.weights.iter().enumerate() {
        r.row_mut(i).scale_mut(wi.sqrt());
    }
    r
}

/// `M W`.
fn receiver_times_weights(m: &CMat, w: &StreamWeights) -> CMat {
    let mut mw = m.clone();
    for (i, wi) in w.weights.iter().enumerate() {
        mw.column_mut(i).scale_mut(*wi);
    }
    mw
}

fn check_weights(m: &CMat, w: &StreamWeights) -> Result<()> {
    if m.ncols() != w.weights.len() {
        return Err(Error::Dimension(format!(
            "{} combiner columns but {} weights",
            m.ncols(),
            w.weights.len()
        )));
    }
    Ok(())
}

/// Digital update for fixed analog vectors, receiver and weights:
/// `D = (A^H H^H M W M^H H A + alpha A^H A)^{-1} A^H H^H M W`.
pub(crate) fn update_digital(
    h: &CMat,
    partition: &PartitionSpec,
    analog: &[CVec],
    m: &CMat,
    w: &StreamWeights,
    power: f64,
    bisect_tol: f64,
) -> Result<(CMat, f64)> {
    check_weights(m, w)?;
    let (na, ns) = (partition.na, m.ncols());
    let mut ha = CMat::zeros(h.nrows(), na);
    for (i, a) in analog.iter().enumerate() {
        ha.set_column(i, &(h.columns(i * partition.n, partition.n) * a));
    }
    let lambda: Vec<f64> = analog.iter().map(|a| a.norm_squared()).collect();
    let max_lambda = lambda.iter().cloned().fold(0.0, f64::max);
    let active: Vec<usize> = (0..na).filter(|&i| lambda[i] > DEAD_ROW * max_lambda && lambda[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::Singular("every analog vector is zero".into()));
    }
    let r = weighted_receiver(m, w);
    let g = &r * &ha;
    let rhs = ha.adjoint() * receiver_times_weights(m, w);
    let mut c = CMat::zeros(ns, active.len());
    let mut b = CMat::zeros(active.len(), ns);
    for (j, &i) in active.iter().enumerate() {
        let s = 1.0 / lambda[i].sqrt();
        c.set_column(j, &(g.column(i) * c64::new(s, 0.0)));
        b.set_row(j, &(rhs.row(i) * c64::new(s, 0.0)));
    }
    let sys = ShiftedSystem::from_factor(&c, &b);
    let alpha = bisect_multiplier(|a| sys.power(a), power, bisect_tol)?;
    let y = sys.solve(alpha);
    let mut d = CMat::zeros(na, ns);
    for (j, &i) in active.iter().enumerate() {
        d.set_row(i, &(y.row(j) * c64::new(1.0 / lambda[i].sqrt(), 0.0)));
    }
    Ok((d, alpha))
}

/// Outcome of an analog update.
pub(crate) struct AnalogStep {
    pub vectors: Vec<CVec>,
    pub alpha: f64,
    pub skipped: usize,
}

/// Full-array analog update: all `a_i` solved jointly under one multiplier,
/// i.e. the simultaneous solution of the per-subarray stationarity conditions
/// `a_i = (H_i^H M W M^H H_i + alpha I)^{-1} H_i^H (M W d_i^H - M W M^H sum_{l != i} H_l a_l d_l d_i^H) / (d_i d_i^H)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_analog_full(
    h: &CMat,
    partition: &PartitionSpec,
    analog: &[CVec],
    d: &CMat,
    m: &CMat,
    w: &StreamWeights,
    power: f64,
    bisect_tol: f64,
) -> Result<AnalogStep> {
    check_weights(m, w)?;
    let (na, n, ns) = (partition.na, partition.n, m.ncols());
    if d.shape() != (na, ns) {
        return Err(Error::Dimension(format!("digital precoder is {:?}, expected ({na}, {ns})", d.shape())));
    }
    let rho: Vec<f64> = (0..na).map(|i| d.row(i).norm_squared()).collect();
    let active: Vec<usize> = (0..na).filter(|&i| rho[i] >= DEAD_ROW).collect();
    let skipped = na - active.len();
    if active.is_empty() {
        return Ok(AnalogStep { vectors: analog.to_vec(), alpha: 0.0, skipped });
    }

    let r = weighted_receiver(m, w);
    let mw = receiver_times_weights(m, w);
    let rows = ns * ns;
    // vec(W^{1/2} M^H H A D) = sum_i (d_i^T kron W^{1/2} M^H H_i) a_i
    let block_of = |i: usize| -> CMat {
        let rh = &r * h.columns(i * n, n);
        let mut blk = CMat::zeros(rows, n);
        for s in 0..ns {
            blk.view_mut((s * ns, 0), (ns, n)).copy_from(&(&rh * d[(i, s)]));
        }
        blk
    };

    let mut fixed_signal = CMat::zeros(rows, 1);
    let mut fixed_power = 0.0;
    for i in (0..na).filter(|i| !active.contains(i)) {
        fixed_signal += block_of(i) * &analog[i];
        fixed_power += rho[i] * analog[i].norm_squared();
    }

    let mut c = CMat::zeros(rows, active.len() * n);
    let mut b = CMat::zeros(active.len() * n, 1);
    for (j, &i) in active.iter().enumerate() {
        let s = c64::new(1.0 / rho[i].sqrt(), 0.0);
        let blk = block_of(i) * s;
        let hi = h.columns(i * n, n);
        let dh = d.row(i).adjoint();
        let mut bi = hi.adjoint() * (&mw * dh) * s;
        if skipped > 0 {
            bi -= blk.adjoint() * &fixed_signal;
        }
        c.view_mut((0, j * n), (rows, n)).copy_from(&blk);
        b.view_mut((j * n, 0), (n, 1)).copy_from(&bi);
    }

    let budget = (power - fixed_power).max(power * 1e-12);
    let sys = ShiftedSystem::from_factor(&c, &b);
    let alpha = bisect_multiplier(|a| sys.power(a), budget, bisect_tol)?;
    let x = sys.solve(alpha);
    let mut vectors = analog.to_vec();
    for (j, &i) in active.iter().enumerate() {
        vectors[i] = x.rows(j * n, n).column(0).into_owned() / c64::new(rho[i].sqrt(), 0.0);
    }
    Ok(AnalogStep { vectors, alpha, skipped })
}

/// Subarray analog update (`D = I`): the subarrays decouple except through
/// the shared multiplier, `a_j = (H_j^H M W M^H H_j + alpha I_n)^{-1} H_j^H m_j w_j`.
pub(crate) fn update_analog_sub(
    h: &CMat,
    partition: &PartitionSpec,
    m: &CMat,
    w: &StreamWeights,
    power: f64,
    bisect_tol: f64,
) -> Result<AnalogStep> {
    check_weights(m, w)?;
    if m.ncols() != partition.na {
        return Err(Error::Dimension(format!(
            "subarray processing needs {} streams, combiner has {}",
            partition.na,
            m.ncols()
        )));
    }
    let r = weighted_receiver(m, w);
    let systems: Vec<ShiftedSystem> = (0..partition.na)
        .map(|j| {
            let hj = partition.sub_channel(h, j);
            let rhs = hj.adjoint() * m.column(j) * c64::new(w.weights[j], 0.0);
            ShiftedSystem::from_factor(&(&r * &hj), &CMat::from_columns(&[rhs]))
        })
        .collect();
    let alpha = bisect_multiplier(|a| total_power(&systems, a), power, bisect_tol)?;
    let vectors = systems.iter().map(|s| s.solve(alpha).column(0).into_owned()).collect();
    Ok(AnalogStep { vectors, alpha, skipped: 0 })
}

/// Which blocks the outer loop updates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Schedule {
    pub digital: bool,
    pub analog: bool,
}

/// Moves the scale of every active digital row into its analog vector so that
/// `||d_i|| = 1`. The product `A D` is unchanged.
fn balance_rows(hb: &mut HybridBeamformer) {
    for i in 0..hb.partition.na {
        let rho = hb.digital.matrix.row(i).norm_squared();
        if rho >= DEAD_ROW {
            let s = rho.sqrt();
            hb.analog.subarray_vectors[i].scale_mut(s);
            hb.digital.matrix.row_mut(i).unscale_mut(s);
        }
    }
}

/// Alternating optimization: receiver, weights, digital, analog; repeat until
/// the relative sum-rate change falls below `rel_tol` or `max_iters` is hit.
pub(crate) fn run(
    h: &CMat,
    init: HybridBeamformer,
    cfg: &SolverConfig,
    kind: Receiver,
    schedule: Schedule,
) -> Result<(HybridBeamformer, Vec<f64>, bool, usize)> {
    cfg.validate()?;
    init.validate()?;
    if h.ncols() != init.partition.nt {
        return Err(Error::Dimension(format!(
            "channel has {} transmit antennas, partition expects {}",
            h.ncols(),
            init.partition.nt
        )));
    }
    let n0 = cfg.noise_power;
    let mut hb = init;
    let mut prev = rates(h, &effective_precoder(&hb), n0, kind)?.sum();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut skipped = 0;
    for _ in 0..cfg.max_iters {
        let v = effective_precoder(&hb);
        let m = receiver_matrix(h, &v, n0, kind)?;
        let w = metrics::weights_from_errors(&stream_errors(h, &v, &m, n0)?, cfg.e_floor);
        if schedule.digital {
            hb.digital.matrix = update_digital(
                h,
                &hb.partition,
                &hb.analog.subarray_vectors,
                &m,
                &w,
                cfg.power,
                cfg.bisect_tol,
            )?
            .0;
        }
        if schedule.analog {
            if hb.mode() == ProcessingMode::FullArray {
                balance_rows(&mut hb);
            }
            let step = match hb.mode() {
                ProcessingMode::Subarray => update_analog_sub(h, &hb.partition, &m, &w, cfg.power, cfg.bisect_tol)?,
                ProcessingMode::FullArray => update_analog_full(
                    h,
                    &hb.partition,
                    &hb.analog.subarray_vectors,
                    &hb.digital.matrix,
                    &m,
                    &w,
                    cfg.power,
                    cfg.bisect_tol,
                )?,
            };
            skipped += step.skipped;
            hb.analog.subarray_vectors = step.vectors;
        }
        let rate = rates(h, &effective_precoder(&hb), n0, kind)?.sum();
        trace.push(rate);
        if (rate - prev).abs() <= cfg.rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        prev = rate;
    }
    Ok((hb, trace, converged, skipped))
}

/// Packs a finished run into an outcome with MMSE receivers.
pub(crate) fn finish(
    h: &CMat,
    precoder: Precoder,
    n0: f64,
    kind: Receiver,
    trace: Vec<f64>,
    converged: bool,
    skipped: usize,
) -> Result<SolverOutcome> {
    let v = precoder.matrix();
    let stream_rates = rates(h, &v, n0, kind)?;
    let combiner = match kind {
        Receiver::Joint => ReceiveCombiner::Joint(metrics::mmse_combiner(h, &v, n0)?),
        Receiver::PerUser => ReceiveCombiner::PerUser(metrics::mu_mmse_scalars(h, &v, n0)?),
    };
    Ok(SolverOutcome {
        precoder,
        combiner,
        sum_rate: stream_rates.sum(),
        rates: stream_rates.rates,
        iterations: trace.len(),
        trace,
        converged,
        skipped_updates: skipped,
    })
}

/// Fully digital WMMSE from a given starting precoder: the same loop with the
/// analog stage pinned to the identity.
pub(crate) fn solve_digital(h: &CMat, v0: CMat, cfg: &SolverConfig, kind: Receiver) -> Result<SolverOutcome> {
    let nt = v0.nrows();
    let ns = v0.ncols();
    let partition = PartitionSpec { nt, na: nt, n: 1, ns };
    let analog = vec![CVec::from_element(1, c64::new(1.0, 0.0)); nt];
    let init = HybridBeamformer::new(partition, analog, crate::hybrid::DigitalPrecoder::full(v0))?;
    let (hb, trace, converged, _) = run(h, init, cfg, kind, Schedule { digital: true, analog: false })?;
    finish(h, Precoder::Dense(hb.digital.matrix), cfg.noise_power, kind, trace, converged, 0)
}

/// Starting precoder shared by digital WMMSE and the `n = 1` hybrid: the
/// hybrid initialization with one antenna per RF chain.
pub(crate) fn digital_initial(nt: usize, ns: usize, cfg: &SolverConfig) -> Result<CMat> {
    let partition = PartitionSpec::new(nt, nt, ns)?;
    let hb = HybridBeamformer::initial(partition, ProcessingMode::FullArray, cfg.power, cfg.init_seed)?;
    Ok(effective_precoder(&hb))
}
