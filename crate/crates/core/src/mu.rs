//! Multi-user MISO downlink: one single-antenna user per stream.
//!
//! The channel set stores `H` with rows `h_k^H`. Receivers are scalars `m_k`
//! applied as `m_k y_k`, so the rates do not depend on their scaling.

use crate::hybrid::{DigitalPrecoder, HybridBeamformer, PartitionSpec, ProcessingMode};
use crate::linalg::right_inverse;
use crate::metrics::{self, ReceiveCombiner, StreamWeights};
use crate::outcome::{Precoder, SolverConfig, SolverOutcome};
use crate::su::{waterfill, AnalogUpdate};
use crate::wmmse::{self, per_user_matrix, Receiver, Schedule};
use crate::{c64, CMat, CVec, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MuChannelSet {
    /// `Nu x Nt`, row `k` is `h_k^H`.
    pub matrix: CMat,
    pub noise_power: f64,
}

impl MuChannelSet {
    pub fn new(matrix: CMat, noise_power: f64) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Dimension("multi-user channel must have at least one user and antenna".into()));
        }
        if !(noise_power > 0.0) || !noise_power.is_finite() {
            return Err(Error::InvalidArgument(format!("noise power must be positive, got {noise_power}")));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation("channel has non-finite entries".into()));
        }
        Ok(Self { matrix, noise_power })
    }

    /// Builds the set from the user channel vectors `h_k`.
    pub fn from_user_channels(users: &[CVec], noise_power: f64) -> Result<Self> {
        let nt = users.first().map_or(0, |h| h.len());
        if users.iter().any(|h| h.len() != nt) {
            return Err(Error::Dimension("user channels differ in length".into()));
        }
        let rows: Vec<_> = users.iter().map(|h| h.adjoint()).collect();
        if rows.is_empty() {
            return Err(Error::Dimension("no users".into()));
        }
        Self::new(CMat::from_rows(&rows), noise_power)
    }

    pub fn num_users(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_antennas(&self) -> usize {
        self.matrix.ncols()
    }

    /// `h_k`.
    pub fn user(&self, k: usize) -> CVec {
        self.matrix.row(k).adjoint()
    }

    /// `h_{ik}`: the part of user `k`'s channel seen by subarray `i`.
    pub fn slice(&self, partition: &PartitionSpec, i: usize, k: usize) -> CVec {
        self.user(k).rows_range(partition.block(i)).into_owned()
    }

    fn config(&self, cfg: &SolverConfig) -> SolverConfig {
        SolverConfig { noise_power: self.noise_power, ..*cfg }
    }

    fn check(&self, partition: &PartitionSpec) -> Result<()> {
        if self.num_antennas() != partition.nt {
            return Err(Error::Dimension(format!(
                "channels have {} antennas, partition expects {}",
                self.num_antennas(),
                partition.nt
            )));
        }
        if self.num_users() != partition.ns {
            return Err(Error::InvalidArgument(format!(
                "{} users need {} streams, partition has {}",
                self.num_users(),
                self.num_users(),
                partition.ns
            )));
        }
        Ok(())
    }
}

/// `m_k = d_k^H A^H h_k / (h_k^H A D D^H A^H h_k + N0)`.
pub fn mu_mmse_receiver(channels: &MuChannelSet, hb: &HybridBeamformer, k: usize) -> Result<c64> {
    if k >= channels.num_users() {
        return Err(Error::Dimension(format!("user index {k} out of range")));
    }
    let v = crate::hybrid::effective_precoder(hb);
    Ok(metrics::mu_mmse_scalars(&channels.matrix, &v, channels.noise_power)?[k])
}

/// Receiver of user `k` under subarray processing, where user `k` is served by subarray `k`.
pub fn mu_sa_receiver(channels: &MuChannelSet, partition: &PartitionSpec, analog: &[CVec], k: usize) -> Result<c64> {
    let hb = HybridBeamformer::new(*partition, analog.to_vec(), DigitalPrecoder::identity(partition.na))?;
    mu_mmse_receiver(channels, &hb, k)
}

fn check_receivers(channels: &MuChannelSet, ms: &[c64], w: &StreamWeights) -> Result<()> {
    if ms.len() != channels.num_users() || w.weights.len() != channels.num_users() {
        return Err(Error::Dimension(format!(
            "{} users, {} receivers, {} weights",
            channels.num_users(),
            ms.len(),
            w.weights.len()
        )));
    }
    Ok(())
}

/// Digital precoder columns `d_k` for fixed analog vectors, receivers and weights, with the multiplier.
pub fn mu_fa_update_digital(
    channels: &MuChannelSet,
    partition: &PartitionSpec,
    analog: &[CVec],
    ms: &[c64],
    w: &StreamWeights,
    cfg: &SolverConfig,
) -> Result<(CMat, f64)> {
    check_receivers(channels, ms, w)?;
    wmmse::update_digital(&channels.matrix, partition, analog, &per_user_matrix(ms), w, cfg.power, cfg.bisect_tol)
}

pub fn mu_fa_update_analog(
    channels: &MuChannelSet,
    hb: &HybridBeamformer,
    ms: &[c64],
    w: &StreamWeights,
    cfg: &SolverConfig,
) -> Result<AnalogUpdate> {
    check_receivers(channels, ms, w)?;
    wmmse::update_analog_full(
        &channels.matrix,
        &hb.partition,
        &hb.analog.subarray_vectors,
        &hb.digital.matrix,
        &per_user_matrix(ms),
        w,
        cfg.power,
        cfg.bisect_tol,
    )
    .map(Into::into)
}

pub fn mu_sa_update_analog(
    channels: &MuChannelSet,
    partition: &PartitionSpec,
    ms: &[c64],
    w: &StreamWeights,
    cfg: &SolverConfig,
) -> Result<AnalogUpdate> {
    check_receivers(channels, ms, w)?;
    wmmse::update_analog_sub(&channels.matrix, partition, &per_user_matrix(ms), w, cfg.power, cfg.bisect_tol)
        .map(Into::into)
}

/// Full-array hybrid WMMSE for `Nu = ns` users. The noise power comes from the channel set.
pub fn solve_mu_fa_wmmse(channels: &MuChannelSet, partition: &PartitionSpec, cfg: &SolverConfig) -> Result<SolverOutcome> {
    channels.check(partition)?;
    let cfg = channels.config(cfg);
    let init = HybridBeamformer::initial(*partition, ProcessingMode::FullArray, cfg.power, cfg.init_seed)?;
    solve_mu_fa_wmmse_from(channels, init, &cfg)
}

pub fn solve_mu_fa_wmmse_from(channels: &MuChannelSet, init: HybridBeamformer, cfg: &SolverConfig) -> Result<SolverOutcome> {
    channels.check(&init.partition)?;
    let cfg = channels.config(cfg);
    let (hb, trace, converged, skipped) =
        wmmse::run(&channels.matrix, init, &cfg, Receiver::PerUser, Schedule { digital: true, analog: true })?;
    wmmse::finish(&channels.matrix, Precoder::Hybrid(hb), cfg.noise_power, Receiver::PerUser, trace, converged, skipped)
}

/// Subarray hybrid WMMSE: subarray `k` serves user `k`.
pub fn solve_mu_sa_wmmse(channels: &MuChannelSet, partition: &PartitionSpec, cfg: &SolverConfig) -> Result<SolverOutcome> {
    channels.check(partition)?;
    if partition.na != partition.ns {
        return Err(Error::InvalidArgument(format!(
            "subarray processing needs one subarray per user, got na={} users={}",
            partition.na, partition.ns
        )));
    }
    let cfg = channels.config(cfg);
    let init = HybridBeamformer::initial(*partition, ProcessingMode::Subarray, cfg.power, cfg.init_seed)?;
    let (hb, trace, converged, _) =
        wmmse::run(&channels.matrix, init, &cfg, Receiver::PerUser, Schedule { digital: false, analog: true })?;
    wmmse::finish(&channels.matrix, Precoder::Hybrid(hb), cfg.noise_power, Receiver::PerUser, trace, converged, 0)
}

/// Fully digital multi-user WMMSE with the same starting point as the `n = 1` hybrid.
pub fn digital_mu_wmmse(channels: &MuChannelSet, cfg: &SolverConfig) -> Result<SolverOutcome> {
    let cfg = channels.config(cfg);
    let v0 = wmmse::digital_initial(channels.num_antennas(), channels.num_users(), &cfg)?;
    digital_mu_wmmse_from(channels, v0, &cfg)
}

pub fn digital_mu_wmmse_from(channels: &MuChannelSet, v0: CMat, cfg: &SolverConfig) -> Result<SolverOutcome> {
    if v0.nrows() != channels.num_antennas() || v0.ncols() != channels.num_users() {
        return Err(Error::Dimension("initial precoder must be Nt x Nu".into()));
    }
    wmmse::solve_digital(&channels.matrix, v0, &channels.config(cfg), Receiver::PerUser)
}

fn zf_outcome(channels: &MuChannelSet, vbar: CMat, power: f64, hybrid: Option<PartitionSpec>) -> Result<SolverOutcome> {
    let n0 = channels.noise_power;
    let g = &channels.matrix * &vbar;
    let gains: Vec<f64> = (0..channels.num_users()).map(|k| g[(k, k)].norm_sqr()).collect();
    let powers = waterfill(&gains, power, n0)?;
    let mut v = vbar;
    for (k, p) in powers.iter().enumerate() {
        v.column_mut(k).scale_mut(p.sqrt());
    }
    let rates: Vec<f64> = gains.iter().zip(&powers).map(|(g, p)| (1.0 + p * g / n0).log2()).collect();
    let combiner = ReceiveCombiner::PerUser(metrics::mu_mmse_scalars(&channels.matrix, &v, n0)?);
    let precoder = match hybrid {
        Some(partition) => {
            let analog = (0..partition.na)
                .map(|k| v.view((k * partition.n, k), (partition.n, 1)).column(0).into_owned())
                .collect();
            Precoder::Hybrid(HybridBeamformer::new(partition, analog, DigitalPrecoder::identity(partition.na))?)
        }
        None => Precoder::Dense(v),
    };
    Ok(SolverOutcome {
        precoder,
        combiner,
        sum_rate: rates.iter().sum(),
        rates,
        trace: Vec::new(),
        iterations: 0,
        converged: true,
        skipped_updates: 0,
    })
}

/// Normalized subarray ZF directions: subarray `k` sends user `k`'s stream
/// along column `k` of `G_k^H (G_k G_k^H)^{-1}`, where `G_k` (`Nu x n`) holds
/// every user's channel restricted to subarray `k`.
pub fn mu_subarray_zf_directions(channels: &MuChannelSet, partition: &PartitionSpec) -> Result<CMat> {
    channels.check(partition)?;
    let nu = channels.num_users();
    if partition.na != nu {
        return Err(Error::InvalidArgument(format!("subarray ZF needs one subarray per user, got na={}", partition.na)));
    }
    if partition.n < nu {
        return Err(Error::Infeasible(format!(
            "subarray ZF needs at least {nu} antennas per subarray, have {}",
            partition.n
        )));
    }
    let mut vbar = CMat::zeros(partition.nt, nu);
    for k in 0..nu {
        let gk = partition.sub_channel(&channels.matrix, k);
        let vk = right_inverse(&gk, "subarray ZF")?;
        let col = vk.column(k);
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(Error::Singular(format!("subarray {k} ZF beam vanished")));
        }
        vbar.view_mut((k * partition.n, k), (partition.n, 1)).copy_from(&col.unscale(norm));
    }
    Ok(vbar)
}

/// Subarray zero forcing with waterfilling over the user gains `|h_k^H v_k|^2`.
pub fn mu_subarray_zf(channels: &MuChannelSet, partition: &PartitionSpec, power: f64) -> Result<SolverOutcome> {
    let vbar = mu_subarray_zf_directions(channels, partition)?;
    zf_outcome(channels, vbar, power, Some(*partition))
}

/// Normalized digital ZF directions: columns of `H^H (H H^H)^{-1}`.
pub fn digital_mu_zf_directions(channels: &MuChannelSet) -> Result<CMat> {
    let h = &channels.matrix;
    if h.nrows() > h.ncols() {
        return Err(Error::Infeasible(format!("{} users exceed {} antennas", h.nrows(), h.ncols())));
    }
    let mut v = right_inverse(h, "digital ZF")?;
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        col.unscale_mut(norm);
    }
    Ok(v)
}

pub fn digital_mu_zf(channels: &MuChannelSet, power: f64) -> Result<SolverOutcome> {
    let vbar = digital_mu_zf_directions(channels)?;
    zf_outcome(channels, vbar, power, None)
}
