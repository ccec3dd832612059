//! Rates, SINRs and MSE quantities shared by the solvers, the baselines and
//! the acceptance checks. Rates are in bits/s/Hz.
//!
//! Conventions: a single-user receiver applies `M^H y` with `M` of size
//! `nr x ns`; a multi-user receiver applies the scalar `m_k y_k`. The
//! multi-user channel matrix stacks `h_k^H` as its rows.

use crate::{c64, CMat, Error, Result};

/// Error floor applied before inverting MSEs into weights.
pub const E_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamWeights {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReceiveCombiner {
    /// Single-user `nr x ns` combiner, column `i` serves stream `i`.
    Joint(CMat),
    /// One scalar per multi-user receiver.
    PerUser(Vec<c64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRates {
    pub rates: Vec<f64>,
    pub sinr: Vec<f64>,
}

impl StreamRates {
    fn from_sinr(sinr: Vec<f64>) -> Self {
        Self { rates: sinr.iter().map(|s| (1.0 + s).log2()).collect(), sinr }
    }

    pub fn sum(&self) -> f64 {
        self.rates.iter().sum()
    }
}

fn check_noise(n0: f64) -> Result<()> {
    if n0 > 0.0 && n0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("noise power must be positive, got {n0}")))
    }
}

fn check_dims(h: &CMat, v: &CMat) -> Result<()> {
    if h.ncols() != v.nrows() {
        return Err(Error::Dimension(format!(
            "channel has {} transmit antennas, precoder has {} rows",
            h.ncols(),
            v.nrows()
        )));
    }
    Ok(())
}

/// `(H V V^H H^H + N0 I)^{-1} H V`.
pub fn mmse_combiner(h: &CMat, v: &CMat, n0: f64) -> Result<CMat> {
    check_noise(n0)?;
    check_dims(h, v)?;
    let hv = h * v;
    let mut cov = &hv * hv.adjoint();
    for i in 0..cov.nrows() {
        cov[(i, i)] += n0;
    }
    cov.lu()
        .solve(&hv)
        .ok_or_else(|| Error::Singular("receive covariance".into()))
}

/// Per-stream SINR and rate for an arbitrary combiner `M`.
pub fn su_stream_rates_with(h: &CMat, v: &CMat, m: &CMat, n0: f64) -> Result<StreamRates> {
    check_noise(n0)?;
    check_dims(h, v)?;
    let g = m.adjoint() * h * v;
    let ns = v.ncols();
    let sinr = (0..ns)
        .map(|i| {
            let signal = g[(i, i)].norm_sqr();
            let interference: f64 = (0..ns).filter(|&l| l != i).map(|l| g[(i, l)].norm_sqr()).sum();
            let noise = n0 * m.column(i).norm_squared();
            let denom = noise + interference;
            if signal == 0.0 {
                0.0
            } else {
                signal / denom
            }
        })
        .collect();
    Ok(StreamRates::from_sinr(sinr))
}

/// Per-stream rates at the MMSE receiver.
pub fn su_stream_rates(h: &CMat, v: &CMat, n0: f64) -> Result<StreamRates> {
    let m = mmse_combiner(h, v, n0)?;
    su_stream_rates_with(h, v, &m, n0)
}

/// `log2 det(I + H V V^H H^H / N0)`.
pub fn su_logdet_rate(h: &CMat, v: &CMat, n0: f64) -> Result<f64> {
    check_noise(n0)?;
    check_dims(h, v)?;
    let hv = h * v;
    let gram = hv.adjoint() * &hv / c64::new(n0, 0.0);
    let (vals, _) = crate::linalg::hermitian_eig(&gram);
    Ok(vals.iter().map(|l| (1.0 + l.max(0.0)).log2()).sum())
}

/// `E = I - M^H H V - V^H H^H M + N0 M^H M + M^H H V V^H H^H M`.
pub fn su_error_matrix(h: &CMat, v: &CMat, m: &CMat, n0: f64) -> Result<CMat> {
    check_dims(h, v)?;
    let ns = v.ncols();
    let mhv = m.adjoint() * h * v;
    let e = CMat::identity(ns, ns) - &mhv - mhv.adjoint()
        + m.adjoint() * m * c64::new(n0, 0.0)
        + &mhv * mhv.adjoint();
    Ok(e)
}

/// MMSE scalars `m_k = conj(h_k^H v_k) / (sum_l |h_k^H v_l|^2 + N0)`.
pub fn mu_mmse_scalars(h: &CMat, v: &CMat, n0: f64) -> Result<Vec<c64>> {
    check_noise(n0)?;
    check_dims(h, v)?;
    let g = h * v;
    Ok((0..h.nrows())
        .map(|k| g[(k, k)].conj() / (g.row(k).norm_squared() + n0))
        .collect())
}

/// MSE of user `k` for receiver scalar `m_k`.
pub fn mu_user_error(h: &CMat, v: &CMat, m_k: c64, n0: f64, k: usize) -> Result<f64> {
    check_dims(h, v)?;
    if k >= h.nrows() || k >= v.ncols() {
        return Err(Error::Dimension(format!("user index {k} out of range")));
    }
    let g = h.row(k) * v;
    let cross = m_k * g[(0, k)];
    let e = 1.0 - 2.0 * cross.re + m_k.norm_sqr() * (g.norm_squared() + n0);
    Ok(e)
}

/// Per-user rates; the scalar receiver cancels from the SINR.
pub fn mu_user_rates(h: &CMat, v: &CMat, n0: f64) -> Result<StreamRates> {
    check_noise(n0)?;
    check_dims(h, v)?;
    if h.nrows() != v.ncols() {
        return Err(Error::Dimension(format!("{} users but {} precoder columns", h.nrows(), v.ncols())));
    }
    let g = h * v;
    let sinr = (0..h.nrows())
        .map(|k| {
            let signal = g[(k, k)].norm_sqr();
            let interference = g.row(k).norm_squared() - signal;
            signal / (n0 + interference.max(0.0))
        })
        .collect();
    Ok(StreamRates::from_sinr(sinr))
}

/// `w_i = 1 / max(e_i, floor)`.
pub fn weights_from_errors(errors: &[f64], floor: f64) -> StreamWeights {
    StreamWeights { weights: errors.iter().map(|&e| 1.0 / e.max(floor)).collect() }
}
