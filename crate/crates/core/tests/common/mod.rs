#![allow(dead_code)]

use hbf_core::channel::complex_normal;
use hbf_core::{c64, CMat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMat::from_fn(rows, cols, |_, _| complex_normal(&mut rng))
}

/// Per-stream MSE `E|m_i^H y - s_i|^2` expanded term by term.
pub fn stream_mse(h: &CMat, v: &CMat, m: &CMat, n0: f64) -> Vec<f64> {
    let g = m.adjoint() * h * v;
    (0..v.ncols())
        .map(|i| {
            let mut e = (c64::new(1.0, 0.0) - g[(i, i)]).norm_sqr();
            for l in 0..v.ncols() {
                if l != i {
                    e += g[(i, l)].norm_sqr();
                }
            }
            e + n0 * m.column(i).norm_squared()
        })
        .collect()
}

pub fn weighted_mse(h: &CMat, v: &CMat, m: &CMat, w: &[f64], n0: f64) -> f64 {
    stream_mse(h, v, m, n0).iter().zip(w).map(|(e, w)| e * w).sum()
}

/// `diag(conj(m_k))`: scalar receivers written as a combiner matrix.
pub fn scalar_receivers(ms: &[c64]) -> CMat {
    let mut m = CMat::zeros(ms.len(), ms.len());
    for (k, z) in ms.iter().enumerate() {
        m[(k, k)] = z.conj();
    }
    m
}

pub fn is_monotone(trace: &[f64], slack: f64) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - slack)
}
