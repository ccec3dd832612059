//! Small dense linear-algebra helpers. Matrices are `nalgebra` types;
//! Hermitian eigen-decompositions and SVDs are computed by `faer`.

use faer::Mat;

use crate::{c64, CMat, Error, Result};

/// Relative eigenvalue cutoff below which a direction is treated as null.
const NULL_EIG_RTOL: f64 = 1e-13;
/// Residual outside the kept eigenspace below this (relative) is rounding noise.
const NULL_RHS_RTOL: f64 = 1e-10;

pub fn frob2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

fn to_faer(m: &CMat) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eig(k: &CMat) -> (Vec<f64>, CMat) {
    let n = k.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    // symmetrize against rounding before handing to the solver
    let sym = to_faer(&(k + k.adjoint()).map(|z| z * 0.5));
    let eig = sym
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("Hermitian eigensolver failed to converge");
    let (s, u) = (eig.S().column_vector(), eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].re.total_cmp(&s[a].re));
    let vals = order.iter().map(|&i| s[i].re).collect();
    let vecs = CMat::from_fn(n, n, |r, c| u[(r, order[c])]);
    (vals, vecs)
}

/// Thin SVD with singular values sorted in descending order.
pub struct SortedSvd {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    pub v: CMat,
}

pub fn sorted_svd(m: &CMat) -> SortedSvd {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return SortedSvd { u: CMat::zeros(r, 0), singular_values: Vec::new(), v: CMat::zeros(c, 0) };
    }
    let svd = to_faer(m).thin_svd().expect("SVD failed to converge");
    let (s, u, v) = (svd.S().column_vector(), svd.U(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].re.total_cmp(&s[a].re));
    SortedSvd {
        u: CMat::from_fn(r, k, |i, j| u[(i, order[j])]),
        singular_values: order.iter().map(|&i| s[i].re).collect(),
        v: CMat::from_fn(c, k, |i, j| v[(i, order[j])]),
    }
}

/// Right inverse `X = G^+` of a full-row-rank `G` (so `G X = I`), computed
/// from the SVD rather than the normal equations to keep `G X` accurate on
/// badly conditioned channels.
pub fn right_inverse(g: &CMat, what: &str) -> Result<CMat> {
    let svd = sorted_svd(g);
    let max = svd.singular_values.first().copied().unwrap_or(0.0);
    let min = svd.singular_values.last().copied().unwrap_or(0.0);
    if svd.singular_values.len() < g.nrows() || !(max > 0.0) || min <= 1e-10 * max {
        return Err(Error::Singular(format!("{what}: singular values span [{min:e}, {max:e}]")));
    }
    let mut uh = svd.u.adjoint();
    for (r, s) in svd.singular_values.iter().enumerate() {
        uh.row_mut(r).unscale_mut(*s);
    }
    Ok(svd.v * uh)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag_real(values: &[f64]) -> CMat {
    CMat::from_fn(values.len(), values.len(), |r, c| {
        if r == c {
            c64::new(values[r], 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

/// Spectral form of the regularized system `(C^H C + alpha I) X = B`.
///
/// Every closed-form WMMSE update reduces to this shape after a diagonal
/// change of variables, with the transmit power equal to `||X||_F^2`. Holding
/// the eigen-decomposition lets the multiplier search evaluate the power at
/// any `alpha` without refactoring.
#[derive(Debug, Clone)]
pub struct ShiftedSystem {
    eigvals: Vec<f64>,
    basis: CMat,
    coeffs: CMat,
    residual: CMat,
    residual_norm2: f64,
    coeff_norm2: Vec<f64>,
}

impl ShiftedSystem {
    /// Builds the system from the factor `C` (r x m) and right-hand side `B`
    /// (m x q), through the thin SVD of `C`.
    pub fn from_factor(c: &CMat, b: &CMat) -> Self {
        assert_eq!(b.nrows(), c.ncols(), "rhs rows must match factor columns");
        let svd = sorted_svd(c);
        let vals: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
        let max = vals.first().copied().unwrap_or(0.0);
        let keep = vals.iter().take_while(|&&l| l > NULL_EIG_RTOL * max && l > 0.0).count();
        Self::from_parts(vals[..keep].to_vec(), svd.v.columns(0, keep).into_owned(), b)
    }

    /// Builds the system from an explicit Hermitian PSD matrix `K`.
    pub fn from_hermitian(k: &CMat, b: &CMat) -> Self {
        let (vals, vecs) = hermitian_eig(k);
        let max = vals.first().copied().unwrap_or(0.0).max(0.0);
        let keep = vals.iter().take_while(|&&l| l > NULL_EIG_RTOL * max && l > 0.0).count();
        Self::from_parts(vals[..keep].to_vec(), vecs.columns(0, keep).into_owned(), b)
    }

    fn from_parts(eigvals: Vec<f64>, basis: CMat, b: &CMat) -> Self {
        let coeffs = basis.adjoint() * b;
        let mut residual = b - &basis * &coeffs;
        let mut residual_norm2 = frob2(&residual);
        if residual_norm2 <= NULL_RHS_RTOL * NULL_RHS_RTOL * frob2(b) {
            residual.fill(c64::new(0.0, 0.0));
            residual_norm2 = 0.0;
        }
        let coeff_norm2 = coeffs
            .row_iter()
            .map(|row| row.iter().map(|z| z.norm_sqr()).sum())
            .collect();
        Self { eigvals, basis, coeffs, residual, residual_norm2, coeff_norm2 }
    }

    /// `||X(alpha)||_F^2`; infinite at `alpha = 0` when the rhs has a
    /// component in the null space.
    pub fn power(&self, alpha: f64) -> f64 {
        let mut p: f64 = self
            .eigvals
            .iter()
            .zip(&self.coeff_norm2)
            .map(|(l, c2)| c2 / ((l + alpha) * (l + alpha)))
            .sum();
        if self.residual_norm2 > 0.0 {
            p += if alpha > 0.0 { self.residual_norm2 / (alpha * alpha) } else { f64::INFINITY };
        }
        p
    }

    /// Solution at `alpha`; minimum-norm when `alpha = 0` and the system is singular.
    pub fn solve(&self, alpha: f64) -> CMat {
        let mut scaled = self.coeffs.clone();
        for (r, l) in self.eigvals.iter().enumerate() {
            scaled.row_mut(r).scale_mut(1.0 / (l + alpha));
        }
        let mut x = &self.basis * scaled;
        if self.residual_norm2 > 0.0 && alpha > 0.0 {
            x += &self.residual / c64::new(alpha, 0.0);
        }
        x
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }
}

/// Sum of the powers of several independent shifted systems sharing one multiplier.
pub fn total_power(systems: &[ShiftedSystem], alpha: f64) -> f64 {
    systems.iter().map(|s| s.power(alpha)).sum()
}
