//! Hybrid analog-digital beamforming for partially connected massive-MIMO
//! transmitters.
//!
//! The transmit array of `nt` antennas is split into `na` disjoint subarrays,
//! each driven by one RF chain. The analog stage is therefore block diagonal
//! (one complex vector per subarray, amplitude and phase free) and the digital
//! stage is either a dense `na x ns` precoder (full-array processing) or the
//! identity (subarray processing, one stream per RF chain).
//!
//! Modules:
//!
//! - [`channel`]: geometric ULA multipath channels and channel file I/O.
//! - [`hybrid`]: beamformer data model, power accounting, multiplier bisection.
//! - [`metrics`]: rates, SINRs, MSE matrices and WMMSE weights.
//! - [`su`]: single-user MIMO solvers (hybrid WMMSE, transmit-receive ZF,
//!   SVD baselines) and waterfilling.
//! - [`mu`]: multi-user MISO solvers (hybrid WMMSE, subarray ZF, digital
//!   WMMSE/ZF baselines).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod hybrid;
pub mod linalg;
pub mod metrics;
pub mod mu;
pub mod outcome;
pub mod su;

mod wmmse;

pub use error::{Error, Result};
pub use outcome::{Precoder, SolverConfig, SolverOutcome};

/// Complex double.
#[allow(non_camel_case_types)]
pub type c64 = num_complex::Complex<f64>;

/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<c64>;

/// Dense complex column vector.
pub type CVec = nalgebra::DVector<c64>;
