use serde::{Deserialize, Serialize};

use crate::hybrid::{effective_precoder, to_wire_rows, BeamformerWire, HybridBeamformer, WireMatrix};
use crate::metrics::{ReceiveCombiner, E_FLOOR};
use crate::{CMat, Error, Result};

/// Loop bounds, tolerances and the power/noise operating point of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once the relative sum-rate change between iterations drops below this.
    pub rel_tol: f64,
    /// Relative power tolerance of the multiplier search.
    pub bisect_tol: f64,
    pub power: f64,
    pub noise_power: f64,
    pub init_seed: u64,
    pub e_floor: f64,
}

impl SolverConfig {
    pub fn new(power: f64, noise_power: f64) -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-4,
            bisect_tol: 1e-8,
            power,
            noise_power,
            init_seed: 0,
            e_floor: E_FLOOR,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        for (name, x) in [
            ("rel_tol", self.rel_tol),
            ("bisect_tol", self.bisect_tol),
            ("power", self.power),
            ("noise_power", self.noise_power),
            ("e_floor", self.e_floor),
        ] {
            if !positive(x) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {x}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Precoder {
    Hybrid(HybridBeamformer),
    /// Unconstrained `nt x ns` precoder from a fully digital or analog baseline.
    Dense(CMat),
}

impl Precoder {
    pub fn matrix(&self) -> CMat {
        match self {
            Precoder::Hybrid(hb) => effective_precoder(hb),
            Precoder::Dense(v) => v.clone(),
        }
    }

    pub fn power(&self) -> f64 {
        crate::linalg::frob2(&self.matrix())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutcome {
    pub precoder: Precoder,
    pub combiner: ReceiveCombiner,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    /// Sum rate after each outer iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Analog updates skipped because the subarray carried no digital power.
    pub skipped_updates: usize,
}

#[derive(Serialize)]
struct OutcomeWire {
    #[serde(flatten)]
    hybrid: Option<BeamformerWire>,
    #[serde(skip_serializing_if = "Option::is_none")]
    precoder: Option<WireMatrix>,
    combiner: serde_json::Value,
    rates: Vec<f64>,
    sum_rate: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl Serialize for SolverOutcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (hybrid, precoder) = match &self.precoder {
            Precoder::Hybrid(hb) => (Some(BeamformerWire::from(hb)), None),
            Precoder::Dense(v) => (None, Some(to_wire_rows(v))),
        };
        let combiner = match &self.combiner {
            ReceiveCombiner::Joint(m) => serde_json::json!(to_wire_rows(m)),
            ReceiveCombiner::PerUser(ms) => {
                serde_json::json!(ms.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            }
        };
        OutcomeWire {
            hybrid,
            precoder,
            combiner,
            rates: self.rates.clone(),
            sum_rate: self.sum_rate,
            trace: self.trace.clone(),
            iterations: self.iterations,
            converged: self.converged,
        }
        .serialize(s)
    }
}
