//! Partially connected hybrid beamformer: a block-diagonal analog stage with
//! one free complex vector per subarray, followed by a digital precoder.
//!
//! Analog blocks are kept as `na` vectors of length `n`; the dense `nt x na`
//! matrix is only materialized by [`assemble_analog`].

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::complex_normal;
use crate::error::ensure;
use crate::{c64, CMat, CVec, Error, Result};

/// Subarray layout: `nt` antennas in `na` subarrays of `n` antennas, `ns` streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub nt: usize,
    pub na: usize,
    pub n: usize,
    pub ns: usize,
}

impl PartitionSpec {
    pub fn new(nt: usize, na: usize, ns: usize) -> Result<Self> {
        if nt == 0 || na == 0 || ns == 0 {
            return Err(Error::InvalidArgument(format!(
                "partition sizes must be positive (nt={nt}, na={na}, ns={ns})"
            )));
        }
        if !nt.is_multiple_of(na) {
            return Err(Error::InvalidArgument(format!("{na} subarrays do not divide {nt} antennas")));
        }
        if ns > na {
            return Err(Error::InvalidArgument(format!("{ns} streams exceed {na} RF chains")));
        }
        Ok(Self { nt, na, n: nt / na, ns })
    }

    /// One stream per RF chain.
    pub fn subarray(nt: usize, na: usize) -> Result<Self> {
        Self::new(nt, na, na)
    }

    /// Antenna indices of subarray `i`.
    pub fn block(&self, i: usize) -> Range<usize> {
        i * self.n..(i + 1) * self.n
    }

    /// Columns of `h` that belong to subarray `i`.
    pub fn sub_channel(&self, h: &CMat, i: usize) -> CMat {
        h.columns(i * self.n, self.n).into_owned()
    }

    fn validate(&self) -> Result<()> {
        let again = Self::new(self.nt, self.na, self.ns)?;
        ensure(again.n == self.n, || format!("n={} inconsistent with nt/na={}", self.n, again.n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessingMode {
    /// Every stream reaches every RF chain through a dense digital precoder.
    #[serde(rename = "full")]
    FullArray,
    /// One stream per RF chain; the digital stage is the identity.
    #[serde(rename = "sub")]
    Subarray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogBeamformer {
    pub subarray_vectors: Vec<CVec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoder {
    pub matrix: CMat,
    pub mode: ProcessingMode,
}

impl DigitalPrecoder {
    pub fn identity(na: usize) -> Self {
        Self { matrix: CMat::identity(na, na), mode: ProcessingMode::Subarray }
    }

    pub fn full(matrix: CMat) -> Self {
        Self { matrix, mode: ProcessingMode::FullArray }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridBeamformer {
    pub analog: AnalogBeamformer,
    pub digital: DigitalPrecoder,
    pub partition: PartitionSpec,
}

impl HybridBeamformer {
    pub fn new(partition: PartitionSpec, analog: Vec<CVec>, digital: DigitalPrecoder) -> Result<Self> {
        let hb = Self { analog: AnalogBeamformer { subarray_vectors: analog }, digital, partition };
        hb.validate()?;
        Ok(hb)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.partition;
        p.validate()?;
        let a = &self.analog.subarray_vectors;
        ensure(a.len() == p.na, || format!("{} analog vectors for {} subarrays", a.len(), p.na))?;
        for (i, v) in a.iter().enumerate() {
            ensure(v.len() == p.n, || format!("analog vector {i} has length {}, expected {}", v.len(), p.n))?;
        }
        let d = &self.digital.matrix;
        ensure(d.shape() == (p.na, p.ns), || {
            format!("digital precoder is {}x{}, expected {}x{}", d.nrows(), d.ncols(), p.na, p.ns)
        })?;
        if self.digital.mode == ProcessingMode::Subarray {
            ensure(p.ns == p.na && *d == CMat::identity(p.na, p.na), || {
                "subarray mode requires ns = na and an identity digital stage".into()
            })?;
        }
        if a.iter().flat_map(|v| v.iter()).chain(d.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("beamformer has non-finite entries".into()));
        }
        Ok(())
    }

    /// Power-feasible starting point: i.i.d. `CN(0,1)` analog entries with each
    /// `||a_i||^2 = P / na`, and a truncated identity (or identity) digital stage.
    pub fn initial(partition: PartitionSpec, mode: ProcessingMode, power: f64, seed: u64) -> Result<Self> {
        if mode == ProcessingMode::Subarray && partition.ns != partition.na {
            return Err(Error::InvalidArgument(format!(
                "subarray processing needs ns = na, got ns={} na={}",
                partition.ns, partition.na
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = (power / partition.na as f64).sqrt();
        let analog = (0..partition.na)
            .map(|_| {
                let v = CVec::from_fn(partition.n, |_, _| complex_normal(&mut rng));
                let norm = v.norm();
                v * c64::new(target / norm, 0.0)
            })
            .collect();
        let digital = match mode {
            ProcessingMode::Subarray => DigitalPrecoder::identity(partition.na),
            ProcessingMode::FullArray => DigitalPrecoder::full(CMat::identity(partition.na, partition.ns)),
        };
        Self::new(partition, analog, digital)
    }

    pub fn mode(&self) -> ProcessingMode {
        self.digital.mode
    }
}

/// Dense block-diagonal `nt x na` analog matrix.
pub fn assemble_analog(partition: &PartitionSpec, subarray_vectors: &[CVec]) -> Result<CMat> {
    ensure(subarray_vectors.len() == partition.na, || {
        format!("{} analog vectors for {} subarrays", subarray_vectors.len(), partition.na)
    })?;
    let mut a = CMat::zeros(partition.nt, partition.na);
    for (i, v) in subarray_vectors.iter().enumerate() {
        ensure(v.len() == partition.n, || format!("analog vector {i} has length {}", v.len()))?;
        a.view_mut((i * partition.n, i), (partition.n, 1)).copy_from(v);
    }
    Ok(a)
}

/// `V = A D`, built per subarray: rows of block `i` are `a_i d_i`.
pub fn effective_precoder(hb: &HybridBeamformer) -> CMat {
    let p = &hb.partition;
    let d = &hb.digital.matrix;
    let mut v = CMat::zeros(p.nt, p.ns);
    for (i, a) in hb.analog.subarray_vectors.iter().enumerate() {
        let block = a * d.row(i);
        v.view_mut((i * p.n, 0), (p.n, p.ns)).copy_from(&block);
    }
    v
}

/// `tr(A D D^H A^H) = sum_i ||a_i||^2 ||d_i||^2`.
pub fn transmit_power(hb: &HybridBeamformer) -> f64 {
    hb.analog
        .subarray_vectors
        .iter()
        .enumerate()
        .map(|(i, a)| a.norm_squared() * hb.digital.matrix.row(i).norm_squared())
        .sum()
}

pub const BISECT_MAX_HALVINGS: usize = 200;
const BRACKET_MAX_DOUBLINGS: usize = 2000;

/// Smallest-effort multiplier `alpha >= 0` meeting a power budget.
///
/// `power_of_alpha` must be nonincreasing and vanish as `alpha -> inf`.
/// Returns 0 when the unconstrained point already fits. Otherwise the bracket
/// `[0, 1]` is doubled until feasible and then halved; the returned value is
/// always the feasible end of the bracket, with
/// `P - power(alpha) <= tol * P`.
pub fn bisect_multiplier<F>(power_of_alpha: F, budget: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(budget > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("budget {budget} and tol {tol} must be positive")));
    }
    if power_of_alpha(0.0) <= budget {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut p_hi = power_of_alpha(hi);
    let mut doublings = 0;
    while p_hi > budget {
        lo = hi;
        hi *= 2.0;
        p_hi = power_of_alpha(hi);
        doublings += 1;
        if doublings > BRACKET_MAX_DOUBLINGS || !hi.is_finite() {
            return Err(Error::BisectionStalled { iterations: 0, lo, hi });
        }
    }
    let mut halvings = 0;
    while budget - p_hi > tol * budget {
        if halvings == BISECT_MAX_HALVINGS {
            return Err(Error::BisectionStalled { iterations: halvings, lo, hi });
        }
        let mid = 0.5 * (lo + hi);
        let p_mid = power_of_alpha(mid);
        if p_mid > budget {
            lo = mid;
        } else {
            hi = mid;
            p_hi = p_mid;
        }
        halvings += 1;
    }
    Ok(hi)
}

// ---------------------------------------------------------------------------
// JSON wire format:
// {"partition": {...}, "analog": [[[re, im], ...], ...], "digital": [[[re, im], ...], ...], "mode": "full" | "sub"}

pub(crate) type WireMatrix = Vec<Vec<[f64; 2]>>;

pub(crate) fn to_wire_rows(m: &CMat) -> WireMatrix {
    m.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect()
}

pub(crate) fn from_wire_rows(rows: &WireMatrix, what: &str) -> Result<CMat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation(format!("{what}: ragged rows")));
    }
    Ok(CMat::from_fn(nrows, ncols, |r, c| c64::new(rows[r][c][0], rows[r][c][1])))
}

#[derive(Serialize, Deserialize)]
pub(crate) struct BeamformerWire {
    partition: PartitionSpec,
    analog: WireMatrix,
    digital: WireMatrix,
    mode: ProcessingMode,
}

impl From<&HybridBeamformer> for BeamformerWire {
    fn from(hb: &HybridBeamformer) -> Self {
        Self {
            partition: hb.partition,
            analog: hb
                .analog
                .subarray_vectors
                .iter()
                .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            digital: to_wire_rows(&hb.digital.matrix),
            mode: hb.digital.mode,
        }
    }
}

impl TryFrom<BeamformerWire> for HybridBeamformer {
    type Error = Error;

    fn try_from(w: BeamformerWire) -> Result<Self> {
        let analog = w
            .analog
            .iter()
            .map(|v| CVec::from_iterator(v.len(), v.iter().map(|z| c64::new(z[0], z[1]))))
            .collect();
        let mut digital = from_wire_rows(&w.digital, "digital")?;
        if digital.nrows() == 0 {
            digital = CMat::zeros(w.partition.na, w.partition.ns);
        }
        HybridBeamformer::new(w.partition, analog, DigitalPrecoder { matrix: digital, mode: w.mode })
    }
}

impl Serialize for HybridBeamformer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BeamformerWire::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HybridBeamformer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = BeamformerWire::deserialize(d)?;
        HybridBeamformer::try_from(wire).map_err(serde::de::Error::custom)
    }
}
