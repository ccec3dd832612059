//! Geometric multipath channels for uniform linear arrays, and channel file
//! import/export for externally generated matrices.
//!
//! The narrowband geometric model sums `L` rank-one path contributions,
//!
//! ```text
//! H = sqrt(nt * nr / L) * sum_l alpha_l * g_r(aoa_l) * g_t(aod_l)^H
//! ```
//!
//! with unit-norm ULA responses `g(phi)[m] = exp(j * m * 2 pi d sin(phi)) / sqrt(N)`
//! and `d` in carrier wavelengths. With `alpha_l ~ CN(0, 1)` this gives
//! `E ||H||_F^2 = nt * nr`.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{c64, CMat, CVec, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    /// Inter-element spacing in carrier wavelengths.
    pub element_spacing: f64,
    /// Carrier frequency in Hz. Metadata only; the response depends on the
    /// spacing expressed in wavelengths.
    pub carrier_frequency: f64,
}

impl ArrayGeometry {
    /// Half-wavelength ULA at 28 GHz.
    pub fn ula(num_elements: usize) -> Self {
        Self { num_elements, element_spacing: 0.5, carrier_frequency: 28e9 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_elements == 0 {
            return Err(Error::InvalidArgument("array needs at least one element".into()));
        }
        if !(self.element_spacing > 0.0) || !self.element_spacing.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "element spacing must be positive, got {}",
                self.element_spacing
            )));
        }
        Ok(())
    }
}

/// Unit-norm ULA steering vector towards `angle` (radians).
pub fn array_response(geometry: &ArrayGeometry, angle: f64) -> CVec {
    let n = geometry.num_elements;
    let angle = angle.rem_euclid(2.0 * PI);
    let step = 2.0 * PI * geometry.element_spacing * angle.sin();
    let scale = 1.0 / (n as f64).sqrt();
    CVec::from_fn(n, |m, _| c64::from_polar(scale, m as f64 * step))
}

/// Propagation paths: complex gains with departure and arrival angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub gains: Vec<c64>,
    pub aod: Vec<f64>,
    pub aoa: Vec<f64>,
}

impl PathSet {
    pub fn new(gains: Vec<c64>, aod: Vec<f64>, aoa: Vec<f64>) -> Result<Self> {
        let set = Self { gains, aod, aoa };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.gains.is_empty() {
            return Err(Error::InvalidArgument("path set must contain at least one path".into()));
        }
        if self.aod.len() != self.gains.len() || self.aoa.len() != self.gains.len() {
            return Err(Error::InvalidArgument(format!(
                "path set lists disagree: {} gains, {} AoDs, {} AoAs",
                self.gains.len(),
                self.aod.len(),
                self.aoa.len()
            )));
        }
        Ok(())
    }

    /// Draws `num_paths` paths with `CN(0, 1)` gains and angles uniform on `[0, 2 pi)`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, num_paths: usize) -> Result<Self> {
        if num_paths == 0 {
            return Err(Error::InvalidArgument("number of paths must be at least 1".into()));
        }
        let mut gains = Vec::with_capacity(num_paths);
        let mut aod = Vec::with_capacity(num_paths);
        let mut aoa = Vec::with_capacity(num_paths);
        for _ in 0..num_paths {
            gains.push(complex_normal(rng));
            aod.push(rng.random::<f64>() * 2.0 * PI);
            aoa.push(rng.random::<f64>() * 2.0 * PI);
        }
        Ok(Self { gains, aod, aoa })
    }
}

/// `CN(0, 1)` sample: independent real and imaginary parts with variance 1/2.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> c64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Either explicit paths or the number of paths to draw.
#[derive(Debug, Clone, PartialEq)]
pub enum PathRule {
    Fixed(PathSet),
    Sampled { num_paths: usize },
}

/// One channel matrix (rows = receive antennas or users) with its noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub matrix: CMat,
    pub noise_power: f64,
    pub label: String,
}

impl ChannelRealization {
    pub fn new(matrix: CMat, noise_power: f64, label: impl Into<String>) -> Result<Self> {
        let ch = Self { matrix, noise_power, label: label.into() };
        ch.validate()?;
        Ok(ch)
    }

    pub fn n_rx(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.matrix.nrows() == 0 || self.matrix.ncols() == 0 {
            return Err(Error::Validation("channel matrix must be non-empty".into()));
        }
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            return Err(Error::Validation(format!(
                "noise power must be positive and finite, got {}",
                self.noise_power
            )));
        }
        if self.matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation("channel matrix has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Evaluates the geometric sum for explicit paths and array geometries.
pub fn geometric_channel(tx: &ArrayGeometry, rx: &ArrayGeometry, paths: &PathSet) -> Result<CMat> {
    tx.validate()?;
    rx.validate()?;
    paths.validate()?;
    let (nt, nr, l) = (tx.num_elements, rx.num_elements, paths.len());
    let scale = ((nt * nr) as f64 / l as f64).sqrt();
    let mut h = CMat::zeros(nr, nt);
    for p in 0..l {
        let gr = array_response(rx, paths.aoa[p]);
        let gt = array_response(tx, paths.aod[p]);
        h += (gr * gt.adjoint()) * (paths.gains[p] * scale);
    }
    Ok(h)
}

/// Generates one geometric channel (half-wavelength ULAs on both ends) with
/// unit noise power. Deterministic in `seed`.
pub fn generate_geometric_channel(
    seed: u64,
    nt: usize,
    nr: usize,
    rule: &PathRule,
) -> Result<ChannelRealization> {
    if nt == 0 || nr == 0 {
        return Err(Error::InvalidArgument("nt and nr must be at least 1".into()));
    }
    let paths = match rule {
        PathRule::Fixed(p) => p.clone(),
        PathRule::Sampled { num_paths } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            PathSet::sample(&mut rng, *num_paths)?
        }
    };
    let matrix = geometric_channel(&ArrayGeometry::ula(nt), &ArrayGeometry::ula(nr), &paths)?;
    Ok(ChannelRealization {
        matrix,
        noise_power: 1.0,
        label: format!("geometric L={} seed={seed}", paths.len()),
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` under `master`: `splitmix64(master ^ splitmix64(index))`.
///
/// Independent of evaluation order, so realizations can be generated in parallel.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

// ---------------------------------------------------------------------------
// Channel files

const MAGIC: &[u8; 4] = b"CHNL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelFormat {
    Json,
    Binary,
}

impl ChannelFormat {
    /// `.bin` / `.chnl` select the binary layout, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("bin") | Some("chnl") => ChannelFormat::Binary,
            _ => ChannelFormat::Json,
        }
    }
}

impl std::str::FromStr for ChannelFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ChannelFormat::Json),
            "bin" | "binary" | "chnl" => Ok(ChannelFormat::Binary),
            other => Err(Error::InvalidArgument(format!("unknown channel format `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelRecord {
    n_rx: usize,
    n_tx: usize,
    noise_power: f64,
    #[serde(default)]
    label: String,
    data: Vec<Vec<f64>>,
}

pub fn channels_to_json(channels: &[ChannelRealization]) -> Result<String> {
    let records: Vec<ChannelRecord> = channels
        .iter()
        .map(|ch| ChannelRecord {
            n_rx: ch.n_rx(),
            n_tx: ch.n_tx(),
            noise_power: ch.noise_power,
            label: ch.label.clone(),
            data: row_major(&ch.matrix).map(|z| vec![z.re, z.im]).collect(),
        })
        .collect();
    serde_json::to_string_pretty(&records).map_err(|e| Error::Parse(e.to_string()))
}

pub fn channels_from_json(text: &str) -> Result<Vec<ChannelRealization>> {
    let records: Vec<ChannelRecord> = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    records
        .into_iter()
        .enumerate()
        .map(|(idx, rec)| {
            if rec.n_rx == 0 || rec.n_tx == 0 {
                return Err(Error::Validation(format!(
                    "channel {idx}: dimensions {}x{} must be positive",
                    rec.n_rx, rec.n_tx
                )));
            }
            let expected = rec.n_rx * rec.n_tx;
            if rec.data.len() != expected {
                return Err(Error::Validation(format!(
                    "channel {idx}: field `data` has {} entries, {}x{} requires {expected}",
                    rec.data.len(),
                    rec.n_rx,
                    rec.n_tx
                )));
            }
            let mut values = Vec::with_capacity(expected);
            for (j, entry) in rec.data.iter().enumerate() {
                match entry.as_slice() {
                    [re, im] => values.push(c64::new(*re, *im)),
                    _ => {
                        return Err(Error::Validation(format!(
                            "channel {idx}: `data[{j}]` has {} numbers, expected [re, im]",
                            entry.len()
                        )))
                    }
                }
            }
            let matrix = CMat::from_row_slice(rec.n_rx, rec.n_tx, &values);
            ChannelRealization::new(matrix, rec.noise_power, rec.label)
                .map_err(|e| Error::Validation(format!("channel {idx}: {e}")))
        })
        .collect()
}

pub fn channels_to_binary(channels: &[ChannelRealization]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&u32_of(channels.len(), "channel count")?.to_le_bytes());
    for ch in channels {
        out.extend_from_slice(&u32_of(ch.n_rx(), "n_rx")?.to_le_bytes());
        out.extend_from_slice(&u32_of(ch.n_tx(), "n_tx")?.to_le_bytes());
        out.extend_from_slice(&ch.noise_power.to_le_bytes());
        for z in row_major(&ch.matrix) {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn channels_from_binary(bytes: &[u8]) -> Result<Vec<ChannelRealization>> {
    let mut rd = ByteReader { bytes, pos: 0 };
    if rd.take(4)? != MAGIC {
        return Err(Error::Parse("missing CHNL magic".into()));
    }
    let count = rd.u32()? as usize;
    let mut channels = Vec::with_capacity(count.min(1 << 16));
    for idx in 0..count {
        let n_rx = rd.u32()? as usize;
        let n_tx = rd.u32()? as usize;
        let noise_power = rd.f64()?;
        if n_rx == 0 || n_tx == 0 {
            return Err(Error::Validation(format!("channel {idx}: dimensions {n_rx}x{n_tx} must be positive")));
        }
        let mut values = Vec::with_capacity(n_rx * n_tx);
        for _ in 0..n_rx * n_tx {
            let re = rd.f64()?;
            let im = rd.f64()?;
            values.push(c64::new(re, im));
        }
        let matrix = CMat::from_row_slice(n_rx, n_tx, &values);
        channels.push(
            ChannelRealization::new(matrix, noise_power, format!("binary[{idx}]"))
                .map_err(|e| Error::Validation(format!("channel {idx}: {e}")))?,
        );
    }
    if rd.pos != bytes.len() {
        return Err(Error::Parse(format!("{} trailing bytes after {count} channels", bytes.len() - rd.pos)));
    }
    Ok(channels)
}

pub fn import_channels(path: &Path, format: ChannelFormat) -> Result<Vec<ChannelRealization>> {
    let ctx = |e: Error| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    };
    match format {
        ChannelFormat::Json => channels_from_json(&fs::read_to_string(path)?).map_err(ctx),
        ChannelFormat::Binary => channels_from_binary(&fs::read(path)?).map_err(ctx),
    }
}

/// Writes channels to `path`; refuses to replace an existing file unless `overwrite`.
pub fn export_channels(
    channels: &[ChannelRealization],
    path: &Path,
    format: ChannelFormat,
    overwrite: bool,
) -> Result<()> {
    let bytes = match format {
        ChannelFormat::Json => channels_to_json(channels)?.into_bytes(),
        ChannelFormat::Binary => channels_to_binary(channels)?,
    };
    let mut file = if overwrite {
        fs::File::create(path)?
    } else {
        fs::OpenOptions::new().write(true).create_new(true).open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::FileExists { path: path.display().to_string() }
            } else {
                Error::Io(e)
            }
        })?
    };
    file.write_all(&bytes)?;
    Ok(())
}

fn row_major(m: &CMat) -> impl Iterator<Item = c64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)]))
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds u32")))
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Parse(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
