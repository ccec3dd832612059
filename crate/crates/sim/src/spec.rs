//! Sweep spec files (TOML).
//!
//! ```toml
//! scenario = "su"
//! algorithms = ["digital-svd", "fa-wmmse", "sa-wmmse"]
//! nt = 64
//! nr = 4
//! ns = 4
//! na = 4
//! snr_db = [-10, -5, 0, 5, 10, 15]
//! realizations = 100
//! master_seed = 1
//!
//! [solver]
//! max_iters = 500
//! ```
//!
//! At most one of `nt`, `nr`, `ns`, `na`, `snr_db` may hold more than one
//! value; that field is the swept axis (SNR when nothing is swept).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hbf_core::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Su,
    Mu,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Su => "su",
            Scenario::Mu => "mu",
        })
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "su" => Ok(Scenario::Su),
            "mu" => Ok(Scenario::Mu),
            other => Err(SimError::Spec(format!("unknown scenario `{other}` (expected su or mu)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    /// Multi-stream SVD precoding with waterfilling (SU upper bound).
    DigitalSvd,
    /// Single-stream dominant eigenmode (SU).
    AnalogSvd,
    FaWmmse,
    SaWmmse,
    /// Transmit-receive zero forcing (SU).
    TxRxZf,
    DigitalWmmse,
    /// Fully digital zero forcing (MU).
    DigitalZf,
    /// Subarray zero forcing (MU).
    SaZf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::DigitalSvd,
        Algorithm::AnalogSvd,
        Algorithm::FaWmmse,
        Algorithm::SaWmmse,
        Algorithm::TxRxZf,
        Algorithm::DigitalWmmse,
        Algorithm::DigitalZf,
        Algorithm::SaZf,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::DigitalSvd => "digital-svd",
            Algorithm::AnalogSvd => "analog-svd",
            Algorithm::FaWmmse => "fa-wmmse",
            Algorithm::SaWmmse => "sa-wmmse",
            Algorithm::TxRxZf => "txrx-zf",
            Algorithm::DigitalWmmse => "digital-wmmse",
            Algorithm::DigitalZf => "digital-zf",
            Algorithm::SaZf => "sa-zf",
        }
    }

    pub fn supports(self, scenario: Scenario) -> bool {
        use Algorithm::*;
        match scenario {
            Scenario::Su => matches!(self, DigitalSvd | AnalogSvd | FaWmmse | SaWmmse | TxRxZf | DigitalWmmse),
            Scenario::Mu => matches!(self, DigitalWmmse | DigitalZf | FaWmmse | SaWmmse | SaZf),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| SimError::Spec(format!("unknown algorithm tag `{s}`")))
    }
}

impl TryFrom<String> for Algorithm {
    type Error = SimError;

    fn try_from(s: String) -> Result<Self, SimError> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.tag().to_string()
    }
}

/// A scalar or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Axis<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Axis::One(x) => vec![x.clone()],
            Axis::Many(xs) => xs.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::One(_) => 1,
            Axis::Many(xs) => xs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum ChannelSource {
    #[default]
    Geometric,
    File(PathBuf),
}

impl FromStr for ChannelSource {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        if s == "geometric" {
            Ok(ChannelSource::Geometric)
        } else if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err(SimError::Spec("channel_source `file:` needs a path".into()));
            }
            Ok(ChannelSource::File(PathBuf::from(path)))
        } else {
            Err(SimError::Spec(format!(
                "unknown channel_source `{s}` (expected `geometric` or `file:<path>`)"
            )))
        }
    }
}

impl fmt::Display for ChannelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSource::Geometric => f.write_str("geometric"),
            ChannelSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for ChannelSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChannelSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Optional solver settings; unset fields keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bisect_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_floor: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        if let Some(x) = self.max_iters {
            cfg.max_iters = x;
        }
        if let Some(x) = self.rel_tol {
            cfg.rel_tol = x;
        }
        if let Some(x) = self.bisect_tol {
            cfg.bisect_tol = x;
        }
        if let Some(x) = self.e_floor {
            cfg.e_floor = x;
        }
    }
}

fn default_power() -> f64 {
    1.0
}

fn default_paths() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub scenario: Scenario,
    pub algorithms: Vec<Algorithm>,
    pub nt: Axis<usize>,
    /// Receive antennas (SU) or users (MU).
    #[serde(alias = "nu")]
    pub nr: Axis<usize>,
    pub ns: Axis<usize>,
    pub na: Axis<usize>,
    /// Required for geometric channels; file channels carry their own noise power.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Axis<f64>>,
    #[serde(default)]
    pub channel_source: ChannelSource,
    /// Defaults to 100 for geometric channels and to every channel in the file otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_paths")]
    pub num_paths: usize,
    /// Record wall-clock solve times; when false `wall_time_ms` is written as 0
    /// so reruns are byte-identical.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub timing: bool,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Which field varies across the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptAxis {
    Nt,
    Nr,
    Ns,
    Na,
    Snr,
}

/// One configuration of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub nt: usize,
    pub nr: usize,
    pub ns: usize,
    pub na: usize,
    /// `None` for file channels, whose noise power is fixed by the file.
    pub snr_db: Option<f64>,
}

pub const DEFAULT_REALIZATIONS: usize = 100;

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| SimError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String, SimError> {
        toml::to_string(self).map_err(|e| SimError::Spec(e.to_string()))
    }

    pub fn swept_axis(&self) -> Result<SweptAxis, SimError> {
        let lens = [
            (SweptAxis::Nt, self.nt.len()),
            (SweptAxis::Nr, self.nr.len()),
            (SweptAxis::Ns, self.ns.len()),
            (SweptAxis::Na, self.na.len()),
            (SweptAxis::Snr, self.snr_db.as_ref().map_or(1, Axis::len)),
        ];
        if let Some((_, _)) = lens.iter().find(|(_, n)| *n == 0) {
            return Err(SimError::Spec("axis lists must not be empty".into()));
        }
        let swept: Vec<SweptAxis> = lens.iter().filter(|(_, n)| *n > 1).map(|(a, _)| *a).collect();
        match swept.as_slice() {
            [] => Ok(SweptAxis::Snr),
            [one] => Ok(*one),
            many => Err(SimError::Spec(format!("only one axis may be swept, found {many:?}"))),
        }
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>, SimError> {
        let axis = self.swept_axis()?;
        let first = |a: &Axis<usize>| a.values()[0];
        let base = SweepPoint {
            nt: first(&self.nt),
            nr: first(&self.nr),
            ns: first(&self.ns),
            na: first(&self.na),
            snr_db: self.snr_db.as_ref().map(|a| a.values()[0]),
        };
        let points = match axis {
            SweptAxis::Nt => self.nt.values().into_iter().map(|nt| SweepPoint { nt, ..base }).collect(),
            SweptAxis::Nr => self.nr.values().into_iter().map(|nr| SweepPoint { nr, ..base }).collect(),
            SweptAxis::Ns => self.ns.values().into_iter().map(|ns| SweepPoint { ns, ..base }).collect(),
            SweptAxis::Na => self.na.values().into_iter().map(|na| SweepPoint { na, ..base }).collect(),
            SweptAxis::Snr => match &self.snr_db {
                Some(a) => a.values().into_iter().map(|s| SweepPoint { snr_db: Some(s), ..base }).collect(),
                None => vec![base],
            },
        };
        Ok(points)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.algorithms.is_empty() {
            return Err(SimError::Spec("no algorithms listed".into()));
        }
        for a in &self.algorithms {
            if !a.supports(self.scenario) {
                return Err(SimError::Spec(format!("algorithm `{a}` is not available for scenario {}", self.scenario)));
            }
        }
        if self.realizations == Some(0) {
            return Err(SimError::Spec("realizations must be at least 1".into()));
        }
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(SimError::Spec(format!("power must be positive, got {}", self.power)));
        }
        if self.num_paths == 0 {
            return Err(SimError::Spec("num_paths must be at least 1".into()));
        }
        match (&self.channel_source, &self.snr_db) {
            (ChannelSource::Geometric, None) => {
                return Err(SimError::Spec("geometric channels need snr_db".into()));
            }
            (ChannelSource::File(_), Some(_)) => {
                return Err(SimError::Spec(
                    "snr_db cannot be set for file channels; the file's noise_power applies".into(),
                ));
            }
            _ => {}
        }
        if let Some(snr) = &self.snr_db {
            if snr.values().iter().any(|s| !s.is_finite()) {
                return Err(SimError::Spec("snr_db values must be finite".into()));
            }
        }
        let mut cfg = SolverConfig::new(self.power, 1.0);
        self.solver.apply(&mut cfg);
        cfg.validate().map_err(|e| SimError::Spec(format!("solver settings: {e}")))?;
        for p in self.points()? {
            self.check_point(&p)?;
        }
        Ok(())
    }

    fn check_point(&self, p: &SweepPoint) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Spec(msg));
        if p.nt == 0 || p.nr == 0 || p.ns == 0 || p.na == 0 {
            return bad("dimensions must be positive".into());
        }
        if !p.nt.is_multiple_of(p.na) {
            return bad(format!("na={} does not divide nt={}", p.na, p.nt));
        }
        if p.ns > p.na {
            return bad(format!("ns={} exceeds na={}", p.ns, p.na));
        }
        let has = |a: Algorithm| self.algorithms.contains(&a);
        match self.scenario {
            Scenario::Su => {
                if p.ns > p.nr {
                    return bad(format!("ns={} exceeds nr={}", p.ns, p.nr));
                }
                if (has(Algorithm::SaWmmse) || has(Algorithm::TxRxZf)) && p.ns != p.na {
                    return bad("sa-wmmse and txrx-zf need ns = na".into());
                }
            }
            Scenario::Mu => {
                if p.ns != p.nr {
                    return bad(format!("multi-user runs serve one stream per user: ns={} but nu={}", p.ns, p.nr));
                }
                if (has(Algorithm::SaWmmse) || has(Algorithm::SaZf)) && p.na != p.nr {
                    return bad("sa-wmmse and sa-zf need one subarray per user (na = nu)".into());
                }
            }
        }
        Ok(())
    }
}

pub fn load_spec(path: &Path) -> Result<SweepSpec, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Spec(format!("{}: {e}", path.display())))?;
    SweepSpec::from_toml(&text).map_err(|e| match e {
        SimError::Spec(msg) => SimError::Spec(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Command-line replacements for spec fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub realizations: Option<usize>,
    pub snr_db: Option<Vec<f64>>,
    pub nt: Option<Vec<usize>>,
    pub algorithms: Option<Vec<Algorithm>>,
}

fn axis_of<T>(mut xs: Vec<T>) -> Axis<T> {
    if xs.len() == 1 {
        Axis::One(xs.remove(0))
    } else {
        Axis::Many(xs)
    }
}

impl Overrides {
    pub fn apply(self, mut spec: SweepSpec) -> Result<SweepSpec, SimError> {
        if let Some(seed) = self.seed {
            spec.master_seed = seed;
        }
        if let Some(r) = self.realizations {
            spec.realizations = Some(r);
        }
        if let Some(snr) = self.snr_db {
            spec.snr_db = Some(axis_of(snr));
        }
        if let Some(nt) = self.nt {
            spec.nt = axis_of(nt);
        }
        if let Some(algos) = self.algorithms {
            spec.algorithms = algos;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG5: &str = r#"
scenario = "su"
algorithms = ["digital-svd", "analog-svd", "fa-wmmse", "sa-wmmse", "txrx-zf"]
nt = 64
nr = 4
ns = 4
na = 4
snr_db = [-10, -5, 0, 5, 10, 15]
master_seed = 3
"#;

    #[test]
    fn parses_defaults() {
        let spec = SweepSpec::from_toml(FIG5).unwrap();
        assert_eq!(spec.realizations, None);
        assert_eq!(spec.power, 1.0);
        assert_eq!(spec.num_paths, 5);
        assert!(spec.timing);
        assert_eq!(spec.channel_source, ChannelSource::Geometric);
        assert_eq!(spec.swept_axis().unwrap(), SweptAxis::Snr);
        assert_eq!(spec.points().unwrap().len(), 6);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut spec = SweepSpec::from_toml(FIG5).unwrap();
        spec.solver.max_iters = Some(50);
        spec.realizations = Some(7);
        spec.timing = false;
        let again = SweepSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn unknown_tag_is_named() {
        let err = SweepSpec::from_toml(&FIG5.replace("txrx-zf", "magic-bf")).unwrap_err();
        assert!(err.to_string().contains("magic-bf"), "{err}");
    }

    #[test]
    fn rejects_two_swept_axes() {
        let err = SweepSpec::from_toml(&FIG5.replace("nt = 64", "nt = [32, 64]")).unwrap_err();
        assert!(err.to_string().contains("only one axis"), "{err}");
    }

    #[test]
    fn nu_alias_and_mu_checks() {
        let mu = r#"
scenario = "mu"
algorithms = ["digital-zf", "sa-zf"]
nt = [16, 32, 64]
nu = 4
ns = 4
na = 4
snr_db = 5
"#;
        let spec = SweepSpec::from_toml(mu).unwrap();
        assert_eq!(spec.swept_axis().unwrap(), SweptAxis::Nt);
        assert!(SweepSpec::from_toml(&mu.replace("\"sa-zf\"", "\"txrx-zf\"")).is_err());
    }

    #[test]
    fn file_source_forbids_snr() {
        let text = FIG5.replace("snr_db = [-10, -5, 0, 5, 10, 15]", "channel_source = \"file:chan.json\"");
        let spec = SweepSpec::from_toml(&text).unwrap();
        assert_eq!(spec.channel_source, ChannelSource::File("chan.json".into()));
        assert!(SweepSpec::from_toml(&format!("{text}\nsnr_db = 5")).is_err());
        assert!(SweepSpec::from_toml(&FIG5.replace("snr_db = [-10, -5, 0, 5, 10, 15]", "")).is_err());
    }

    #[test]
    fn overrides_replace_fields() {
        let spec = SweepSpec::from_toml(FIG5).unwrap();
        let spec = Overrides {
            seed: Some(9),
            realizations: Some(2),
            snr_db: Some(vec![5.0]),
            nt: Some(vec![16, 32]),
            algorithms: Some(vec![Algorithm::DigitalSvd]),
        }
        .apply(spec)
        .unwrap();
        assert_eq!(spec.master_seed, 9);
        assert_eq!(spec.snr_db, Some(Axis::One(5.0)));
        assert_eq!(spec.swept_axis().unwrap(), SweptAxis::Nt);
    }

    #[test]
    fn rejects_bad_partition() {
        assert!(SweepSpec::from_toml(&FIG5.replace("na = 4", "na = 3")).is_err());
        assert!(SweepSpec::from_toml(&FIG5.replace("ns = 4", "ns = 5")).is_err());
    }
}
