//! Experiment configuration types: PSF specifications, SNR levels and the
//! fully specified degradation point.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsfFamily {
    Gaussian,
    Kolmogorov,
    Airy,
    Moffat,
    Sinc,
    LorentzianSq,
    Hermite,
    Parabolic,
    Gabor,
    Delta,
}

impl PsfFamily {
    pub const ALL: [PsfFamily; 10] = [
        PsfFamily::Gaussian,
        PsfFamily::Kolmogorov,
        PsfFamily::Airy,
        PsfFamily::Moffat,
        PsfFamily::Sinc,
        PsfFamily::LorentzianSq,
        PsfFamily::Hermite,
        PsfFamily::Parabolic,
        PsfFamily::Gabor,
        PsfFamily::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PsfFamily::Gaussian => "gaussian",
            PsfFamily::Kolmogorov => "kolmogorov",
            PsfFamily::Airy => "airy",
            PsfFamily::Moffat => "moffat",
            PsfFamily::Sinc => "sinc",
            PsfFamily::LorentzianSq => "lorentzian_sq",
            PsfFamily::Hermite => "hermite",
            PsfFamily::Parabolic => "parabolic",
            PsfFamily::Gabor => "gabor",
            PsfFamily::Delta => "delta",
        }
    }

    /// Families whose kernels have the full dihedral symmetry of the square grid.
    pub fn is_isotropic(self) -> bool {
        !matches!(self, PsfFamily::Gabor)
    }
}

impl fmt::Display for PsfFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PsfFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PsfFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::param("psf", format!("unknown PSF family `{s}`")))
    }
}

/// A PSF family plus optional kernel size and parameter overrides.
///
/// Parameters not listed in `params` take the family defaults (see
/// [`crate::psf`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfSpec {
    pub family: PsfFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl PsfSpec {
    pub fn new(family: PsfFamily) -> Self {
        PsfSpec {
            family,
            size: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_size(mut self, size: usize) -> Self {
        self.size = Some(size);
        self
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    /// Stable textual identity used for caching and seed derivation.
    pub fn canonical(&self) -> String {
        let params = self
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v:?}"))
            .collect::<Vec<_>>()
            .join(",");
        match self.size {
            Some(size) => format!("{}[size={size}]({params})", self.family),
            None => format!("{}({params})", self.family),
        }
    }
}

/// A signal-to-noise level in decibels, or no noise at all.
///
/// Serialized as a number, or as the string `"none"` for the noise-free case.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Snr(pub Option<f64>);

impl Snr {
    pub const NONE: Snr = Snr(None);

    pub fn db(value: f64) -> Self {
        Snr(Some(value))
    }

    pub fn value(self) -> Option<f64> {
        self.0
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("none"),
        }
    }
}

impl FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(Snr::NONE);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::param("snr", format!("expected a number or `none`, got `{s}`")))?;
        if !v.is_finite() {
            return Err(Error::param("snr", "SNR must be finite"));
        }
        Ok(Snr::db(v))
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => serializer.serialize_f64(v),
            None => serializer.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(v) => Ok(Snr::db(v as f64)),
            Raw::Num(v) if v.is_finite() => Ok(Snr::db(v)),
            Raw::Num(_) => Err(serde::de::Error::custom("SNR must be finite")),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub const DEFAULT_CLIP: (f64, f64) = (1.0, 99.0);

fn default_clip() -> (f64, f64) {
    DEFAULT_CLIP
}

/// One fully specified experiment point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationConfig {
    pub psf: PsfSpec,
    /// Shipped sensor identifier or path to an SRF curve file.
    pub srf: String,
    pub factor: usize,
    pub lr_snr_db: Snr,
    pub msi_snr_db: Snr,
    pub seed: u64,
    #[serde(default = "default_clip")]
    pub clip_percentiles: (f64, f64),
}

impl DegradationConfig {
    pub fn new(psf: PsfSpec, srf: impl Into<String>, factor: usize, seed: u64) -> Self {
        DegradationConfig {
            psf,
            srf: srf.into(),
            factor,
            lr_snr_db: Snr::NONE,
            msi_snr_db: Snr::NONE,
            seed,
            clip_percentiles: DEFAULT_CLIP,
        }
    }

    pub fn with_snr(mut self, lr: Snr, msi: Snr) -> Self {
        self.lr_snr_db = lr;
        self.msi_snr_db = msi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.factor < 1 {
            return Err(Error::param("factor", "must be >= 1"));
        }
        for (name, snr) in [("lr_snr_db", self.lr_snr_db), ("msi_snr_db", self.msi_snr_db)] {
            if let Some(v) = snr.0 {
                if !v.is_finite() {
                    return Err(Error::param(name, "must be finite"));
                }
            }
        }
        let (lo, hi) = self.clip_percentiles;
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
            return Err(Error::param(
                "clip_percentiles",
                format!("need 0 <= lo < hi <= 100, got ({lo}, {hi})"),
            ));
        }
        Ok(())
    }
}
