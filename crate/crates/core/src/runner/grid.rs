//! Grid specifications, the grid file format and deterministic expansion.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DegradationConfig, PsfFamily, PsfSpec, Snr, DEFAULT_CLIP};
use crate::error::{Error, Result};
use crate::method::MethodSpec;

/// The canned six-point-by-ten-PSF study as a grid file.
pub const STUDY70_TOML: &str = include_str!("../../assets/grids/study70.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub dataset_id: String,
    /// Cube file (native, NPY or MAT).
    pub path: PathBuf,
    /// Optional wavelength sidecar; required when the cube file carries none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    Cartesian,
    /// `srfs`, `factors`, `lr_snrs_db` and `msi_snrs_db` advance together;
    /// an axis of length one is repeated for every point.
    Zipped,
}

fn default_clip() -> (f64, f64) {
    DEFAULT_CLIP
}

/// A declarative experiment grid. Field names are the grid file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub base_seed: u64,
    #[serde(default)]
    pub pairing: Pairing,
    pub srfs: Vec<String>,
    pub factors: Vec<usize>,
    pub lr_snrs_db: Vec<Snr>,
    pub msi_snrs_db: Vec<Snr>,
    #[serde(default = "default_clip")]
    pub clip_percentiles: (f64, f64),
    #[serde(default)]
    pub datasets: Vec<DatasetSpec>,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
    pub psfs: Vec<PsfSpec>,
}

/// One expanded run. `run_index` is the position in expansion order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub run_index: u64,
    pub dataset_id: String,
    pub method: MethodSpec,
    pub config: DegradationConfig,
}

impl GridSpec {
    /// Checks every list is nonempty, zipped axes agree in length and every
    /// entry is individually valid.
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("datasets", self.datasets.len()),
            ("methods", self.methods.len()),
            ("psfs", self.psfs.len()),
            ("srfs", self.srfs.len()),
            ("factors", self.factors.len()),
            ("lr_snrs_db", self.lr_snrs_db.len()),
            ("msi_snrs_db", self.msi_snrs_db.len()),
        ];
        for (name, len) in lists {
            if len == 0 {
                return Err(Error::Config(format!("`{name}` must be nonempty")));
            }
        }
        if self.pairing == Pairing::Zipped {
            self.zipped_len()?;
        }
        if let Some(f) = self.factors.iter().find(|f| **f == 0) {
            return Err(Error::Config(format!("factor {f} must be >= 1")));
        }
        for m in &self.methods {
            m.validate()?;
        }
        let mut ids: Vec<&str> = self.datasets.iter().map(|d| d.dataset_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate dataset_id `{}`", w[0])));
        }
        let mut mids: Vec<&str> = self.methods.iter().map(|m| m.method_id.as_str()).collect();
        mids.sort_unstable();
        if let Some(w) = mids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate method_id `{}`", w[0])));
        }
        DegradationConfig {
            clip_percentiles: self.clip_percentiles,
            ..DegradationConfig::new(PsfSpec::new(PsfFamily::Delta), "", 1, 0)
        }
        .validate()
    }

    fn zipped_len(&self) -> Result<usize> {
        let axes = [
            ("srfs", self.srfs.len()),
            ("factors", self.factors.len()),
            ("lr_snrs_db", self.lr_snrs_db.len()),
            ("msi_snrs_db", self.msi_snrs_db.len()),
        ];
        let n = axes.iter().map(|a| a.1).max().unwrap_or(0);
        for (name, len) in axes {
            if len != n && len != 1 {
                return Err(Error::Config(format!(
                    "zipped pairing: `{name}` has {len} entries, expected {n} (or 1)"
                )));
            }
        }
        Ok(n)
    }

    /// The degradation points shared by every (dataset, method, psf).
    fn operating_points(&self) -> Result<Vec<(String, usize, Snr, Snr)>> {
        match self.pairing {
            Pairing::Zipped => {
                let n = self.zipped_len()?;
                let pick = |len: usize, i: usize| if len == 1 { 0 } else { i };
                Ok((0..n)
                    .map(|i| {
                        (
                            self.srfs[pick(self.srfs.len(), i)].clone(),
                            self.factors[pick(self.factors.len(), i)],
                            self.lr_snrs_db[pick(self.lr_snrs_db.len(), i)],
                            self.msi_snrs_db[pick(self.msi_snrs_db.len(), i)],
                        )
                    })
                    .collect())
            }
            Pairing::Cartesian => {
                let mut points = Vec::new();
                for srf in &self.srfs {
                    for factor in &self.factors {
                        for lr in &self.lr_snrs_db {
                            for msi in &self.msi_snrs_db {
                                points.push((srf.clone(), *factor, *lr, *msi));
                            }
                        }
                    }
                }
                Ok(points)
            }
        }
    }
}

/// Per-run seed: the first eight bytes (little-endian) of a SHA-256 over the
/// run's identity. The method is deliberately excluded so every method sees
/// the same noisy observations.
pub fn derive_seed(base_seed: u64, dataset_id: &str, psf: &PsfSpec, srf: &str, factor: usize, lr: Snr, msi: Snr) -> u64 {
    let identity = format!("{base_seed}|{dataset_id}|{}|{srf}|{factor}|{lr}|{msi}", psf.canonical());
    let digest = Sha256::digest(identity.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Expands a grid in deterministic order: dataset, method, psf, then the
/// operating points (srf, factor, lr_snr, msi_snr in cartesian mode, or the
/// zipped sequence).
pub fn expand_grid(spec: &GridSpec) -> Result<Vec<GridRun>> {
    spec.validate()?;
    let points = spec.operating_points()?;
    let mut runs = Vec::with_capacity(
        spec.datasets.len() * spec.methods.len() * spec.psfs.len() * points.len(),
    );
    for dataset in &spec.datasets {
        for method in &spec.methods {
            for psf in &spec.psfs {
                for (srf, factor, lr, msi) in &points {
                    let seed = derive_seed(spec.base_seed, &dataset.dataset_id, psf, srf, *factor, *lr, *msi);
                    let config = DegradationConfig {
                        clip_percentiles: spec.clip_percentiles,
                        ..DegradationConfig::new(psf.clone(), srf.clone(), *factor, seed).with_snr(*lr, *msi)
                    };
                    runs.push(GridRun {
                        run_index: runs.len() as u64,
                        dataset_id: dataset.dataset_id.clone(),
                        method: method.clone(),
                        config,
                    });
                }
            }
        }
    }
    Ok(runs)
}

/// The published study: every PSF family at its defaults crossed with seven
/// zipped (factor, sensor, LR SNR) points and a fixed 40 dB multispectral
/// SNR. Datasets and methods are left empty for the user.
pub fn canned_study_spec() -> GridSpec {
    GridSpec {
        base_seed: 0,
        pairing: Pairing::Zipped,
        srfs: ["ikonos-4", "ikonos-3", "ikonos-4", "worldview2-8", "worldview3-16", "ikonos-4", "ikonos-4"]
            .map(String::from)
            .to_vec(),
        factors: vec![4, 8, 8, 8, 8, 16, 32],
        lr_snrs_db: [35.0, 30.0, 30.0, 30.0, 30.0, 25.0, 20.0].map(Snr::db).to_vec(),
        msi_snrs_db: vec![Snr::db(40.0)],
        clip_percentiles: DEFAULT_CLIP,
        datasets: Vec::new(),
        methods: Vec::new(),
        psfs: PsfFamily::ALL.map(PsfSpec::new).to_vec(),
    }
}

pub fn parse_grid(text: &str) -> Result<GridSpec> {
    toml::from_str(text).map_err(|e| Error::Config(format!("grid file: {e}")))
}

pub fn grid_to_toml(spec: &GridSpec) -> Result<String> {
    toml::to_string(spec).map_err(|e| Error::Config(format!("grid serialization: {e}")))
}

/// Reads a grid file. Relative dataset and wavelength paths are resolved
/// against the file's directory.
pub fn load_grid(path: &Path) -> Result<GridSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut spec = parse_grid(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for d in &mut spec.datasets {
        if d.path.is_relative() {
            d.path = base.join(&d.path);
        }
        if let Some(w) = d.wavelengths.as_mut().filter(|w| w.is_relative()) {
            *w = base.join(&*w);
        }
    }
    Ok(spec)
}
