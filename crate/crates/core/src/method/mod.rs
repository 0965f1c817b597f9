//! Reconstruction methods: two in-process baselines and an external
//! subprocess protocol.
//!
//! # Workdir protocol (`hb-proto-1`)
//!
//! For an external method the runner fills an empty directory with
//!
//! | file          | contents                                       |
//! |---------------|------------------------------------------------|
//! | `lr_hsi.npy`  | `h x w x C`, `<f8`, C order                    |
//! | `hr_msi.npy`  | `H x W x c`, `<f8`, C order                    |
//! | `srf.npy`     | `c x C`, `<f8`                                 |
//! | `psf.npy`     | `k x k`, `<f8`                                 |
//! | `meta.json`   | degradation context, see [`PROTOCOL_VERSION`]  |
//!
//! and runs the command with the directory appended as its final argument.
//! Exit code 0 means success; the method must then have written
//! `recon.npy` of shape `H x W x C` (`<f4` or `<f8`). Standard output and
//! error are captured to `stdout.log` and `stderr.log`.

mod builtin;

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::DegradationConfig;
use crate::cube::HsiCube;
use crate::degrade::ObservationPair;
use crate::error::{Error, Result};
use crate::io::{self, npy, Dtype};
use crate::psf::PsfKernel;
use crate::report::RunStatus;
use crate::srf::SrfMatrix;

pub use builtin::{bilinear_upsample, builtin_regression, builtin_upsample};

/// Value of the `protocol` key in `meta.json`.
pub const PROTOCOL_VERSION: &str = "hb-proto-1";

pub const DEFAULT_TIMEOUT_S: f64 = 3600.0;

/// Bytes of captured standard error kept in a failure message.
const STDERR_TAIL: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    BuiltinUpsample,
    BuiltinRegression,
    External,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method_id: String,
    pub kind: MethodKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

impl MethodSpec {
    pub fn builtin_upsample() -> Self {
        MethodSpec {
            method_id: "upsample".into(),
            kind: MethodKind::BuiltinUpsample,
            command: Vec::new(),
            timeout_s: DEFAULT_TIMEOUT_S,
        }
    }

    pub fn builtin_regression() -> Self {
        MethodSpec {
            method_id: "regression".into(),
            kind: MethodKind::BuiltinRegression,
            command: Vec::new(),
            timeout_s: DEFAULT_TIMEOUT_S,
        }
    }

    pub fn external(method_id: impl Into<String>, command: Vec<String>) -> Self {
        MethodSpec {
            method_id: method_id.into(),
            kind: MethodKind::External,
            command,
            timeout_s: DEFAULT_TIMEOUT_S,
        }
    }

    pub fn with_timeout(mut self, timeout_s: f64) -> Self {
        self.timeout_s = timeout_s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.method_id.trim().is_empty() {
            return Err(Error::param("method_id", "must be nonempty"));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(Error::param("timeout_s", "must be positive"));
        }
        if self.kind == MethodKind::External && self.command.is_empty() {
            return Err(Error::param("command", "external methods need a nonempty command"));
        }
        Ok(())
    }
}

/// Why a method produced no usable reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodFailure {
    /// `MethodError` or `Timeout`.
    pub status: RunStatus,
    pub message: String,
}

impl MethodFailure {
    fn error(message: impl Into<String>) -> Self {
        MethodFailure {
            status: RunStatus::MethodError,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for MethodFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.status, self.message)
    }
}

impl std::error::Error for MethodFailure {}

/// Runs one method on one observation pair. The reconstruction is checked
/// to have the reference shape and finite values.
pub fn run_method(
    spec: &MethodSpec,
    pair: &ObservationPair,
    srf: &SrfMatrix,
    kernel: &PsfKernel,
    config: &DegradationConfig,
    workdir: &Path,
) -> std::result::Result<HsiCube, MethodFailure> {
    spec.validate().map_err(|e| MethodFailure::error(e.to_string()))?;
    let recon = match spec.kind {
        MethodKind::BuiltinUpsample => {
            builtin_upsample(pair, pair.factor).map_err(|e| MethodFailure::error(e.to_string()))?
        }
        MethodKind::BuiltinRegression => builtin_regression(pair, srf, kernel, pair.factor)
            .map_err(|e| MethodFailure::error(e.to_string()))?,
        MethodKind::External => run_external(spec, pair, srf, kernel, config, workdir)?,
    };
    if recon.shape() != pair.gt.shape() {
        return Err(MethodFailure::error(format!(
            "reconstruction has shape {:?}, expected {:?}",
            recon.shape(),
            pair.gt.shape()
        )));
    }
    Ok(recon)
}

/// The `meta.json` document for a pair.
pub fn protocol_meta(
    pair: &ObservationPair,
    srf: &SrfMatrix,
    kernel: &PsfKernel,
    config: &DegradationConfig,
) -> serde_json::Value {
    let (h, w, big_c) = pair.gt.shape();
    let params: BTreeMap<&str, f64> = kernel.params().iter().map(|(k, v)| (k.as_str(), *v)).collect();
    json!({
        "protocol": PROTOCOL_VERSION,
        "factor": pair.factor,
        "lr_snr_db": config.lr_snr_db.value(),
        "msi_snr_db": config.msi_snr_db.value(),
        "realized_lr_snr_db": pair.realized_lr_snr_db,
        "realized_msi_snr_db": pair.realized_msi_snr_db,
        "seed": config.seed,
        "height": h,
        "width": w,
        "hsi_bands": big_c,
        "msi_bands": pair.hr_msi.bands(),
        "wavelengths_nm": pair.gt.wavelengths().map(<[f64]>::to_vec).unwrap_or_else(|| srf.source_wavelengths().to_vec()),
        "psf_family": kernel.family().name(),
        "psf_params": params,
        "srf_sensor": srf.sensor(),
    })
}

/// Writes the five protocol input files into `workdir`.
pub fn write_workdir(
    pair: &ObservationPair,
    srf: &SrfMatrix,
    kernel: &PsfKernel,
    config: &DegradationConfig,
    workdir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
    io::write_cube_npy(&pair.lr_hsi, &workdir.join("lr_hsi.npy"), Dtype::F64)?;
    io::write_cube_npy(&pair.hr_msi, &workdir.join("hr_msi.npy"), Dtype::F64)?;
    let s = srf.weights();
    npy::write_npy(
        &workdir.join("srf.npy"),
        &[s.nrows(), s.ncols()],
        &s.iter().copied().collect::<Vec<_>>(),
        Dtype::F64,
    )?;
    let k = kernel.weights();
    npy::write_npy(
        &workdir.join("psf.npy"),
        &[k.nrows(), k.ncols()],
        &k.iter().copied().collect::<Vec<_>>(),
        Dtype::F64,
    )?;
    let meta = serde_json::to_vec_pretty(&protocol_meta(pair, srf, kernel, config)).expect("meta serializes");
    let path = workdir.join("meta.json");
    std::fs::write(&path, meta).map_err(|e| Error::io(&path, e))
}

fn tail(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap_or_default();
    let start = bytes.len().saturating_sub(STDERR_TAIL);
    String::from_utf8_lossy(&bytes[start..]).trim().to_string()
}

fn run_external(
    spec: &MethodSpec,
    pair: &ObservationPair,
    srf: &SrfMatrix,
    kernel: &PsfKernel,
    config: &DegradationConfig,
    workdir: &Path,
) -> std::result::Result<HsiCube, MethodFailure> {
    let setup = |e: Error| MethodFailure::error(format!("workdir setup failed: {e}"));
    if let Ok(mut entries) = std::fs::read_dir(workdir) {
        if entries.next().is_some() {
            return Err(MethodFailure::error(format!("workdir {} is not empty", workdir.display())));
        }
    }
    write_workdir(pair, srf, kernel, config, workdir).map_err(setup)?;

    let stdout_path = workdir.join("stdout.log");
    let stderr_path = workdir.join("stderr.log");
    let open = |p: &Path| File::create(p).map_err(|e| setup(Error::io(p, e)));
    let mut child = Command::new(&spec.command[0])
        .args(&spec.command[1..])
        .arg(workdir)
        .stdin(Stdio::null())
        .stdout(open(&stdout_path)?)
        .stderr(open(&stderr_path)?)
        .spawn()
        .map_err(|e| MethodFailure::error(format!("failed to start `{}`: {e}", spec.command[0])))?;

    let deadline = Instant::now() + Duration::from_secs_f64(spec.timeout_s);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(MethodFailure {
                    status: RunStatus::Timeout,
                    message: format!("killed after {} s", spec.timeout_s),
                });
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(MethodFailure::error(format!("waiting for method: {e}"))),
        }
    };
    if !status.success() {
        let code = status.code().map_or_else(|| "a signal".to_string(), |c| format!("code {c}"));
        return Err(MethodFailure::error(format!(
            "method exited with {code}; stderr tail: {}",
            tail(&stderr_path)
        )));
    }

    let recon_path = workdir.join("recon.npy");
    let arr = npy::read_npy(&recon_path).map_err(|e| MethodFailure::error(format!("recon.npy: {e}")))?;
    let expected = pair.gt.shape();
    if arr.shape != [expected.0, expected.1, expected.2] {
        return Err(MethodFailure::error(format!(
            "recon.npy has shape {:?}, expected {:?}",
            arr.shape, expected
        )));
    }
    let data = io::array3_from_npy(arr).map_err(|e| MethodFailure::error(e.to_string()))?;
    HsiCube::new(data, pair.gt.wavelengths().map(<[f64]>::to_vec))
        .map_err(|e| MethodFailure::error(format!("recon.npy: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{PsfFamily, PsfSpec};
    use crate::degrade::generate_pair;
    use crate::psf::make_kernel;

    fn identity_setup() -> (ObservationPair, SrfMatrix, PsfKernel, DegradationConfig) {
        let wl: Vec<f64> = (0..4).map(|i| 500.0 + 10.0 * i as f64).collect();
        let gt = HsiCube::new(
            ndarray::Array3::from_shape_fn((6, 6, 4), |(r, c, b)| ((r * 7 + c * 3 + b) % 11) as f64 / 10.0),
            Some(wl.clone()),
        )
        .unwrap();
        let srf = SrfMatrix::identity(wl).unwrap();
        let config = DegradationConfig::new(PsfSpec::new(PsfFamily::Delta), "identity", 1, 5);
        let kernel = make_kernel(&config.psf).unwrap();
        let pair = generate_pair(&gt, &config, &srf).unwrap();
        (pair, srf, kernel, config)
    }

    #[test]
    fn spec_serde_uses_snake_case() {
        let spec = MethodSpec::external("ext", vec!["python3".into(), "m.py".into()]);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"external\""), "{text}");
        let back: MethodSpec = serde_json::from_str(r#"{"method_id":"u","kind":"builtin_upsample"}"#).unwrap();
        assert_eq!(back.timeout_s, DEFAULT_TIMEOUT_S);
        assert_eq!(back.kind, MethodKind::BuiltinUpsample);
    }

    #[test]
    fn external_needs_command() {
        let spec = MethodSpec::external("ext", Vec::new());
        assert!(spec.validate().unwrap_err().to_string().contains("command"));
        assert!(MethodSpec::builtin_upsample().with_timeout(0.0).validate().is_err());
    }

    #[test]
    fn upsample_on_identity_pair_reproduces_gt() {
        let (pair, srf, kernel, config) = identity_setup();
        let dir = tempfile::tempdir().unwrap();
        let recon = run_method(&MethodSpec::builtin_upsample(), &pair, &srf, &kernel, &config, dir.path()).unwrap();
        assert_eq!(recon.as_slice(), pair.gt.as_slice());
    }

    #[test]
    fn regression_with_identity_srf_is_near_identity() {
        let (pair, srf, kernel, config) = identity_setup();
        let dir = tempfile::tempdir().unwrap();
        let recon =
            run_method(&MethodSpec::builtin_regression(), &pair, &srf, &kernel, &config, dir.path()).unwrap();
        let rmse = crate::metrics::rmse(&pair.gt, &recon).unwrap();
        assert!(rmse <= 1e-4, "{rmse}");
    }

    #[cfg(unix)]
    #[test]
    fn failing_command_is_method_error() {
        let (pair, srf, kernel, config) = identity_setup();
        let dir = tempfile::tempdir().unwrap();
        let spec = MethodSpec::external("f", vec!["false".into()]);
        let err = run_method(&spec, &pair, &srf, &kernel, &config, &dir.path().join("w")).unwrap_err();
        assert_eq!(err.status, RunStatus::MethodError);
        for f in ["lr_hsi.npy", "hr_msi.npy", "srf.npy", "psf.npy", "meta.json"] {
            assert!(dir.path().join("w").join(f).exists(), "{f}");
        }
    }

    #[cfg(unix)]
    #[test]
    fn stderr_tail_is_captured() {
        let (pair, srf, kernel, config) = identity_setup();
        let dir = tempfile::tempdir().unwrap();
        let spec = MethodSpec::external("sh", vec!["sh".into(), "-c".into(), "echo boom >&2; exit 4".into()]);
        let err = run_method(&spec, &pair, &srf, &kernel, &config, dir.path()).unwrap_err();
        assert!(err.message.contains("code 4") && err.message.contains("boom"), "{}", err.message);
    }

    #[cfg(unix)]
    #[test]
    fn slow_command_times_out() {
        let (pair, srf, kernel, config) = identity_setup();
        let dir = tempfile::tempdir().unwrap();
        let spec = MethodSpec::external("slow", vec!["sleep".into()]).with_timeout(0.2);
        // `sleep <workdir>` fails fast, so wrap it in a shell that ignores the argument
        let spec = MethodSpec {
            command: vec!["sh".into(), "-c".into(), "sleep 5".into()],
            ..spec
        };
        let start = Instant::now();
        let err = run_method(&spec, &pair, &srf, &kernel, &config, dir.path()).unwrap_err();
        assert_eq!(err.status, RunStatus::Timeout);
        assert!(start.elapsed() < Duration::from_secs(4));
    }

    #[cfg(unix)]
    #[test]
    fn missing_recon_is_method_error() {
        let (pair, srf, kernel, config) = identity_setup();
        let dir = tempfile::tempdir().unwrap();
        let spec = MethodSpec::external("noop", vec!["true".into()]);
        let err = run_method(&spec, &pair, &srf, &kernel, &config, dir.path()).unwrap_err();
        assert!(err.message.contains("recon.npy"), "{}", err.message);
    }

    #[test]
    fn workdir_files_reproduce_inputs_exactly() {
        let (pair, srf, kernel, config) = identity_setup();
        let dir = tempfile::tempdir().unwrap();
        write_workdir(&pair, &srf, &kernel, &config, dir.path()).unwrap();
        let lr = npy::read_npy(&dir.path().join("lr_hsi.npy")).unwrap();
        assert_eq!(lr.data, pair.lr_hsi.as_slice());
        let s = npy::read_npy(&dir.path().join("srf.npy")).unwrap();
        assert_eq!(s.shape, vec![4, 4]);
        let meta: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("meta.json")).unwrap()).unwrap();
        for key in [
            "factor", "lr_snr_db", "msi_snr_db", "seed", "height", "width", "hsi_bands", "msi_bands",
            "wavelengths_nm", "psf_family",
        ] {
            assert!(meta.get(key).is_some(), "{key}");
        }
        assert_eq!(meta["protocol"], PROTOCOL_VERSION);
        assert_eq!(meta["psf_family"], "delta");
    }
}
