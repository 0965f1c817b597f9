//! Metric reports and logged experiment records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::DegradationConfig;
use crate::error::{Error, Result};

/// The six reconstruction-quality values for one run.
///
/// `psnr_db` is `f64::INFINITY` exactly when `rmse` is zero; logs render
/// it as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub uiqi: f64,
    pub ergas: f64,
    pub sam_deg: f64,
}

impl MetricReport {
    pub const NAMES: [&'static str; 6] = ["rmse", "psnr_db", "ssim", "uiqi", "ergas", "sam_deg"];

    pub fn values(&self) -> [f64; 6] {
        [
            self.rmse,
            self.psnr_db,
            self.ssim,
            self.uiqi,
            self.ergas,
            self.sam_deg,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid metric report: {what}")));
        if self.values().iter().any(|v| v.is_nan()) {
            return bad("NaN value");
        }
        if self.rmse < 0.0 || self.ergas < 0.0 {
            return bad("negative error");
        }
        if (self.rmse == 0.0) != (self.psnr_db == f64::INFINITY) {
            return bad("rmse = 0 must coincide with psnr = inf");
        }
        if !(0.0..=180.0).contains(&self.sam_deg) {
            return bad("sam outside [0, 180]");
        }
        if !(-1.0..=1.0).contains(&self.ssim) || !(-1.0..=1.0).contains(&self.uiqi) {
            return bad("ssim/uiqi outside [-1, 1]");
        }
        Ok(())
    }
}

/// Formats a metric value for logs: `inf` for the PSNR sentinel, otherwise
/// the shortest representation that parses back to the same `f64`.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

pub fn parse_metric(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        "" => None,
        t => t.parse().ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    MethodError,
    Timeout,
    MetricError,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::MethodError => "method_error",
            RunStatus::Timeout => "timeout",
            RunStatus::MetricError => "metric_error",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RunStatus::Ok),
            "method_error" => Ok(RunStatus::MethodError),
            "timeout" => Ok(RunStatus::Timeout),
            "metric_error" => Ok(RunStatus::MetricError),
            other => Err(Error::Format(format!("unknown status `{other}`"))),
        }
    }
}

/// One logged run. Metrics are present exactly when the status is `ok`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub run_index: u64,
    pub dataset_id: String,
    pub method_id: String,
    pub config: DegradationConfig,
    /// Effective PSF parameters (defaults filled in, including `size`).
    pub psf_params: String,
    metrics: Option<MetricReport>,
    status: RunStatus,
    pub wall_time_s: f64,
}

impl ExperimentRecord {
    pub fn ok(
        run_index: u64,
        dataset_id: impl Into<String>,
        method_id: impl Into<String>,
        config: DegradationConfig,
        psf_params: impl Into<String>,
        metrics: MetricReport,
        wall_time_s: f64,
    ) -> Self {
        ExperimentRecord {
            run_index,
            dataset_id: dataset_id.into(),
            method_id: method_id.into(),
            config,
            psf_params: psf_params.into(),
            metrics: Some(metrics),
            status: RunStatus::Ok,
            wall_time_s: wall_time_s.max(0.0),
        }
    }

    /// A record for a run that produced no metrics.
    ///
    /// # Panics
    /// If `status` is [`RunStatus::Ok`].
    pub fn failed(
        run_index: u64,
        dataset_id: impl Into<String>,
        method_id: impl Into<String>,
        config: DegradationConfig,
        psf_params: impl Into<String>,
        status: RunStatus,
        wall_time_s: f64,
    ) -> Self {
        assert_ne!(status, RunStatus::Ok, "failed record needs a non-ok status");
        ExperimentRecord {
            run_index,
            dataset_id: dataset_id.into(),
            method_id: method_id.into(),
            config,
            psf_params: psf_params.into(),
            metrics: None,
            status,
            wall_time_s: wall_time_s.max(0.0),
        }
    }

    pub fn status(&self) -> RunStatus {
        self.status
    }

    pub fn metrics(&self) -> Option<&MetricReport> {
        self.metrics.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{PsfFamily, PsfSpec};

    fn report() -> MetricReport {
        MetricReport {
            rmse: 0.0,
            psnr_db: f64::INFINITY,
            ssim: 1.0,
            uiqi: 1.0,
            ergas: 0.0,
            sam_deg: 0.0026,
        }
    }

    #[test]
    fn sentinel_formatting() {
        assert_eq!(format_metric(f64::INFINITY), "inf");
        assert_eq!(parse_metric("inf"), Some(f64::INFINITY));
        let v = 0.1 + 0.2;
        assert_eq!(parse_metric(&format_metric(v)), Some(v));
    }

    #[test]
    fn report_invariants() {
        assert!(report().validate().is_ok());
        let mut r = report();
        r.psnr_db = 40.0;
        assert!(r.validate().is_err());
        let mut r = report();
        r.sam_deg = 181.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn status_and_metrics_are_tied() {
        let cfg = DegradationConfig::new(PsfSpec::new(PsfFamily::Delta), "ikonos-4", 1, 3);
        let ok = ExperimentRecord::ok(0, "d", "m", cfg.clone(), "{}", report(), 1.0);
        assert_eq!(ok.status(), RunStatus::Ok);
        assert!(ok.metrics().is_some());
        let bad = ExperimentRecord::failed(1, "d", "m", cfg, "{}", RunStatus::Timeout, 2.0);
        assert!(bad.metrics().is_none());
    }

    #[test]
    #[should_panic]
    fn failed_record_rejects_ok_status() {
        let cfg = DegradationConfig::new(PsfSpec::new(PsfFamily::Delta), "ikonos-4", 1, 3);
        ExperimentRecord::failed(0, "d", "m", cfg, "{}", RunStatus::Ok, 0.0);
    }
}
